#include "sgsplat/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sgsplat {

namespace {

struct Bounds {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

Bounds primitive_bounds(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::kBox:
      return {p.min_corner, p.max_corner};
    case PrimitiveKind::kSphere:
      return {p.center.array() - p.radius, p.center.array() + p.radius};
    case PrimitiveKind::kCylinder:
      return {{p.center[0] - p.radius, p.center[1] - p.radius, p.z_min},
              {p.center[0] + p.radius, p.center[1] + p.radius, p.z_max}};
    case PrimitiveKind::kSlab:
      return {{-std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), p.z_min},
              {std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity(), p.z_max}};
  }
  throw InvalidInput("unknown primitive kind");
}

bool inside(const Primitive& p, const Eigen::Vector3d& x) {
  switch (p.kind) {
    case PrimitiveKind::kBox:
      return (x.array() >= p.min_corner.array()).all() &&
             (x.array() <= p.max_corner.array()).all();
    case PrimitiveKind::kSphere:
      return (x - p.center).squaredNorm() <= p.radius * p.radius;
    case PrimitiveKind::kCylinder: {
      const double dx = x[0] - p.center[0];
      const double dy = x[1] - p.center[1];
      return dx * dx + dy * dy <= p.radius * p.radius && x[2] >= p.z_min &&
             x[2] <= p.z_max;
    }
    case PrimitiveKind::kSlab:
      return x[2] >= p.z_min && x[2] <= p.z_max;
  }
  return false;
}

}  // namespace

LabelGrid rasterize(const GridSpec& spec, std::span<const Primitive> shapes) {
  spec.validate();
  const Eigen::Vector3d grid_lo = spec.origin;
  const Eigen::Vector3d grid_hi =
      spec.origin +
      spec.resolution * Eigen::Vector3d(spec.nx, spec.ny, spec.nz);
  LabelGrid out = LabelGrid::zeros(spec, 1);
  for (const Primitive& p : shapes) {
    if (p.label == kIgnoreLabel) {
      throw InvalidInput("primitive label collides with the ignore label");
    }
    const Bounds b = primitive_bounds(p);
    if ((b.lo.array() > b.hi.array()).any()) {
      throw InvalidInput("primitive has empty extent");
    }
    const bool xy_unbounded = p.kind == PrimitiveKind::kSlab;
    for (int a = 0; a < 3; ++a) {
      if (xy_unbounded && a < 2) continue;
      if (b.lo[a] < grid_lo[a] - 1e-9 || b.hi[a] > grid_hi[a] + 1e-9) {
        throw InvalidInput("primitive extends outside the grid");
      }
    }
    // Index window from the bounds, then the exact center-inside test.
    int lo[3];
    int hi[3];
    for (int a = 0; a < 3; ++a) {
      if (xy_unbounded && a < 2) {
        lo[a] = 0;
        hi[a] = (a == 0 ? spec.nx : spec.ny) - 1;
        continue;
      }
      const double lo_f = (b.lo[a] - spec.origin[a]) / spec.resolution - 0.5;
      const double hi_f = (b.hi[a] - spec.origin[a]) / spec.resolution - 0.5;
      const int dim = a == 0 ? spec.nx : (a == 1 ? spec.ny : spec.nz);
      lo[a] = std::clamp(static_cast<int>(std::ceil(lo_f)) - 1, 0, dim - 1);
      hi[a] = std::clamp(static_cast<int>(std::floor(hi_f)) + 1, 0, dim - 1);
    }
    for (int i = lo[0]; i <= hi[0]; ++i) {
      for (int j = lo[1]; j <= hi[1]; ++j) {
        for (int k = lo[2]; k <= hi[2]; ++k) {
          if (inside(p, spec.center(i, j, k))) {
            out.at(i, j, k) = p.label;
          }
        }
      }
    }
  }
  return out;
}

GridSpec mini_street_spec() {
  GridSpec spec;
  spec.nx = 64;
  spec.ny = 64;
  spec.nz = 8;
  // Snapped to the nearest f32 so the value survives scene files unchanged.
  spec.resolution = static_cast<double>(0.2f);
  spec.origin = Eigen::Vector3d::Zero();
  return spec;
}

LabelGrid mini_street(std::uint64_t seed) {
  const GridSpec spec = mini_street_spec();
  const double ext_x = spec.nx * spec.resolution;  // 12.8 m
  Rng rng(seed);
  std::vector<Primitive> shapes;

  const auto box = [&](std::uint8_t label, double x0, double y0, double z0,
                       double x1, double y1, double z1) {
    Primitive p;
    p.kind = PrimitiveKind::kBox;
    p.label = label;
    p.min_corner = {x0, y0, z0};
    p.max_corner = {x1, y1, z1};
    shapes.push_back(p);
  };

  // Road band through the middle, slightly raised sidewalks on both curbs.
  box(1, 0.0, 4.4, 0.0, ext_x, 8.4, 0.2);
  box(2, 0.0, 3.2, 0.0, ext_x, 4.4, 0.4);
  box(2, 0.0, 8.4, 0.0, ext_x, 9.6, 0.4);

  // Building rows behind the sidewalks, seeded footprints and heights.
  for (int side = 0; side < 2; ++side) {
    double x = 0.4;
    while (x < ext_x - 2.8) {
      const double w = 2.0 + 0.2 * static_cast<double>(rng.uniform_int(0, 4));
      const double h = 1.0 + 0.2 * static_cast<double>(rng.uniform_int(0, 3));
      const double y0 = side == 0 ? 0.2 : 10.0;
      box(3, x, y0, 0.0, x + w, y0 + 2.6, h);
      x += w + 0.4 + 0.2 * static_cast<double>(rng.uniform_int(0, 2));
    }
  }

  // Parked cars on the road near each curb.
  for (int side = 0; side < 2; ++side) {
    double x = 0.8 + 0.2 * static_cast<double>(rng.uniform_int(0, 3));
    const double y0 = side == 0 ? 4.6 : 6.6;
    while (x < ext_x - 4.8) {
      box(4, x, y0, 0.2, x + 4.0, y0 + 1.6, 1.4);
      x += 4.0 + 1.0 + 0.2 * static_cast<double>(rng.uniform_int(0, 6));
    }
  }

  // Vegetation blobs and poles along the sidewalks.
  for (int side = 0; side < 2; ++side) {
    const double y_mid = side == 0 ? 3.8 : 9.0;
    for (double x = 1.5; x < ext_x - 1.0; x += 3.2) {
      const double jitter = 0.2 * static_cast<double>(rng.uniform_int(-1, 1));
      Primitive veg;
      veg.kind = PrimitiveKind::kSphere;
      veg.label = 5;
      veg.center = {x + jitter, y_mid, 0.9};
      veg.radius = 0.55;
      shapes.push_back(veg);
    }
    for (double x = 3.1; x < ext_x - 1.0; x += 6.4) {
      Primitive pole;
      pole.kind = PrimitiveKind::kCylinder;
      pole.label = 6;
      pole.center = {x, y_mid + (side == 0 ? -0.4 : 0.4), 0.0};
      pole.radius = 0.15;
      pole.z_min = 0.0;
      pole.z_max = 1.6;
      shapes.push_back(pole);
    }
  }

  return rasterize(spec, shapes);
}

FeatureVolume gen_features(const LabelGrid& labels, int channels,
                           double noise, std::uint64_t seed) {
  labels.spec.validate();
  int max_label = 0;
  for (const std::uint8_t l : labels.values) {
    if (l != kIgnoreLabel) max_label = std::max(max_label, static_cast<int>(l));
  }
  const int num_classes = max_label + 1;
  if (channels < num_classes) {
    throw InvalidInput("feature channels must cover every class");
  }
  if (noise < 0.0) throw InvalidInput("feature noise must be non-negative");

  // One unit-norm prototype per class from a class-keyed stream; the empty
  // prototype is shrunk so unoccupied space is nearly featureless.
  std::vector<std::vector<double>> prototypes(
      static_cast<std::size_t>(num_classes));
  for (int cls = 0; cls < num_classes; ++cls) {
    Rng proto_rng(seed * 1000003ull + static_cast<std::uint64_t>(cls));
    auto& proto = prototypes[static_cast<std::size_t>(cls)];
    proto.resize(static_cast<std::size_t>(channels));
    double norm_sq = 0.0;
    for (double& x : proto) {
      x = proto_rng.normal();
      norm_sq += x * x;
    }
    const double scale = (cls == 0 ? 0.1 : 1.0) / std::sqrt(norm_sq);
    for (double& x : proto) x *= scale;
  }

  FeatureVolume out = FeatureVolume::zeros(labels.spec, channels);
  Rng noise_rng(seed ^ 0x9e3779b97f4a7c15ull);
  const std::int64_t n = labels.spec.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    const std::uint8_t raw = labels.values[static_cast<std::size_t>(v)];
    const int cls = raw == kIgnoreLabel ? 0 : raw;
    const auto& proto = prototypes[static_cast<std::size_t>(cls)];
    double* f = out.voxel(v).data();
    for (int c = 0; c < channels; ++c) {
      f[c] = proto[static_cast<std::size_t>(c)];
      if (noise > 0.0) f[c] += noise * noise_rng.normal();
    }
  }
  return out;
}

}  // namespace sgsplat
