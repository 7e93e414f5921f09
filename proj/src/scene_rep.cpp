#include "sgsplat/scene_rep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgsplat {

TriPlane pool_tpv(const FeatureVolume& volume) {
  volume.spec.validate();
  const GridSpec& s = volume.spec;
  const int c = volume.channels;
  TriPlane p;
  p.spec = s;
  p.channels = c;
  p.xy.assign(static_cast<std::size_t>(s.nx) * s.ny * c, 0.0);
  p.yz.assign(static_cast<std::size_t>(s.ny) * s.nz * c, 0.0);
  p.zx.assign(static_cast<std::size_t>(s.nz) * s.nx * c, 0.0);
  for (int i = 0; i < s.nx; ++i) {
    for (int j = 0; j < s.ny; ++j) {
      for (int k = 0; k < s.nz; ++k) {
        const double* f = volume.voxel(s.linear_index(i, j, k)).data();
        double* xy = p.xy.data() + (static_cast<std::size_t>(i) * s.ny + j) * c;
        double* yz = p.yz.data() + (static_cast<std::size_t>(j) * s.nz + k) * c;
        double* zx = p.zx.data() + (static_cast<std::size_t>(k) * s.nx + i) * c;
        for (int ch = 0; ch < c; ++ch) {
          xy[ch] += f[ch];
          yz[ch] += f[ch];
          zx[ch] += f[ch];
        }
      }
    }
  }
  const double inv_z = 1.0 / s.nz;
  const double inv_x = 1.0 / s.nx;
  const double inv_y = 1.0 / s.ny;
  for (double& v : p.xy) v *= inv_z;
  for (double& v : p.yz) v *= inv_x;
  for (double& v : p.zx) v *= inv_y;
  return p;
}

FeatureVolume broadcast_tpv(const TriPlane& planes) {
  return broadcast_tpv(planes, planes.weights);
}

FeatureVolume broadcast_tpv(const TriPlane& planes,
                            const std::array<double, 3>& weights) {
  const GridSpec& s = planes.spec;
  const int c = planes.channels;
  for (double w : weights) {
    if (!std::isfinite(w)) throw InvalidInput("TPV weights must be finite");
  }
  FeatureVolume out = FeatureVolume::zeros(s, c);
  for (int i = 0; i < s.nx; ++i) {
    for (int j = 0; j < s.ny; ++j) {
      const double* xy = planes.xy.data() + (static_cast<std::size_t>(i) * s.ny + j) * c;
      for (int k = 0; k < s.nz; ++k) {
        const double* yz = planes.yz.data() + (static_cast<std::size_t>(j) * s.nz + k) * c;
        const double* zx = planes.zx.data() + (static_cast<std::size_t>(k) * s.nx + i) * c;
        double* f = out.voxel(s.linear_index(i, j, k)).data();
        for (int ch = 0; ch < c; ++ch) {
          f[ch] = weights[0] * xy[ch] + weights[1] * yz[ch] + weights[2] * zx[ch];
        }
      }
    }
  }
  return out;
}

ScalarGrid similarity(const FeatureVolume& a, const FeatureVolume& b,
                      SimilarityMode mode) {
  if (!(a.spec == b.spec) || a.channels != b.channels) {
    throw InvalidInput("similarity inputs must share shape");
  }
  ScalarGrid out = ScalarGrid::zeros(a.spec, 1);
  const std::int64_t n = a.spec.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    const double* fa = a.voxel(v).data();
    const double* fb = b.voxel(v).data();
    double dot = 0.0;
    for (int c = 0; c < a.channels; ++c) dot += fa[c] * fb[c];
    if (mode == SimilarityMode::kCosine) {
      double na = 0.0;
      double nb = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        na += fa[c] * fa[c];
        nb += fb[c] * fb[c];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      dot = (na < 1e-12 || nb < 1e-12) ? 0.0 : dot / (na * nb);
    }
    out.values[static_cast<std::size_t>(v)] = dot;
  }
  return out;
}

std::vector<std::uint32_t> select_anchors(const ScalarGrid& scores, int k) {
  const std::int64_t n = scores.spec.voxel_count();
  if (k <= 0 || k > n) {
    throw InvalidInput("anchor count must lie in [1, voxel count]");
  }
  const int take = k;
  std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0u);
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    const double sa = scores.values[a];
    const double sb = scores.values[b];
    if (sa != sb) return sa > sb;
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);
  order.resize(static_cast<std::size_t>(take));
  return order;
}

std::vector<double> gather_features(const FeatureVolume& volume,
                                    std::span<const std::uint32_t> anchors) {
  std::vector<double> out(anchors.size() * static_cast<std::size_t>(volume.channels));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (anchors[a] >= volume.values.size() / volume.channels) {
      throw InvalidInput("anchor index out of range");
    }
    const double* f = volume.voxel(anchors[a]).data();
    std::copy(f, f + volume.channels,
              out.data() + a * static_cast<std::size_t>(volume.channels));
  }
  return out;
}

LinearHead LinearHead::zeros(int rows, int cols) {
  LinearHead h;
  h.rows = rows;
  h.cols = cols;
  h.weight.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  h.bias.assign(static_cast<std::size_t>(rows), 0.0);
  h.validate();
  return h;
}

LinearHead LinearHead::random(int rows, int cols, double stddev,
                              std::uint64_t seed) {
  LinearHead h = zeros(rows, cols);
  Rng rng(seed);
  for (double& w : h.weight) w = stddev * rng.normal();
  return h;
}

void LinearHead::validate() const {
  if (rows <= 0 || cols <= 0) throw InvalidInput("head dims must be positive");
  if (weight.size() != static_cast<std::size_t>(rows) * cols ||
      bias.size() != static_cast<std::size_t>(rows)) {
    throw InvalidInput("head weight/bias size mismatch");
  }
}

void LinearHead::apply(std::span<const double> input,
                       std::span<double> output) const {
  if (input.size() != static_cast<std::size_t>(cols) ||
      output.size() != static_cast<std::size_t>(rows)) {
    throw InvalidInput("head apply size mismatch");
  }
  for (int r = 0; r < rows; ++r) {
    const double* w = weight.data() + static_cast<std::size_t>(r) * cols;
    double acc = bias[static_cast<std::size_t>(r)];
    for (int c = 0; c < cols; ++c) acc += w[c] * input[c];
    output[static_cast<std::size_t>(r)] = acc;
  }
}

GaussianActivations activate_gaussian(std::span<const double> raw,
                                      const Eigen::Vector3d& center,
                                      double resolution) {
  if (raw.size() != kGaussianRawDim) {
    throw InvalidInput("raw gaussian parameter vector must have 11 entries");
  }
  GaussianActivations a;
  for (int i = 0; i < 3; ++i) {
    a.mean[i] = center[i] + std::tanh(raw[i]) * resolution;
    const double sig = 1.0 / (1.0 + std::exp(-raw[3 + i]));
    a.scale[i] = kScaleMin + (kScaleMax - kScaleMin) * sig;
  }
  const Eigen::Vector4d q(raw[6], raw[7], raw[8], raw[9]);
  const double norm = q.norm();
  a.rotation = norm < 1e-8 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(q / norm);
  a.opacity = 1.0 / (1.0 + std::exp(-raw[10]));
  return a;
}

std::vector<SemanticGaussian> init_gaussians(
    const FeatureVolume& features, const GridSpec& spec,
    std::span<const std::uint32_t> anchors, const LinearHead& head) {
  head.validate();
  if (head.rows != kGaussianRawDim || head.cols != features.channels) {
    throw InvalidInput("gaussian head must map features to 11 raw values");
  }
  std::vector<SemanticGaussian> out;
  out.reserve(anchors.size());
  std::vector<double> raw(kGaussianRawDim);
  for (const std::uint32_t v : anchors) {
    int i = 0;
    int j = 0;
    int k = 0;
    spec.unravel(v, i, j, k);
    const auto f = features.voxel(v);
    head.apply(f, raw);
    const GaussianActivations a =
        activate_gaussian(raw, spec.center(i, j, k), spec.resolution);
    out.push_back(SemanticGaussian::make(
        a.mean, a.scale, a.rotation, a.opacity,
        std::vector<double>(f.begin(), f.end())));
  }
  return out;
}

}  // namespace sgsplat
