#include "sgsplat/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace sgsplat {

namespace {

constexpr char kSceneMagic[4] = {'S', 'P', 'H', 'V'};
constexpr char kGaussianMagic[4] = {'S', 'P', 'H', 'G'};
constexpr std::uint16_t kFormatVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f32(float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes_.data()),
              static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed: " + path);
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for reading: " + path);
    const std::streamsize size = in.tellg();
    in.seekg(0);
    bytes_.resize(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes_.data()), size);
    if (!in) throw IoError("read failed: " + path);
  }
  std::uint8_t u8() { return bytes_[need(1)]; }
  std::uint16_t u16() {
    const std::size_t o = need(2);
    return static_cast<std::uint16_t>(bytes_[o] | (bytes_[o + 1] << 8));
  }
  std::uint32_t u32() {
    const std::size_t o = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[o + static_cast<std::size_t>(i)])
           << (8 * i);
    }
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void raw(void* out, std::size_t n) {
    const std::size_t o = need(n);
    std::memcpy(out, bytes_.data() + o, n);
  }
  void expect_exhausted() const {
    if (offset_ != bytes_.size()) {
      throw IoError("trailing bytes in " + path_);
    }
  }

 private:
  std::size_t need(std::size_t n) {
    if (offset_ + n > bytes_.size()) {
      throw IoError("truncated file: " + path_);
    }
    const std::size_t o = offset_;
    offset_ += n;
    return o;
  }
  std::string path_;
  std::vector<std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

void write_scene_header(Writer& w, const GridSpec& spec, PayloadKind kind,
                        std::uint16_t num_semantic) {
  w.raw(kSceneMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(spec.nx));
  w.u32(static_cast<std::uint32_t>(spec.ny));
  w.u32(static_cast<std::uint32_t>(spec.nz));
  w.f32(static_cast<float>(spec.resolution));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(spec.origin[a]));
  w.u8(static_cast<std::uint8_t>(kind));
  w.u16(num_semantic);
}

const std::uint8_t kPalette[19][3] = {
    {255, 0, 255},   // road
    {75, 0, 75},     // sidewalk
    {255, 200, 0},   // building
    {91, 155, 213},  // car
    {0, 175, 0},     // vegetation
    {255, 240, 150}, // pole
    {100, 230, 245}, // bicycle
    {30, 60, 150},   // motorcycle
    {80, 30, 180},   // truck
    {0, 0, 255},     // other vehicle
    {255, 30, 30},   // person
    {255, 37, 199},  // bicyclist
    {150, 30, 90},   // motorcyclist
    {255, 150, 255}, // parking
    {175, 0, 75},    // other ground
    {255, 120, 50},  // fence
    {135, 60, 0},    // trunk
    {150, 240, 80},  // terrain
    {255, 0, 0},     // traffic sign
};

void palette_color(int cls, std::uint8_t rgb[3]) {
  if (cls <= 0) {
    rgb[0] = rgb[1] = rgb[2] = 0;
    return;
  }
  const int idx = (cls - 1) % 19;
  rgb[0] = kPalette[idx][0];
  rgb[1] = kPalette[idx][1];
  rgb[2] = kPalette[idx][2];
}

void write_ply(const std::string& path,
               const std::vector<std::array<float, 3>>& points,
               const std::vector<std::array<std::uint8_t, 4>>& colors) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "property uchar alpha\nend_header\n";
  char line[160];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %u %u %u %u\n",
                  points[i][0], points[i][1], points[i][2], colors[i][0],
                  colors[i][1], colors[i][2], colors[i][3]);
    out << line;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void write_scene(const std::string& path, const LabelGrid& labels,
                 std::uint16_t num_semantic) {
  labels.spec.validate();
  if (labels.channels != 1) throw InvalidInput("label grids are single-channel");
  Writer w;
  write_scene_header(w, labels.spec, PayloadKind::kLabels, num_semantic);
  w.raw(labels.values.data(), labels.values.size());
  w.save(path);
}

void write_scene(const std::string& path, const SemanticVolume& logits) {
  logits.spec.validate();
  if (logits.channels < 1) throw InvalidInput("logit volume needs channels");
  Writer w;
  write_scene_header(w, logits.spec, PayloadKind::kLogits,
                     static_cast<std::uint16_t>(logits.channels - 1));
  for (const double v : logits.values) w.f32(static_cast<float>(v));
  w.save(path);
}

void write_scene_scalar(const std::string& path, const ScalarGrid& scalars) {
  scalars.spec.validate();
  if (scalars.channels != 1) throw InvalidInput("scalar grids are single-channel");
  Writer w;
  write_scene_header(w, scalars.spec, PayloadKind::kScalar, 0);
  for (const double v : scalars.values) w.f32(static_cast<float>(v));
  w.save(path);
}

SceneData read_scene(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kSceneMagic, 4) != 0) {
    throw IoError("not a scene file: " + path);
  }
  if (r.u16() != kFormatVersion) {
    throw IoError("unsupported scene file version: " + path);
  }
  SceneData data;
  data.spec.nx = static_cast<int>(r.u32());
  data.spec.ny = static_cast<int>(r.u32());
  data.spec.nz = static_cast<int>(r.u32());
  data.spec.resolution = r.f32();
  for (int a = 0; a < 3; ++a) data.spec.origin[a] = r.f32();
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw IoError("unknown payload kind: " + path);
  data.kind = static_cast<PayloadKind>(kind);
  data.num_semantic = r.u16();
  data.spec.validate();
  const std::int64_t n = data.spec.voxel_count();
  switch (data.kind) {
    case PayloadKind::kLabels: {
      data.labels = LabelGrid::zeros(data.spec, 1);
      r.raw(data.labels.values.data(), static_cast<std::size_t>(n));
      break;
    }
    case PayloadKind::kLogits: {
      const int channels = data.num_semantic + 1;
      data.logits = SemanticVolume::zeros(data.spec, channels);
      for (double& v : data.logits.values) v = r.f32();
      break;
    }
    case PayloadKind::kScalar: {
      data.scalars = ScalarGrid::zeros(data.spec, 1);
      for (double& v : data.scalars.values) v = r.f32();
      break;
    }
  }
  r.expect_exhausted();
  return data;
}

void write_gaussians(const std::string& path,
                     const std::vector<SemanticGaussian>& gaussians,
                     const ShField& field) {
  field.validate();
  if (field.count != static_cast<int>(gaussians.size())) {
    throw InvalidInput("SH field count does not match gaussian count");
  }
  Writer w;
  w.raw(kGaussianMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(gaussians.size()));
  w.u16(static_cast<std::uint16_t>(field.channels));
  w.u16(static_cast<std::uint16_t>(field.degree));
  for (std::size_t g = 0; g < gaussians.size(); ++g) {
    const SemanticGaussian& gs = gaussians[g];
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(gs.mean[a]));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(gs.scale[a]));
    for (int a = 0; a < 4; ++a) w.f32(static_cast<float>(gs.rotation[a]));
    w.f32(static_cast<float>(gs.opacity));
    const auto coeffs = field.gaussian(static_cast<int>(g));
    for (const double c : coeffs) w.f32(static_cast<float>(c));
  }
  w.save(path);
}

GaussianSet read_gaussians(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kGaussianMagic, 4) != 0) {
    throw IoError("not a gaussian set file: " + path);
  }
  if (r.u16() != kFormatVersion) {
    throw IoError("unsupported gaussian file version: " + path);
  }
  const std::uint32_t count = r.u32();
  const int channels = r.u16();
  const int degree = r.u16();
  if (channels <= 0 || degree > kMaxShDegree) {
    throw IoError("bad gaussian file header: " + path);
  }
  GaussianSet set;
  set.field = ShField::zeros(static_cast<int>(count), degree, channels);
  set.gaussians.reserve(count);
  for (std::uint32_t g = 0; g < count; ++g) {
    Eigen::Vector3d mean;
    Eigen::Vector3d scale;
    Eigen::Vector4d rot;
    for (int a = 0; a < 3; ++a) mean[a] = r.f32();
    for (int a = 0; a < 3; ++a) scale[a] = r.f32();
    for (int a = 0; a < 4; ++a) rot[a] = r.f32();
    const double opacity = r.f32();
    auto coeffs = set.field.gaussian(static_cast<int>(g));
    for (double& c : coeffs) c = r.f32();
    // Direction-independent semantics come from the degree-0 slice.
    std::vector<double> semantics(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) semantics[c] = kY00 * coeffs[c];
    set.gaussians.push_back(
        SemanticGaussian::make(mean, scale, rot, opacity, std::move(semantics)));
  }
  r.expect_exhausted();
  return set;
}

void export_labels_ply(const std::string& path, const LabelGrid& labels) {
  std::vector<std::array<float, 3>> points;
  std::vector<std::array<std::uint8_t, 4>> colors;
  const GridSpec& s = labels.spec;
  for (int i = 0; i < s.nx; ++i) {
    for (int j = 0; j < s.ny; ++j) {
      for (int k = 0; k < s.nz; ++k) {
        const std::uint8_t l = labels.at(i, j, k);
        if (l == 0 || l == kIgnoreLabel) continue;
        const Eigen::Vector3d c = s.center(i, j, k);
        points.push_back({static_cast<float>(c[0]), static_cast<float>(c[1]),
                          static_cast<float>(c[2])});
        std::uint8_t rgb[3];
        palette_color(l, rgb);
        colors.push_back({rgb[0], rgb[1], rgb[2], 255});
      }
    }
  }
  write_ply(path, points, colors);
}

void export_gaussians_ply(const std::string& path,
                          const std::vector<SemanticGaussian>& gaussians) {
  std::vector<std::array<float, 3>> points;
  std::vector<std::array<std::uint8_t, 4>> colors;
  for (const SemanticGaussian& g : gaussians) {
    points.push_back({static_cast<float>(g.mean[0]),
                      static_cast<float>(g.mean[1]),
                      static_cast<float>(g.mean[2])});
    int best = 0;
    for (std::size_t c = 1; c < g.semantics.size(); ++c) {
      if (g.semantics[c] > g.semantics[best]) best = static_cast<int>(c);
    }
    std::uint8_t rgb[3];
    palette_color(best, rgb);
    colors.push_back({rgb[0], rgb[1], rgb[2],
                      static_cast<std::uint8_t>(g.opacity * 255.0 + 0.5)});
  }
  write_ply(path, points, colors);
}

}  // namespace sgsplat
