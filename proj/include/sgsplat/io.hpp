#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgsplat/gaussian.hpp"
#include "sgsplat/grid.hpp"
#include "sgsplat/sh.hpp"

namespace sgsplat {

/// Voxel scene container ("SPHV"): little-endian header
///   magic 4B, version u16, dims 3 x u32, resolution f32, origin 3 x f32,
///   kind u8, semantic class count N u16
/// followed by the payload in x-major, z-fastest voxel order. Logits store
/// N + 1 f32 channels per voxel (channel 0 = empty).
enum class PayloadKind : std::uint8_t {
  kLabels = 0,
  kLogits = 1,
  kScalar = 2,
};

struct SceneData {
  GridSpec spec;
  PayloadKind kind = PayloadKind::kLabels;
  std::uint16_t num_semantic = 0;
  LabelGrid labels;
  SemanticVolume logits;
  ScalarGrid scalars;
};

void write_scene(const std::string& path, const LabelGrid& labels,
                 std::uint16_t num_semantic);
void write_scene(const std::string& path, const SemanticVolume& logits);
void write_scene_scalar(const std::string& path, const ScalarGrid& scalars);
SceneData read_scene(const std::string& path);

/// Gaussian set container ("SPHG"): little-endian header
///   magic 4B, version u16, count u32, channels u16, degree u16
/// then per Gaussian: mean 3 x f32, scale 3 x f32, quaternion 4 x f32
/// (stored normalized), opacity f32, (L+1)^2 * channels coefficient f32s.
struct GaussianSet {
  std::vector<SemanticGaussian> gaussians;
  ShField field;
};

void write_gaussians(const std::string& path,
                     const std::vector<SemanticGaussian>& gaussians,
                     const ShField& field);

/// Reading reconstructs each Gaussian's direction-independent semantics from
/// the degree-0 coefficient slice (Y00 * c00).
GaussianSet read_gaussians(const std::string& path);

/// ASCII point clouds with the fixed 19-color class palette; label 0 and the
/// ignore label are skipped. Gaussians become mean points colored by their
/// dominant semantic channel with opacity-scaled alpha.
void export_labels_ply(const std::string& path, const LabelGrid& labels);
void export_gaussians_ply(const std::string& path,
                          const std::vector<SemanticGaussian>& gaussians);

}  // namespace sgsplat
