#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgsplat/gaussian.hpp"
#include "sgsplat/grid.hpp"
#include "sgsplat/sh.hpp"

namespace sgsplat {

/// Three axis-aligned feature planes obtained by mean-pooling a feature
/// volume along its perpendicular axis. Each plane is row-major with the
/// channel index fastest: xy is nx*ny*C, yz is ny*nz*C, zx is nz*nx*C.
struct TriPlane {
  GridSpec spec;
  int channels = 0;
  std::array<double, 3> weights{1.0, 1.0, 1.0};  // per-plane, optimizable
  std::vector<double> xy;
  std::vector<double> yz;
  std::vector<double> zx;
};

TriPlane pool_tpv(const FeatureVolume& volume);

/// field[i,j,k] = w[0]*xy[i,j] + w[1]*yz[j,k] + w[2]*zx[k,i], channelwise.
FeatureVolume broadcast_tpv(const TriPlane& planes);
FeatureVolume broadcast_tpv(const TriPlane& planes,
                            const std::array<double, 3>& weights);

enum class SimilarityMode : std::uint8_t { kDot = 0, kCosine = 1 };

/// Per-voxel focal score between two feature volumes of equal shape.
/// kDot is a plain inner product; kCosine divides by both norms and returns
/// 0 where either norm is below 1e-12.
ScalarGrid similarity(const FeatureVolume& a, const FeatureVolume& b,
                      SimilarityMode mode);

/// Indices of the k highest-scoring voxels, returned in descending score
/// order; ties broken by ascending linear index. k must lie in
/// [1, voxel count].
std::vector<std::uint32_t> select_anchors(const ScalarGrid& scores, int k);

/// Gather per-anchor feature rows from a feature volume.
std::vector<double> gather_features(const FeatureVolume& volume,
                                    std::span<const std::uint32_t> anchors);

/// Dense affine head applied per anchor: out = W * f + b.
struct LinearHead {
  int rows = 0;
  int cols = 0;
  std::vector<double> weight;  // rows x cols, row-major
  std::vector<double> bias;    // rows

  static LinearHead zeros(int rows, int cols);
  static LinearHead random(int rows, int cols, double stddev,
                           std::uint64_t seed);
  void validate() const;
  void apply(std::span<const double> input, std::span<double> output) const;
};

/// Raw Gaussian parameter layout produced by the 11-row Gaussian head:
/// [offset xyz, scale xyz, rotation wxyz, opacity].
inline constexpr int kGaussianRawDim = 11;
inline constexpr double kScaleMin = 0.05;
inline constexpr double kScaleMax = 2.0;

struct GaussianActivations {
  Eigen::Vector3d mean;
  Eigen::Vector3d scale;
  Eigen::Vector4d rotation;
  double opacity = 0.0;
};

/// Decode one raw parameter vector at an anchor voxel:
///   mean    = center + tanh(raw_offset) * resolution
///   scale   = kScaleMin + (kScaleMax - kScaleMin) * sigmoid(raw_scale)
///   rotation= normalize(raw_rot), identity when |raw_rot| < 1e-8
///   opacity = sigmoid(raw_opacity)
GaussianActivations activate_gaussian(std::span<const double> raw,
                                      const Eigen::Vector3d& center,
                                      double resolution);

/// Instantiate Gaussians at the anchor voxels. Semantics are copied from the
/// anchor features (degree-0 behaviour; SH expansion happens separately).
std::vector<SemanticGaussian> init_gaussians(
    const FeatureVolume& features, const GridSpec& spec,
    std::span<const std::uint32_t> anchors, const LinearHead& head);

/// Channel 0 is the empty class; a positive bias there keeps sparse scenes
/// from hallucinating occupancy where no Gaussian reaches.
inline constexpr double kEmptyBias = 2.0;

}  // namespace sgsplat
