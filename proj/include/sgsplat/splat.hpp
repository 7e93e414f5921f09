#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "sgsplat/gaussian.hpp"
#include "sgsplat/grid.hpp"
#include "sgsplat/sh.hpp"

namespace sgsplat {

struct SplatOptions {
  /// Mahalanobis-distance cutoff; voxel centers with d^2 > cutoff^2 are
  /// skipped. +infinity means every Gaussian touches every voxel.
  double cutoff = 3.0;
  int threads = 0;  // 0: resolve via SGSPLAT_THREADS, default 1
};

inline constexpr double kNoCutoff = std::numeric_limits<double>::infinity();

/// Additive semantic splatting: for every voxel center x,
///   V[x] += opacity_g * exp(-0.5 * d^T Sigma_g^{-1} d) * semantics_g
/// summed over Gaussians in storage order. Per-voxel accumulation order is
/// ascending Gaussian index regardless of thread count, so results are
/// bitwise reproducible.
SemanticVolume splat(const std::vector<SemanticGaussian>& gaussians,
                     const GridSpec& spec, int channels,
                     const SplatOptions& options = {});

/// View-dependent variant: the per-voxel semantics of each Gaussian are the
/// SH field evaluated along the unit direction from the Gaussian mean to the
/// voxel center (degree-0 slice alone when the direction is degenerate).
SemanticVolume splat_ssh(const std::vector<SemanticGaussian>& gaussians,
                         const ShField& field, const GridSpec& spec,
                         const SplatOptions& options = {});

/// Single-threaded walk over every (gaussian, voxel) pair inside the cutoff:
/// ascending Gaussian index, then ascending linear voxel index within each
/// Gaussian. fn receives (gaussian index, linear voxel index, voxel center
/// minus mean, opacity * exp(-q^2/2)).
using PairFn = std::function<void(std::size_t, std::int64_t,
                                  const Eigen::Vector3d&, double)>;
void for_each_pair(const std::vector<SemanticGaussian>& gaussians,
                   const GridSpec& spec, double cutoff, const PairFn& fn);

}  // namespace sgsplat
