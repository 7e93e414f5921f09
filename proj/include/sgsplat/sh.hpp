#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgsplat/common.hpp"

namespace sgsplat {

inline constexpr int kMaxShDegree = 4;
inline constexpr double kY00 = 0.28209479177387814;  // 1/(2*sqrt(pi))

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real orthonormal spherical harmonics up to degree 4, evaluated at a unit
/// direction and written in (l,m) order (0,0),(1,-1),(1,0),(1,1),(2,-2),...
/// Uses the graphics/geodesy convention: orthonormalized constants, no
/// Condon-Shortley phase, so every cartesian polynomial has a positive
/// leading coefficient. `out` must hold sh_basis_count(degree) doubles.
void sh_basis(int degree, const Eigen::Vector3d& direction, double* out);

std::vector<double> sh_basis(int degree, const Eigen::Vector3d& direction);

/// Shared projection from anchor features to SH semantic coefficients:
/// one dense map W of shape ((L+1)^2 * channels) x feature_dim, applied per
/// anchor. Rows are expected to drift toward orthonormality under orth_loss.
struct ShProjection {
  int rows = 0;
  int cols = 0;
  double lambda = 1e-6;
  std::vector<double> weight;  // rows x cols, row-major

  static ShProjection identity(int n, double lambda);
  static ShProjection random(int rows, int cols, double lambda, double stddev,
                             std::uint64_t seed);
  void validate() const;
};

/// coefficients = W * feature per anchor; result is count x rows, where each
/// row-vector reshapes to (L+1)^2 x channels with the channel index fastest.
std::vector<double> expand_semantics(std::span<const double> features,
                                     int count, const ShProjection& proj);

/// Direction-dependent semantics: sum_lm c_lm Y_lm(direction) per channel.
/// `coeffs` is one anchor's (L+1)^2 x channels block, channel fastest.
std::vector<double> eval_ssh(std::span<const double> coeffs, int degree,
                             int channels, const Eigen::Vector3d& direction);

/// Soft orthogonality penalty lambda * sum_ij |(W W^T - I)_ij|.
double orth_loss(const ShProjection& proj);

/// grad += scale * d(orth_loss)/dW, with sign(0) taken as 0.
void accumulate_orth_loss_grad(const ShProjection& proj, double scale,
                               std::span<double> grad);

/// Per-Gaussian SH semantic coefficients: count x (L+1)^2 x channels,
/// basis-major per Gaussian, channel fastest.
struct ShField {
  int degree = 0;
  int channels = 0;
  int count = 0;
  std::vector<double> coeffs;

  int basis() const { return sh_basis_count(degree); }
  std::size_t stride() const {
    return static_cast<std::size_t>(basis()) * channels;
  }
  std::span<const double> gaussian(int g) const {
    return {coeffs.data() + stride() * g, stride()};
  }
  std::span<double> gaussian(int g) {
    return {coeffs.data() + stride() * g, stride()};
  }
  static ShField zeros(int count, int degree, int channels);
  void validate() const;
};

}  // namespace sgsplat
