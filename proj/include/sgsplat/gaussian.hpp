#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgsplat/common.hpp"
#include "sgsplat/grid.hpp"

namespace sgsplat {

/// 3x3 covariance Sigma = R diag(s) diag(s)^T R^T; symmetric positive
/// definite whenever the scales are positive.
using Covariance3 = Eigen::Matrix3d;

// Scales below this are clamped at construction so the exponent (and its
// gradients) stay finite.
inline constexpr double kMinScale = 1e-4;

/// Anisotropic 3D Gaussian carrying per-class semantic coefficients instead
/// of color. Quaternions are (w,x,y,z), Hamilton convention, stored unit-norm.
struct SemanticGaussian {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();   // meters
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();  // meters, > 0
  Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0);
  double opacity = 1.0;  // [0, 1]
  std::vector<double> semantics;

  /// Validates, normalizes the quaternion, and clamps tiny scales.
  static SemanticGaussian make(const Eigen::Vector3d& mean,
                               const Eigen::Vector3d& scale,
                               const Eigen::Vector4d& rotation, double opacity,
                               std::vector<double> semantics);
};

/// Rotation matrix of the normalized quaternion (w,x,y,z). Throws on
/// (near-)zero norm.
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q);

/// Sigma = R diag(s)^2 R^T. Throws unless every scale is positive.
Covariance3 build_covariance(const Eigen::Vector3d& scale,
                             const Eigen::Vector4d& rotation);

/// alpha * exp(-1/2 (x-m)^T Sigma^-1 (x-m)) * c. The exponent is evaluated
/// as -1/2 |diag(1/s) R^T (x-m)|^2, which never forms Sigma^-1 explicitly.
std::vector<double> eval_gaussian(const SemanticGaussian& g,
                                  const Eigen::Vector3d& x);

/// Squared Mahalanobis distance of x from g's mean.
double mahalanobis_sq(const SemanticGaussian& g, const Eigen::Vector3d& x);

}  // namespace sgsplat
