#include "sgsplat/gaussian.hpp"

#include <cmath>
#include <utility>

namespace sgsplat {

SemanticGaussian SemanticGaussian::make(const Eigen::Vector3d& mean,
                                        const Eigen::Vector3d& scale,
                                        const Eigen::Vector4d& rotation,
                                        double opacity,
                                        std::vector<double> semantics) {
  if (!mean.allFinite() || !scale.allFinite() || !rotation.allFinite() ||
      !std::isfinite(opacity)) {
    throw InvalidInput("gaussian parameters must be finite");
  }
  if (scale.minCoeff() <= 0.0) {
    throw InvalidInput("gaussian scales must be positive");
  }
  if (opacity < 0.0 || opacity > 1.0) {
    throw InvalidInput("gaussian opacity must lie in [0, 1]");
  }
  const double norm = rotation.norm();
  if (norm < 1e-12) {
    throw InvalidInput("gaussian quaternion must have nonzero norm");
  }
  SemanticGaussian g;
  g.mean = mean;
  g.scale = scale.cwiseMax(kMinScale);
  g.rotation = rotation / norm;
  g.opacity = opacity;
  g.semantics = std::move(semantics);
  return g;
}

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q) {
  const double norm = q.norm();
  if (norm < 1e-12) {
    throw InvalidInput("quaternion must have nonzero norm");
  }
  const double w = q[0] / norm;
  const double x = q[1] / norm;
  const double y = q[2] / norm;
  const double z = q[3] / norm;
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),
      2.0 * (x * z + w * y),  //
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z),
      2.0 * (y * z - w * x),  //
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x),
      1.0 - 2.0 * (x * x + y * y);
  return r;
}

Covariance3 build_covariance(const Eigen::Vector3d& scale,
                             const Eigen::Vector4d& rotation) {
  if (scale.minCoeff() <= 0.0) {
    throw InvalidInput("covariance scales must be positive");
  }
  const Eigen::Matrix3d r = quat_to_rotation(rotation);
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

double mahalanobis_sq(const SemanticGaussian& g, const Eigen::Vector3d& x) {
  const Eigen::Matrix3d r = quat_to_rotation(g.rotation);
  const Eigen::Vector3d t = r.transpose() * (x - g.mean);
  const Eigen::Vector3d u = t.cwiseQuotient(g.scale);
  return u.squaredNorm();
}

std::vector<double> eval_gaussian(const SemanticGaussian& g,
                                  const Eigen::Vector3d& x) {
  const double w = g.opacity * std::exp(-0.5 * mahalanobis_sq(g, x));
  std::vector<double> out(g.semantics.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = w * g.semantics[c];
  return out;
}

}  // namespace sgsplat
