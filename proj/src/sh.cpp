#include "sgsplat/sh.hpp"

#include <cmath>

namespace sgsplat {

namespace {

// Orthonormalized real SH constants (graphics convention, no Condon-Shortley
// phase). Values are 1/(2 sqrt(pi)) times the usual integer-root factors.
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2a = 1.0925484305920792;   // xy, yz, xz
constexpr double kC2b = 0.31539156525252005;  // 3z^2 - 1
constexpr double kC2c = 0.5462742152960396;   // x^2 - y^2
constexpr double kC3a = 0.5900435899266435;   // y(3x^2-y^2), x(x^2-3y^2)
constexpr double kC3b = 2.890611442640554;    // xyz
constexpr double kC3c = 0.4570457994644658;   // y(5z^2-1), x(5z^2-1)
constexpr double kC3d = 0.3731763325901154;   // z(5z^2-3)
constexpr double kC3e = 1.445305721320277;    // z(x^2-y^2)
constexpr double kC4a = 2.5033429417967046;   // xy(x^2-y^2)
constexpr double kC4b = 1.7701307697799304;   // yz(3x^2-y^2), xz(x^2-3y^2)
constexpr double kC4c = 0.9461746957575601;   // xy(7z^2-1)
constexpr double kC4d = 0.6690465435572892;   // yz(7z^2-3), xz(7z^2-3)
constexpr double kC4e = 0.10578554691520431;  // 35z^4 - 30z^2 + 3
constexpr double kC4f = 0.47308734787878004;  // (x^2-y^2)(7z^2-1)
constexpr double kC4g = 0.6258357354491761;   // x^4 - 6x^2y^2 + y^4

}  // namespace

void sh_basis(int degree, const Eigen::Vector3d& direction, double* out) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidInput("SH degree must lie in [0, 4]");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw InvalidInput("SH direction must be unit length");
  }
  const double x = direction[0];
  const double y = direction[1];
  const double z = direction[2];

  out[0] = kC0;
  if (degree < 1) return;
  out[1] = kC1 * y;
  out[2] = kC1 * z;
  out[3] = kC1 * x;
  if (degree < 2) return;
  const double xx = x * x;
  const double yy = y * y;
  const double zz = z * z;
  out[4] = kC2a * x * y;
  out[5] = kC2a * y * z;
  out[6] = kC2b * (3.0 * zz - 1.0);
  out[7] = kC2a * x * z;
  out[8] = kC2c * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3a * y * (3.0 * xx - yy);
  out[10] = kC3b * x * y * z;
  out[11] = kC3c * y * (5.0 * zz - 1.0);
  out[12] = kC3d * z * (5.0 * zz - 3.0);
  out[13] = kC3c * x * (5.0 * zz - 1.0);
  out[14] = kC3e * z * (xx - yy);
  out[15] = kC3a * x * (xx - 3.0 * yy);
  if (degree < 4) return;
  out[16] = kC4a * x * y * (xx - yy);
  out[17] = kC4b * y * z * (3.0 * xx - yy);
  out[18] = kC4c * x * y * (7.0 * zz - 1.0);
  out[19] = kC4d * y * z * (7.0 * zz - 3.0);
  out[20] = kC4e * (35.0 * zz * zz - 30.0 * zz + 3.0);
  out[21] = kC4d * x * z * (7.0 * zz - 3.0);
  out[22] = kC4f * (xx - yy) * (7.0 * zz - 1.0);
  out[23] = kC4b * x * z * (xx - 3.0 * yy);
  out[24] = kC4g * (xx * xx - 6.0 * xx * yy + yy * yy);
}

std::vector<double> sh_basis(int degree, const Eigen::Vector3d& direction) {
  std::vector<double> out(sh_basis_count(degree));
  sh_basis(degree, direction, out.data());
  return out;
}

ShProjection ShProjection::identity(int n, double lambda) {
  ShProjection p;
  p.rows = n;
  p.cols = n;
  p.lambda = lambda;
  p.weight.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) p.weight[static_cast<std::size_t>(i) * n + i] = 1.0;
  p.validate();
  return p;
}

ShProjection ShProjection::random(int rows, int cols, double lambda,
                                  double stddev, std::uint64_t seed) {
  ShProjection p;
  p.rows = rows;
  p.cols = cols;
  p.lambda = lambda;
  p.weight.resize(static_cast<std::size_t>(rows) * cols);
  Rng rng(seed);
  for (double& w : p.weight) w = stddev * rng.normal();
  p.validate();
  return p;
}

void ShProjection::validate() const {
  if (rows <= 0 || cols <= 0) {
    throw InvalidInput("projection dims must be positive");
  }
  if (weight.size() != static_cast<std::size_t>(rows) * cols) {
    throw InvalidInput("projection weight size mismatch");
  }
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw InvalidInput("projection lambda must be finite and non-negative");
  }
}

std::vector<double> expand_semantics(std::span<const double> features,
                                     int count, const ShProjection& proj) {
  proj.validate();
  if (features.size() != static_cast<std::size_t>(count) * proj.cols) {
    throw InvalidInput("feature buffer size mismatch in expand_semantics");
  }
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> w(proj.weight.data(), proj.rows, proj.cols);
  Eigen::Map<const RowMat> f(features.data(), count, proj.cols);
  std::vector<double> out(static_cast<std::size_t>(count) * proj.rows);
  Eigen::Map<RowMat>(out.data(), count, proj.rows) = f * w.transpose();
  return out;
}

std::vector<double> eval_ssh(std::span<const double> coeffs, int degree,
                             int channels, const Eigen::Vector3d& direction) {
  const int basis = sh_basis_count(degree);
  if (coeffs.size() != static_cast<std::size_t>(basis) * channels) {
    throw InvalidInput("coefficient block size mismatch in eval_ssh");
  }
  double y[25];
  sh_basis(degree, direction, y);
  std::vector<double> out(channels, 0.0);
  for (int b = 0; b < basis; ++b) {
    const double yb = y[b];
    const double* block = coeffs.data() + static_cast<std::size_t>(b) * channels;
    for (int c = 0; c < channels; ++c) out[c] += yb * block[c];
  }
  return out;
}

double orth_loss(const ShProjection& proj) {
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> w(proj.weight.data(), proj.rows, proj.cols);
  RowMat gram = w * w.transpose();
  for (int i = 0; i < proj.rows; ++i) gram(i, i) -= 1.0;
  return proj.lambda * gram.cwiseAbs().sum();
}

void accumulate_orth_loss_grad(const ShProjection& proj, double scale,
                               std::span<double> grad) {
  if (grad.size() != proj.weight.size()) {
    throw InvalidInput("gradient buffer size mismatch in orth grad");
  }
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> w(proj.weight.data(), proj.rows, proj.cols);
  RowMat gram = w * w.transpose();
  for (int i = 0; i < proj.rows; ++i) gram(i, i) -= 1.0;
  RowMat sign = gram.unaryExpr([](double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  });
  Eigen::Map<RowMat> g(grad.data(), proj.rows, proj.cols);
  g.noalias() += (2.0 * scale * proj.lambda) * (sign * w);
}

ShField ShField::zeros(int count, int degree, int channels) {
  if (count < 0 || channels <= 0) {
    throw InvalidInput("SH field dims must be non-negative/positive");
  }
  ShField f;
  f.degree = degree;
  f.channels = channels;
  f.count = count;
  f.coeffs.assign(static_cast<std::size_t>(count) *
                      sh_basis_count(degree) * channels,
                  0.0);
  return f;
}

void ShField::validate() const {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidInput("SH field degree must lie in [0, 4]");
  }
  if (channels <= 0 || count < 0) {
    throw InvalidInput("SH field dims invalid");
  }
  if (coeffs.size() != stride() * static_cast<std::size_t>(count)) {
    throw InvalidInput("SH field coefficient size mismatch");
  }
}

}  // namespace sgsplat
