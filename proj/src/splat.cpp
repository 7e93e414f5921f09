#include "sgsplat/splat.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sgsplat {

namespace {

struct Footprint {
  Eigen::Matrix3d whiten;  // diag(1/s) R^T
  Eigen::Vector3d mean;
  double opacity = 0.0;
  int lo[3] = {0, 0, 0};
  int hi[3] = {-1, -1, -1};  // inclusive; empty when hi < lo
};

// Conservative voxel-index box around the cutoff ellipsoid, padded by one
// voxel so the exact Mahalanobis test below is the only membership decision.
Footprint make_footprint(const SemanticGaussian& g, const GridSpec& spec,
                         double cutoff) {
  Footprint f;
  const Eigen::Matrix3d r = quat_to_rotation(g.rotation);
  f.whiten = g.scale.cwiseInverse().asDiagonal() * r.transpose();
  f.mean = g.mean;
  f.opacity = g.opacity;
  const int dims[3] = {spec.nx, spec.ny, spec.nz};
  if (!std::isfinite(cutoff)) {
    for (int a = 0; a < 3; ++a) {
      f.lo[a] = 0;
      f.hi[a] = dims[a] - 1;
    }
    return f;
  }
  for (int a = 0; a < 3; ++a) {
    double var = 0.0;
    for (int b = 0; b < 3; ++b) {
      var += r(a, b) * r(a, b) * g.scale[b] * g.scale[b];
    }
    const double half = cutoff * std::sqrt(var);
    const double lo_f = (g.mean[a] - half - spec.origin[a]) / spec.resolution - 0.5;
    const double hi_f = (g.mean[a] + half - spec.origin[a]) / spec.resolution - 0.5;
    f.lo[a] = std::max(0, static_cast<int>(std::ceil(lo_f)) - 1);
    f.hi[a] = std::min(dims[a] - 1, static_cast<int>(std::floor(hi_f)) + 1);
    if (f.lo[a] > f.hi[a]) return f;  // already empty
  }
  return f;
}

// Walks every (gaussian, voxel) pair whose center passes the cutoff test,
// restricted to x-slab [i_begin, i_end). Gaussians are visited in storage
// order, so each voxel accumulates contributions in ascending Gaussian
// index no matter how the slab work is distributed.
template <class PairFn>
void walk_pairs(const std::vector<SemanticGaussian>& gaussians,
                const GridSpec& spec, double cutoff, int i_begin, int i_end,
                PairFn&& fn) {
  const double cutoff_sq =
      std::isfinite(cutoff) ? cutoff * cutoff
                            : std::numeric_limits<double>::infinity();
  for (std::size_t gi = 0; gi < gaussians.size(); ++gi) {
    const Footprint f = make_footprint(gaussians[gi], spec, cutoff);
    const int ilo = std::max(f.lo[0], i_begin);
    const int ihi = std::min(f.hi[0], i_end - 1);
    for (int i = ilo; i <= ihi; ++i) {
      for (int j = f.lo[1]; j <= f.hi[1]; ++j) {
        for (int k = f.lo[2]; k <= f.hi[2]; ++k) {
          const Eigen::Vector3d d = spec.center(i, j, k) - f.mean;
          const double q_sq = (f.whiten * d).squaredNorm();
          if (q_sq <= cutoff_sq) {
            fn(gi, spec.linear_index(i, j, k), d,
               f.opacity * std::exp(-0.5 * q_sq));
          }
        }
      }
    }
  }
}

template <class PairFn>
void walk_all(const std::vector<SemanticGaussian>& gaussians,
              const GridSpec& spec, const SplatOptions& options, PairFn&& fn) {
  const int threads = std::min<int>(resolve_threads(options.threads), spec.nx);
  if (threads <= 1) {
    walk_pairs(gaussians, spec, options.cutoff, 0, spec.nx, fn);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int begin = static_cast<int>(static_cast<std::int64_t>(spec.nx) * t / threads);
    const int end =
        static_cast<int>(static_cast<std::int64_t>(spec.nx) * (t + 1) / threads);
    pool.emplace_back([&, begin, end] {
      walk_pairs(gaussians, spec, options.cutoff, begin, end, fn);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void for_each_pair(const std::vector<SemanticGaussian>& gaussians,
                   const GridSpec& spec, double cutoff, const PairFn& fn) {
  spec.validate();
  walk_pairs(gaussians, spec, cutoff, 0, spec.nx, fn);
}

SemanticVolume splat(const std::vector<SemanticGaussian>& gaussians,
                     const GridSpec& spec, int channels,
                     const SplatOptions& options) {
  spec.validate();
  for (const auto& g : gaussians) {
    if (static_cast<int>(g.semantics.size()) != channels) {
      throw InvalidInput("gaussian semantic size does not match channel count");
    }
  }
  SemanticVolume out = SemanticVolume::zeros(spec, channels);
  walk_all(gaussians, spec, options,
           [&](std::size_t gi, std::int64_t v, const Eigen::Vector3d&,
               double weight) {
             double* cell = out.values.data() + v * channels;
             const double* sem = gaussians[gi].semantics.data();
             for (int c = 0; c < channels; ++c) cell[c] += weight * sem[c];
           });
  return out;
}

SemanticVolume splat_ssh(const std::vector<SemanticGaussian>& gaussians,
                         const ShField& field, const GridSpec& spec,
                         const SplatOptions& options) {
  spec.validate();
  field.validate();
  if (field.count != static_cast<int>(gaussians.size())) {
    throw InvalidInput("SH field count does not match gaussian count");
  }
  const int channels = field.channels;
  const int basis = field.basis();
  SemanticVolume out = SemanticVolume::zeros(spec, channels);
  walk_all(gaussians, spec, options,
           [&](std::size_t gi, std::int64_t v, const Eigen::Vector3d& d,
               double weight) {
             double* cell = out.values.data() + v * channels;
             const double* coeffs = field.coeffs.data() +
                                    field.stride() * gi;
             const double len = d.norm();
             if (len < 1e-12) {
               for (int c = 0; c < channels; ++c) {
                 cell[c] += weight * kY00 * coeffs[c];
               }
               return;
             }
             double y[25];
             sh_basis(field.degree, d / len, y);
             for (int c = 0; c < channels; ++c) {
               double s = 0.0;
               for (int b = 0; b < basis; ++b) s += y[b] * coeffs[b * channels + c];
               cell[c] += weight * s;
             }
           });
  return out;
}

}  // namespace sgsplat
