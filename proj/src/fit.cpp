#include "sgsplat/fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sgsplat/metrics.hpp"
#include "sgsplat/splat.hpp"

namespace sgsplat {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Rotation of an already-normalized quaternion. backward() differentiates
// exactly this expression, so both the frozen forward and the gradient use
// it rather than quat_to_rotation (which renormalizes).
Eigen::Matrix3d rot_from_unit(double w, double x, double y, double z) {
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),
      2.0 * (x * z + w * y),  //
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z),
      2.0 * (y * z - w * x),  //
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x),
      1.0 - 2.0 * (x * x + y * y);
  return r;
}

void rot_derivatives(double w, double x, double y, double z,
                     Eigen::Matrix3d d[4]) {
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;                       // d/dw
  d[1] << 0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x;           // d/dx
  d[2] << -2.0 * y, x, w, x, 0, z, -w, z, -2.0 * y;           // d/dy
  d[3] << -2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0;           // d/dz
  for (int i = 0; i < 4; ++i) d[i] *= 2.0;
}

struct GaussianState {
  Eigen::Vector3d mean;
  Eigen::Vector3d scale;
  Eigen::Vector4d unit_quat;  // identity fallback when raw norm < 1e-8
  bool quat_fallback = false;
  double opacity = 0.0;
  Eigen::Matrix3d rot;
};

GaussianState decode_raw(const double* raw, const Eigen::Vector3d& center,
                         double resolution) {
  GaussianState s;
  for (int i = 0; i < 3; ++i) {
    s.mean[i] = center[i] + std::tanh(raw[i]) * resolution;
    s.scale[i] = kScaleMin + (kScaleMax - kScaleMin) * sigmoid(raw[3 + i]);
  }
  const Eigen::Vector4d q(raw[6], raw[7], raw[8], raw[9]);
  const double nq = q.norm();
  if (nq < 1e-8) {
    s.unit_quat = Eigen::Vector4d(1, 0, 0, 0);
    s.quat_fallback = true;
  } else {
    s.unit_quat = q / nq;
  }
  s.opacity = sigmoid(raw[10]);
  s.rot = rot_from_unit(s.unit_quat[0], s.unit_quat[1], s.unit_quat[2],
                        s.unit_quat[3]);
  return s;
}

// raw_g = gauss_head(f_g) + residuals, laid out [offset, scale, rot, opacity].
std::vector<double> assemble_raw(const SceneModel& m,
                                 std::span<const double> anchor_feats) {
  const int k = m.anchor_count();
  std::vector<double> raw(static_cast<std::size_t>(k) * kGaussianRawDim);
  for (int g = 0; g < k; ++g) {
    double* r = raw.data() + static_cast<std::size_t>(g) * kGaussianRawDim;
    m.gauss_head.apply(
        anchor_feats.subspan(static_cast<std::size_t>(g) * m.feature_channels,
                             static_cast<std::size_t>(m.feature_channels)),
        {r, kGaussianRawDim});
    for (int i = 0; i < 3; ++i) {
      r[i] += m.res_offset[static_cast<std::size_t>(g) * 3 + i];
      r[3 + i] += m.res_scale[static_cast<std::size_t>(g) * 3 + i];
    }
    for (int i = 0; i < 4; ++i) {
      r[6 + i] += m.res_rotation[static_cast<std::size_t>(g) * 4 + i];
    }
    r[10] += m.res_opacity[static_cast<std::size_t>(g)];
  }
  return raw;
}

std::vector<double> assemble_coeffs(const SceneModel& m,
                                    std::span<const double> anchor_feats) {
  std::vector<double> coeffs =
      expand_semantics(anchor_feats, m.anchor_count(), m.proj);
  for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] += m.res_sh[i];
  return coeffs;
}

FeatureVolume fuse_features(const SceneModel& m) {
  FeatureVolume fused = broadcast_tpv(m.planes);
  for (std::size_t i = 0; i < fused.values.size(); ++i) {
    fused.values[i] += m.features.values[i];
  }
  return fused;
}

Eigen::Vector3d anchor_center(const SceneModel& m, int g) {
  int i = 0;
  int j = 0;
  int k = 0;
  m.spec.unravel(m.anchors[static_cast<std::size_t>(g)], i, j, k);
  return m.spec.center(i, j, k);
}

std::vector<double> gather_rows(const SemanticVolume& vol,
                                std::span<const std::uint32_t> anchors) {
  std::vector<double> out(anchors.size() *
                          static_cast<std::size_t>(vol.channels));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const double* row = vol.voxel(anchors[a]).data();
    std::copy(row, row + vol.channels,
              out.data() + a * static_cast<std::size_t>(vol.channels));
  }
  return out;
}

void check_finite(const LossReport& losses, int iteration) {
  const struct {
    const char* name;
    double value;
  } terms[] = {{"ce", losses.ce},
               {"lovasz", losses.lovasz},
               {"scal", losses.scal},
               {"align", losses.align},
               {"orth", losses.orth}};
  for (const auto& t : terms) {
    if (!std::isfinite(t.value)) {
      char msg[96];
      std::snprintf(msg, sizeof(msg), "non-finite %s loss at iteration %d",
                    t.name, iteration);
      throw NumericError(msg);
    }
  }
}

}  // namespace

void FitConfig::validate() const {
  if (iterations < 0) throw InvalidInput("iterations must be non-negative");
  if (!(step > 0.0)) throw InvalidInput("step must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw InvalidInput("moment decays must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (weight_decay < 0.0) throw InvalidInput("weight decay must be non-negative");
  if (lambda < 0.0) throw InvalidInput("lambda must be non-negative");
  if (!(cutoff > 0.0)) throw InvalidInput("cutoff must be positive");
  if (tolerance < 0.0) throw InvalidInput("tolerance must be non-negative");
  if (k < 0) throw InvalidInput("anchor count must be non-negative");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw InvalidInput("SH degree must lie in [0, 4]");
  }
  if (threads < 0) throw InvalidInput("thread count must be non-negative");
}

int default_anchor_count(std::size_t voxel_count) {
  const std::size_t k = voxel_count / 256;
  return static_cast<int>(std::clamp<std::size_t>(k, 1, 1024));
}

const ParamSlice& ParamLayout::find(const std::string& name) const {
  for (const ParamSlice& s : slices) {
    if (s.name == name) return s;
  }
  throw InvalidInput("unknown parameter slice: " + name);
}

const ParamSlice& ParamLayout::containing(std::size_t coord) const {
  for (const ParamSlice& s : slices) {
    if (coord >= s.offset && coord < s.offset + s.length) return s;
  }
  throw InvalidInput("coordinate outside parameter vector");
}

void SceneModel::validate() const {
  spec.validate();
  if (feature_channels <= 0) throw InvalidInput("model needs feature channels");
  if (num_classes < 2) throw InvalidInput("model needs at least two classes");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw InvalidInput("model SH degree out of range");
  }
  if (lambda < 0.0) throw InvalidInput("model lambda must be non-negative");
  if (!(cutoff > 0.0)) throw InvalidInput("model cutoff must be positive");
  if (features.channels != feature_channels || !(features.spec == spec)) {
    throw InvalidInput("model feature volume shape mismatch");
  }
  if (planes.channels != feature_channels || !(planes.spec == spec)) {
    throw InvalidInput("model plane shape mismatch");
  }
  const std::size_t k = anchors.size();
  for (const std::uint32_t a : anchors) {
    if (a >= static_cast<std::uint32_t>(spec.voxel_count())) {
      throw InvalidInput("model anchor out of range");
    }
  }
  gauss_head.validate();
  voxel_head.validate();
  proj.validate();
  if (gauss_head.rows != kGaussianRawDim ||
      gauss_head.cols != feature_channels) {
    throw InvalidInput("gaussian head shape mismatch");
  }
  if (voxel_head.rows != num_classes || voxel_head.cols != feature_channels) {
    throw InvalidInput("voxel head shape mismatch");
  }
  const int b = basis();
  if (proj.rows != b * num_classes || proj.cols != feature_channels) {
    throw InvalidInput("projection shape mismatch");
  }
  if (res_offset.size() != k * 3 || res_scale.size() != k * 3 ||
      res_rotation.size() != k * 4 || res_opacity.size() != k ||
      res_sh.size() != k * static_cast<std::size_t>(b) * num_classes) {
    throw InvalidInput("residual buffer size mismatch");
  }
}

ParamLayout SceneModel::layout() const {
  const std::size_t k = anchors.size();
  const std::size_t bn = static_cast<std::size_t>(basis()) * num_classes;
  ParamLayout l;
  const auto add = [&](const char* name, std::size_t len, bool exempt) {
    l.slices.push_back({name, l.total, len, exempt});
    l.total += len;
  };
  add("gauss.offset", k * 3, true);
  add("gauss.scale", k * 3, true);
  add("gauss.rotation", k * 4, true);
  add("gauss.opacity", k, true);
  add("gauss.sh", k * bn, true);
  add("proj.weight", static_cast<std::size_t>(proj.rows) * proj.cols, false);
  add("gauss_head.weight",
      static_cast<std::size_t>(gauss_head.rows) * gauss_head.cols, false);
  add("gauss_head.bias", static_cast<std::size_t>(gauss_head.rows), false);
  add("voxel_head.weight",
      static_cast<std::size_t>(voxel_head.rows) * voxel_head.cols, false);
  add("voxel_head.bias", static_cast<std::size_t>(voxel_head.rows), false);
  add("tpv.weights", 3, false);
  return l;
}

void SceneModel::flatten(std::span<double> out) const {
  const ParamLayout l = layout();
  if (out.size() != l.total) throw InvalidInput("flatten buffer size mismatch");
  double* p = out.data();
  const auto put = [&](const std::vector<double>& v) {
    p = std::copy(v.begin(), v.end(), p);
  };
  put(res_offset);
  put(res_scale);
  put(res_rotation);
  put(res_opacity);
  put(res_sh);
  put(proj.weight);
  put(gauss_head.weight);
  put(gauss_head.bias);
  put(voxel_head.weight);
  put(voxel_head.bias);
  p = std::copy(planes.weights.begin(), planes.weights.end(), p);
}

void SceneModel::unflatten(std::span<const double> in) {
  const ParamLayout l = layout();
  if (in.size() != l.total) throw InvalidInput("unflatten buffer size mismatch");
  const double* p = in.data();
  const auto take = [&](std::vector<double>& v) {
    std::copy(p, p + v.size(), v.begin());
    p += v.size();
  };
  take(res_offset);
  take(res_scale);
  take(res_rotation);
  take(res_opacity);
  take(res_sh);
  take(proj.weight);
  take(gauss_head.weight);
  take(gauss_head.bias);
  take(voxel_head.weight);
  take(voxel_head.bias);
  std::copy(p, p + 3, planes.weights.begin());
}

SceneModel build_model(const FeatureVolume& features, int num_classes,
                       const FitConfig& config) {
  config.validate();
  features.spec.validate();
  SceneModel m;
  m.spec = features.spec;
  m.feature_channels = features.channels;
  m.num_classes = num_classes;
  m.sh_degree = config.sh_degree;
  m.lambda = config.lambda;
  m.cutoff = config.cutoff;
  m.features = features;
  m.planes = pool_tpv(features);

  const FeatureVolume field = broadcast_tpv(m.planes);
  const ScalarGrid sim = similarity(features, field, config.similarity);
  const int k = config.k > 0 ? config.k
                             : default_anchor_count(static_cast<std::size_t>(
                                   m.spec.voxel_count()));
  m.anchors = select_anchors(sim, k);

  Rng seeder(config.seed);
  m.gauss_head = LinearHead::random(kGaussianRawDim, m.feature_channels, 0.2,
                                    seeder.next_u64());
  // Start compact: biasing the scale rows keeps initial footprints near one
  // voxel instead of the sigmoid midpoint of ~1 m.
  for (int i = 3; i < 6; ++i) m.gauss_head.bias[static_cast<std::size_t>(i)] = -2.0;
  m.voxel_head =
      LinearHead::random(num_classes, m.feature_channels, 0.2, seeder.next_u64());
  const int b = m.basis();
  m.proj = ShProjection::random(b * num_classes, m.feature_channels,
                                config.lambda,
                                1.0 / std::sqrt(m.feature_channels),
                                seeder.next_u64());
  const std::size_t kk = m.anchors.size();
  m.res_offset.assign(kk * 3, 0.0);
  m.res_scale.assign(kk * 3, 0.0);
  m.res_rotation.assign(kk * 4, 0.0);
  m.res_opacity.assign(kk, 0.0);
  m.res_sh.assign(kk * static_cast<std::size_t>(b) * num_classes, 0.0);
  m.validate();
  return m;
}

ForwardResult forward(const SceneModel& model, const LabelGrid& gt,
                      int /*threads*/) {
  model.validate();
  if (!(gt.spec == model.spec)) {
    throw InvalidInput("ground truth grid mismatch");
  }
  const int k = model.anchor_count();
  const int n = model.num_classes;
  const int b = model.basis();

  ForwardResult r;
  r.fused = fuse_features(model);
  r.anchor_feats = gather_features(r.fused, model.anchors);
  r.raw = assemble_raw(model, r.anchor_feats);

  r.gaussians.reserve(static_cast<std::size_t>(k));
  for (int g = 0; g < k; ++g) {
    const GaussianState s =
        decode_raw(r.raw.data() + static_cast<std::size_t>(g) * kGaussianRawDim,
                   anchor_center(model, g), model.spec.resolution);
    SemanticGaussian gs;
    gs.mean = s.mean;
    gs.scale = s.scale;
    gs.rotation = s.unit_quat;
    gs.opacity = s.opacity;
    r.gaussians.push_back(std::move(gs));
  }

  r.field.degree = model.sh_degree;
  r.field.channels = n;
  r.field.count = k;
  r.field.coeffs = assemble_coeffs(model, r.anchor_feats);

  r.gauss_logits = SemanticVolume::zeros(model.spec, n);
  r.support.pairs.assign(static_cast<std::size_t>(k), {});
  double y[25];
  for_each_pair(
      r.gaussians, model.spec, model.cutoff,
      [&](std::size_t gi, std::int64_t v, const Eigen::Vector3d& d,
          double weight) {
        FrozenPair pair;
        pair.voxel = static_cast<std::uint32_t>(v);
        const double len = d.norm();
        double* cell = r.gauss_logits.values.data() + v * n;
        const double* coeffs = r.field.coeffs.data() + r.field.stride() * gi;
        if (len < 1e-12) {
          pair.degenerate = true;
          for (int c = 0; c < n; ++c) cell[c] += weight * kY00 * coeffs[c];
        } else {
          pair.direction = d / len;
          sh_basis(model.sh_degree, pair.direction, y);
          for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int bb = 0; bb < b; ++bb) acc += y[bb] * coeffs[bb * n + c];
            cell[c] += weight * acc;
          }
        }
        r.support.pairs[gi].push_back(pair);
      });
  for (std::int64_t v = 0; v < model.spec.voxel_count(); ++v) {
    r.gauss_logits.values[static_cast<std::size_t>(v) * n] += kEmptyBias;
  }

  r.voxel_logits = SemanticVolume::zeros(model.spec, n);
  for (std::int64_t v = 0; v < model.spec.voxel_count(); ++v) {
    model.voxel_head.apply(r.fused.voxel(v), r.voxel_logits.voxel(v));
  }
  r.fused_logits = fuse_logits(r.gauss_logits, r.voxel_logits);

  const std::vector<double> anchor_voxel =
      gather_rows(r.voxel_logits, model.anchors);
  const std::vector<double> anchor_gauss =
      gather_rows(r.gauss_logits, model.anchors);

  r.losses.ce = cross_entropy_loss(r.fused_logits, gt);
  r.losses.lovasz = lovasz_softmax_loss(r.fused_logits, gt);
  r.losses.scal = scal_loss(r.fused_logits, gt);
  r.losses.align = align_loss(anchor_voxel, anchor_gauss, k, n);
  r.losses.orth = orth_loss(model.proj);
  return r;
}

double frozen_loss(const SceneModel& model, const LabelGrid& gt,
                   const FrozenSupport& support) {
  const int k = model.anchor_count();
  const int n = model.num_classes;
  const int b = model.basis();
  if (support.pairs.size() != static_cast<std::size_t>(k)) {
    throw InvalidInput("frozen support does not match the model");
  }

  const FeatureVolume fused = fuse_features(model);
  const std::vector<double> anchor_feats =
      gather_features(fused, model.anchors);
  const std::vector<double> raw = assemble_raw(model, anchor_feats);
  const std::vector<double> coeffs = assemble_coeffs(model, anchor_feats);

  SemanticVolume gauss_logits = SemanticVolume::zeros(model.spec, n);
  double y[25];
  for (int g = 0; g < k; ++g) {
    const GaussianState s =
        decode_raw(raw.data() + static_cast<std::size_t>(g) * kGaussianRawDim,
                   anchor_center(model, g), model.spec.resolution);
    const Eigen::Vector3d inv_scale = s.scale.cwiseInverse();
    const double* coef =
        coeffs.data() + static_cast<std::size_t>(g) * b * n;
    for (const FrozenPair& pair : support.pairs[static_cast<std::size_t>(g)]) {
      int i = 0;
      int j = 0;
      int kk = 0;
      model.spec.unravel(pair.voxel, i, j, kk);
      const Eigen::Vector3d d = model.spec.center(i, j, kk) - s.mean;
      const Eigen::Vector3d u =
          inv_scale.cwiseProduct(s.rot.transpose() * d);
      const double e = s.opacity * std::exp(-0.5 * u.squaredNorm());
      double* cell = gauss_logits.values.data() +
                     static_cast<std::size_t>(pair.voxel) * n;
      if (pair.degenerate) {
        for (int c = 0; c < n; ++c) cell[c] += e * kY00 * coef[c];
      } else {
        sh_basis(model.sh_degree, pair.direction, y);
        for (int c = 0; c < n; ++c) {
          double acc = 0.0;
          for (int bb = 0; bb < b; ++bb) acc += y[bb] * coef[bb * n + c];
          cell[c] += e * acc;
        }
      }
    }
  }
  for (std::int64_t v = 0; v < model.spec.voxel_count(); ++v) {
    gauss_logits.values[static_cast<std::size_t>(v) * n] += kEmptyBias;
  }

  SemanticVolume voxel_logits = SemanticVolume::zeros(model.spec, n);
  for (std::int64_t v = 0; v < model.spec.voxel_count(); ++v) {
    model.voxel_head.apply(fused.voxel(v), voxel_logits.voxel(v));
  }
  const SemanticVolume fused_logits = fuse_logits(gauss_logits, voxel_logits);
  const std::vector<double> anchor_voxel =
      gather_rows(voxel_logits, model.anchors);
  const std::vector<double> anchor_gauss =
      gather_rows(gauss_logits, model.anchors);

  return cross_entropy_loss(fused_logits, gt) +
         lovasz_softmax_loss(fused_logits, gt) + scal_loss(fused_logits, gt) +
         align_loss(anchor_voxel, anchor_gauss, k, n) + orth_loss(model.proj);
}

void backward(const SceneModel& model, const LabelGrid& gt,
              const ForwardResult& fwd, std::span<double> grad) {
  const ParamLayout layout = model.layout();
  if (grad.size() != layout.total) {
    throw InvalidInput("gradient buffer size mismatch");
  }
  std::fill(grad.begin(), grad.end(), 0.0);

  const int k = model.anchor_count();
  const int n = model.num_classes;
  const int b = model.basis();
  const int c = model.feature_channels;
  const std::int64_t vcount = model.spec.voxel_count();

  double* g_offset = grad.data() + layout.find("gauss.offset").offset;
  double* g_scale = grad.data() + layout.find("gauss.scale").offset;
  double* g_rot = grad.data() + layout.find("gauss.rotation").offset;
  double* g_opacity = grad.data() + layout.find("gauss.opacity").offset;
  double* g_sh = grad.data() + layout.find("gauss.sh").offset;
  double* g_proj = grad.data() + layout.find("proj.weight").offset;
  double* g_ghw = grad.data() + layout.find("gauss_head.weight").offset;
  double* g_ghb = grad.data() + layout.find("gauss_head.bias").offset;
  double* g_vhw = grad.data() + layout.find("voxel_head.weight").offset;
  double* g_vhb = grad.data() + layout.find("voxel_head.bias").offset;
  double* g_tpv = grad.data() + layout.find("tpv.weights").offset;

  // Fused-prediction losses feed both branches identically.
  std::vector<double> g_fused_logits(static_cast<std::size_t>(vcount) * n, 0.0);
  cross_entropy_grad(fwd.fused_logits, gt, g_fused_logits);
  lovasz_softmax_grad(fwd.fused_logits, gt, g_fused_logits);
  scal_grad(fwd.fused_logits, gt, g_fused_logits);
  std::vector<double> g_gauss = g_fused_logits;
  std::vector<double> g_voxel = std::move(g_fused_logits);

  // Alignment acts on the anchor rows of each branch.
  {
    const std::vector<double> anchor_voxel =
        gather_rows(fwd.voxel_logits, model.anchors);
    const std::vector<double> anchor_gauss =
        gather_rows(fwd.gauss_logits, model.anchors);
    std::vector<double> ga(anchor_voxel.size(), 0.0);
    std::vector<double> gb(anchor_gauss.size(), 0.0);
    align_grad(anchor_voxel, anchor_gauss, k, n, ga, gb);
    for (int g = 0; g < k; ++g) {
      const std::size_t v = model.anchors[static_cast<std::size_t>(g)];
      for (int cc = 0; cc < n; ++cc) {
        g_voxel[v * n + cc] += ga[static_cast<std::size_t>(g) * n + cc];
        g_gauss[v * n + cc] += gb[static_cast<std::size_t>(g) * n + cc];
      }
    }
  }

  // Voxel head: logits = W f + b per voxel.
  std::vector<double> g_fused_feat(static_cast<std::size_t>(vcount) * c, 0.0);
  {
    Eigen::Map<const RowMat> gv(g_voxel.data(), vcount, n);
    Eigen::Map<const RowMat> f(fwd.fused.values.data(), vcount, c);
    Eigen::Map<RowMat> gw(g_vhw, n, c);
    gw.noalias() = gv.transpose() * f;
    Eigen::Map<Eigen::VectorXd> gb(g_vhb, n);
    gb = gv.colwise().sum();
    Eigen::Map<const RowMat> w(model.voxel_head.weight.data(), n, c);
    Eigen::Map<RowMat> gf(g_fused_feat.data(), vcount, c);
    gf.noalias() = gv * w;
  }

  // Splat backward, then through the activations into residuals and heads.
  std::vector<double> g_anchor_feat(static_cast<std::size_t>(k) * c, 0.0);
  std::vector<double> g_coef(static_cast<std::size_t>(b) * n);
  double y[25];
  for (int g = 0; g < k; ++g) {
    const double* raw =
        fwd.raw.data() + static_cast<std::size_t>(g) * kGaussianRawDim;
    const GaussianState s =
        decode_raw(raw, anchor_center(model, g), model.spec.resolution);
    const Eigen::Vector3d inv_scale = s.scale.cwiseInverse();
    const double* coef =
        fwd.field.coeffs.data() + static_cast<std::size_t>(g) * b * n;

    Eigen::Vector3d g_mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d g_sc = Eigen::Vector3d::Zero();
    Eigen::Matrix3d g_r = Eigen::Matrix3d::Zero();
    double g_alpha = 0.0;
    std::fill(g_coef.begin(), g_coef.end(), 0.0);

    for (const FrozenPair& pair :
         fwd.support.pairs[static_cast<std::size_t>(g)]) {
      int i = 0;
      int j = 0;
      int kk = 0;
      model.spec.unravel(pair.voxel, i, j, kk);
      const Eigen::Vector3d d = model.spec.center(i, j, kk) - s.mean;
      const Eigen::Vector3d t = s.rot.transpose() * d;
      const Eigen::Vector3d u = inv_scale.cwiseProduct(t);
      const double expq = std::exp(-0.5 * u.squaredNorm());
      const double e = s.opacity * expq;
      const double* gv = g_gauss.data() + static_cast<std::size_t>(pair.voxel) * n;

      double upstream = 0.0;  // d(loss)/d(e), via the semantic dot product
      if (pair.degenerate) {
        for (int cc = 0; cc < n; ++cc) {
          upstream += gv[cc] * kY00 * coef[cc];
          g_coef[static_cast<std::size_t>(cc)] += e * kY00 * gv[cc];
        }
      } else {
        sh_basis(model.sh_degree, pair.direction, y);
        for (int cc = 0; cc < n; ++cc) {
          double sem = 0.0;
          for (int bb = 0; bb < b; ++bb) sem += y[bb] * coef[bb * n + cc];
          upstream += gv[cc] * sem;
          for (int bb = 0; bb < b; ++bb) {
            g_coef[static_cast<std::size_t>(bb) * n + cc] += e * y[bb] * gv[cc];
          }
        }
      }

      g_alpha += expq * upstream;
      const double g_qsq = -0.5 * e * upstream;
      const Eigen::Vector3d g_u = 2.0 * g_qsq * u;
      const Eigen::Vector3d g_t = g_u.cwiseProduct(inv_scale);
      g_sc -= g_u.cwiseProduct(u).cwiseProduct(inv_scale);
      g_mean -= s.rot * g_t;
      g_r += d * g_t.transpose();
    }

    // Activations: mean/scale/opacity elementwise, rotation through the
    // normalization Jacobian (zero at the identity fallback).
    double graw[kGaussianRawDim] = {0.0};
    for (int i = 0; i < 3; ++i) {
      const double th = std::tanh(raw[i]);
      graw[i] = g_mean[i] * model.spec.resolution * (1.0 - th * th);
      const double sg = sigmoid(raw[3 + i]);
      graw[3 + i] = g_sc[i] * (kScaleMax - kScaleMin) * sg * (1.0 - sg);
    }
    if (!s.quat_fallback) {
      Eigen::Matrix3d dr[4];
      rot_derivatives(s.unit_quat[0], s.unit_quat[1], s.unit_quat[2],
                      s.unit_quat[3], dr);
      Eigen::Vector4d g_unit;
      for (int i = 0; i < 4; ++i) {
        g_unit[i] = (g_r.array() * dr[i].array()).sum();
      }
      const Eigen::Vector4d qraw(raw[6], raw[7], raw[8], raw[9]);
      const double nq = qraw.norm();
      const Eigen::Vector4d back =
          (g_unit - s.unit_quat * s.unit_quat.dot(g_unit)) / nq;
      for (int i = 0; i < 4; ++i) graw[6 + i] = back[i];
    }
    graw[10] = g_alpha * s.opacity * (1.0 - s.opacity);

    for (int i = 0; i < 3; ++i) {
      g_offset[static_cast<std::size_t>(g) * 3 + i] += graw[i];
      g_scale[static_cast<std::size_t>(g) * 3 + i] += graw[3 + i];
    }
    for (int i = 0; i < 4; ++i) {
      g_rot[static_cast<std::size_t>(g) * 4 + i] += graw[6 + i];
    }
    g_opacity[static_cast<std::size_t>(g)] += graw[10];

    const double* f =
        fwd.anchor_feats.data() + static_cast<std::size_t>(g) * c;
    double* gfa = g_anchor_feat.data() + static_cast<std::size_t>(g) * c;
    for (int r = 0; r < kGaussianRawDim; ++r) {
      const double gr = graw[r];
      if (gr == 0.0) continue;
      double* gw = g_ghw + static_cast<std::size_t>(r) * c;
      const double* w =
          model.gauss_head.weight.data() + static_cast<std::size_t>(r) * c;
      for (int cc = 0; cc < c; ++cc) {
        gw[cc] += gr * f[cc];
        gfa[cc] += gr * w[cc];
      }
      g_ghb[r] += gr;
    }

    // SH coefficients: residual slice plus the shared projection.
    double* gsh = g_sh + static_cast<std::size_t>(g) * b * n;
    for (int r = 0; r < b * n; ++r) {
      const double gr = g_coef[static_cast<std::size_t>(r)];
      gsh[r] += gr;
      if (gr == 0.0) continue;
      double* gw = g_proj + static_cast<std::size_t>(r) * c;
      const double* w =
          model.proj.weight.data() + static_cast<std::size_t>(r) * c;
      for (int cc = 0; cc < c; ++cc) {
        gw[cc] += gr * f[cc];
        gfa[cc] += gr * w[cc];
      }
    }
  }

  accumulate_orth_loss_grad(model.proj, 1.0,
                            {g_proj, model.proj.weight.size()});

  // Anchor features are rows of the fused volume.
  for (int g = 0; g < k; ++g) {
    const std::size_t v = model.anchors[static_cast<std::size_t>(g)];
    const double* gfa = g_anchor_feat.data() + static_cast<std::size_t>(g) * c;
    double* gf = g_fused_feat.data() + v * c;
    for (int cc = 0; cc < c; ++cc) gf[cc] += gfa[cc];
  }

  // fused = features + sum_p w_p * plane_p; only the weights are learnable.
  const GridSpec& sp = model.spec;
  double gw0 = 0.0;
  double gw1 = 0.0;
  double gw2 = 0.0;
  for (int i = 0; i < sp.nx; ++i) {
    for (int j = 0; j < sp.ny; ++j) {
      const double* xy =
          model.planes.xy.data() + (static_cast<std::size_t>(i) * sp.ny + j) * c;
      for (int kk = 0; kk < sp.nz; ++kk) {
        const double* yz = model.planes.yz.data() +
                           (static_cast<std::size_t>(j) * sp.nz + kk) * c;
        const double* zx = model.planes.zx.data() +
                           (static_cast<std::size_t>(kk) * sp.nx + i) * c;
        const double* gf = g_fused_feat.data() +
                           static_cast<std::size_t>(sp.linear_index(i, j, kk)) * c;
        for (int cc = 0; cc < c; ++cc) {
          gw0 += gf[cc] * xy[cc];
          gw1 += gf[cc] * yz[cc];
          gw2 += gf[cc] * zx[cc];
        }
      }
    }
  }
  g_tpv[0] = gw0;
  g_tpv[1] = gw1;
  g_tpv[2] = gw2;
}

FitResult fit(SceneModel model, const LabelGrid& gt, const FitConfig& config) {
  config.validate();
  model.validate();
  model.lambda = config.lambda;
  model.cutoff = config.cutoff;
  model.proj.lambda = config.lambda;

  const ParamLayout layout = model.layout();
  std::vector<double> theta(layout.total);
  model.flatten(theta);
  std::vector<double> grad(layout.total);
  std::vector<double> m1(layout.total, 0.0);
  std::vector<double> m2(layout.total, 0.0);

  FitResult result;
  result.trajectory.reserve(static_cast<std::size_t>(config.iterations) + 1);
  double prev_loss = 0.0;

  for (int iter = 0; iter <= config.iterations; ++iter) {
    ForwardResult fwd = forward(model, gt);
    check_finite(fwd.losses, iter);

    FitRecord rec;
    rec.iteration = iter;
    rec.losses = fwd.losses;
    rec.fused_mean_iou =
        evaluate(argmax_labels(fwd.fused_logits), gt, model.num_classes)
            .mean_iou;
    rec.gauss_occupancy_iou =
        evaluate(argmax_labels(fwd.gauss_logits), gt, model.num_classes)
            .occupancy_iou;
    result.trajectory.push_back(rec);

    const double total = fwd.losses.total();
    const bool converged = config.tolerance > 0.0 && iter > 0 &&
                           std::abs(prev_loss - total) < config.tolerance;
    prev_loss = total;
    if (iter == config.iterations || converged) {
      result.gaussians = std::move(fwd.gaussians);
      result.field = std::move(fwd.field);
      break;
    }

    backward(model, gt, fwd, grad);

    if (config.optimizer == Optimizer::kAdam) {
      const double t = iter + 1;
      const double bc1 = 1.0 - std::pow(config.beta1, t);
      const double bc2 = 1.0 - std::pow(config.beta2, t);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * grad[i];
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        theta[i] -= config.step * (m1[i] / bc1) /
                    (std::sqrt(m2[i] / bc2) + config.epsilon);
      }
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= config.step * grad[i];
      }
    }
    if (config.weight_decay > 0.0) {
      for (const ParamSlice& s : layout.slices) {
        if (s.decay_exempt) continue;
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
          theta[i] -= config.step * config.weight_decay * theta[i];
        }
      }
    }
    model.unflatten(theta);
  }

  result.model = std::move(model);
  return result;
}

FdReport finite_diff_check(const SceneModel& model, const LabelGrid& gt,
                           int coords, double step, std::uint64_t seed) {
  if (coords <= 0 || !(step > 0.0)) {
    throw InvalidInput("finite difference check needs coords and step > 0");
  }
  const ForwardResult fwd = forward(model, gt);
  const ParamLayout layout = model.layout();
  std::vector<double> grad(layout.total);
  backward(model, gt, fwd, grad);

  // Round-robin over the slices so every parameter group is covered.
  Rng rng(seed);
  std::vector<std::size_t> sample;
  sample.reserve(static_cast<std::size_t>(coords));
  while (sample.size() < static_cast<std::size_t>(coords)) {
    for (const ParamSlice& s : layout.slices) {
      if (sample.size() == static_cast<std::size_t>(coords)) break;
      if (s.length == 0) continue;
      sample.push_back(
          s.offset + static_cast<std::size_t>(rng.uniform_int(
                         0, static_cast<std::int64_t>(s.length) - 1)));
    }
  }

  std::vector<double> theta(layout.total);
  model.flatten(theta);
  SceneModel probe = model;
  FdReport report;
  report.checked = coords;
  for (const std::size_t coord : sample) {
    const double saved = theta[coord];
    theta[coord] = saved + step;
    probe.unflatten(theta);
    const double hi = frozen_loss(probe, gt, fwd.support);
    theta[coord] = saved - step;
    probe.unflatten(theta);
    const double lo = frozen_loss(probe, gt, fwd.support);
    theta[coord] = saved;
    const double numeric = (hi - lo) / (2.0 * step);
    const double analytic = grad[coord];
    const double denom = std::abs(analytic) + std::abs(numeric);
    if (denom <= 1e-8) continue;
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coord = coord;
      report.worst_slice = layout.containing(coord).name;
    }
  }
  return report;
}

}  // namespace sgsplat
