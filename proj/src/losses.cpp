#include "sgsplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgsplat {

namespace {

constexpr double kLogFloor = 1e-12;

void softmax_row(const double* z, int n, double* p) {
  double m = z[0];
  for (int c = 1; c < n; ++c) m = std::max(m, z[c]);
  double sum = 0.0;
  for (int c = 0; c < n; ++c) {
    p[c] = std::exp(z[c] - m);
    sum += p[c];
  }
  const double inv = 1.0 / sum;
  for (int c = 0; c < n; ++c) p[c] *= inv;
}

void check_shapes(const SemanticVolume& logits, const LabelGrid& gt) {
  if (!(logits.spec == gt.spec)) {
    throw InvalidInput("logits and labels must share a grid");
  }
  if (logits.channels < 2) {
    throw InvalidInput("logits need at least two class channels");
  }
}

std::vector<std::int64_t> valid_voxels(const SemanticVolume& logits,
                                       const LabelGrid& gt) {
  std::vector<std::int64_t> keep;
  const std::int64_t n = gt.spec.voxel_count();
  keep.reserve(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    const int label = gt.values[static_cast<std::size_t>(v)];
    if (label == kIgnoreLabel) continue;
    if (label >= logits.channels) {
      throw InvalidInput("ground-truth label exceeds logit channels");
    }
    keep.push_back(v);
  }
  return keep;
}

// Jaccard subgradient of Berman et al.: g[i] is the increase in 1-J when the
// i-th largest error is introduced, given the descending-sorted foreground
// flags.
std::vector<double> lovasz_grad(const std::vector<double>& fg_sorted) {
  const std::size_t n = fg_sorted.size();
  const double total = std::accumulate(fg_sorted.begin(), fg_sorted.end(), 0.0);
  std::vector<double> g(n);
  double cum_fg = 0.0;
  double cum_bg = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_fg += fg_sorted[i];
    cum_bg += 1.0 - fg_sorted[i];
    const double inter = total - cum_fg;
    const double uni = total + cum_bg;
    const double jac = 1.0 - inter / uni;
    g[i] = jac - prev;
    prev = jac;
  }
  return g;
}

struct ScalTerm {
  bool active = false;
  double num = 0.0;
  double den = 0.0;
  bool floored() const { return active && num / den < kLogFloor; }
  double loss() const {
    return active ? -std::log(std::max(num / den, kLogFloor)) : 0.0;
  }
};

ScalTerm make_term(double num, double den) {
  ScalTerm t;
  if (den > 0.0) {
    t.active = true;
    t.num = num;
    t.den = den;
  }
  return t;
}

}  // namespace

double cross_entropy_loss(const SemanticVolume& logits, const LabelGrid& gt) {
  check_shapes(logits, gt);
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return 0.0;
  const int n = logits.channels;
  double total = 0.0;
  for (const std::int64_t v : keep) {
    const double* z = logits.voxel(v).data();
    double m = z[0];
    for (int c = 1; c < n; ++c) m = std::max(m, z[c]);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) sum += std::exp(z[c] - m);
    total += m + std::log(sum) - z[gt.values[static_cast<std::size_t>(v)]];
  }
  return total / static_cast<double>(keep.size());
}

void cross_entropy_grad(const SemanticVolume& logits, const LabelGrid& gt,
                        std::span<double> grad) {
  check_shapes(logits, gt);
  if (grad.size() != logits.values.size()) {
    throw InvalidInput("gradient buffer size mismatch");
  }
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return;
  const int n = logits.channels;
  const double inv = 1.0 / static_cast<double>(keep.size());
  std::vector<double> p(static_cast<std::size_t>(n));
  for (const std::int64_t v : keep) {
    softmax_row(logits.voxel(v).data(), n, p.data());
    double* g = grad.data() + static_cast<std::size_t>(v) * n;
    for (int c = 0; c < n; ++c) g[c] += p[c] * inv;
    g[gt.values[static_cast<std::size_t>(v)]] -= inv;
  }
}

double lovasz_softmax_loss(const SemanticVolume& logits, const LabelGrid& gt) {
  check_shapes(logits, gt);
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return 0.0;
  const int n = logits.channels;
  const std::size_t m = keep.size();

  std::vector<double> probs(m * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < m; ++i) {
    softmax_row(logits.voxel(keep[i]).data(), n, probs.data() + i * n);
  }
  std::vector<bool> present(static_cast<std::size_t>(n), false);
  for (const std::int64_t v : keep) {
    present[gt.values[static_cast<std::size_t>(v)]] = true;
  }

  double total = 0.0;
  int counted = 0;
  std::vector<std::size_t> order(m);
  std::vector<double> fg_sorted(m);
  for (int c = 0; c < n; ++c) {
    if (!present[static_cast<std::size_t>(c)]) continue;
    ++counted;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double fa = gt.values[static_cast<std::size_t>(keep[a])] == c ? 1.0 : 0.0;
      const double fb = gt.values[static_cast<std::size_t>(keep[b])] == c ? 1.0 : 0.0;
      const double ea = std::abs(fa - probs[a * n + c]);
      const double eb = std::abs(fb - probs[b * n + c]);
      if (ea != eb) return ea > eb;
      return a < b;
    });
    for (std::size_t i = 0; i < m; ++i) {
      fg_sorted[i] =
          gt.values[static_cast<std::size_t>(keep[order[i]])] == c ? 1.0 : 0.0;
    }
    const std::vector<double> g = lovasz_grad(fg_sorted);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      acc += std::abs(fg_sorted[i] - probs[order[i] * n + c]) * g[i];
    }
    total += acc;
  }
  return counted == 0 ? 0.0 : total / counted;
}

void lovasz_softmax_grad(const SemanticVolume& logits, const LabelGrid& gt,
                         std::span<double> grad) {
  check_shapes(logits, gt);
  if (grad.size() != logits.values.size()) {
    throw InvalidInput("gradient buffer size mismatch");
  }
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return;
  const int n = logits.channels;
  const std::size_t m = keep.size();

  std::vector<double> probs(m * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < m; ++i) {
    softmax_row(logits.voxel(keep[i]).data(), n, probs.data() + i * n);
  }
  std::vector<bool> present(static_cast<std::size_t>(n), false);
  int counted = 0;
  for (const std::int64_t v : keep) {
    const auto label = gt.values[static_cast<std::size_t>(v)];
    if (!present[label]) {
      present[label] = true;
      ++counted;
    }
  }
  if (counted == 0) return;

  // d(loss)/d(prob) summed across per-class terms, then one softmax
  // backward per voxel.
  std::vector<double> dprob(m * static_cast<std::size_t>(n), 0.0);
  std::vector<std::size_t> order(m);
  std::vector<double> fg_sorted(m);
  for (int c = 0; c < n; ++c) {
    if (!present[static_cast<std::size_t>(c)]) continue;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double fa = gt.values[static_cast<std::size_t>(keep[a])] == c ? 1.0 : 0.0;
      const double fb = gt.values[static_cast<std::size_t>(keep[b])] == c ? 1.0 : 0.0;
      const double ea = std::abs(fa - probs[a * n + c]);
      const double eb = std::abs(fb - probs[b * n + c]);
      if (ea != eb) return ea > eb;
      return a < b;
    });
    for (std::size_t i = 0; i < m; ++i) {
      fg_sorted[i] =
          gt.values[static_cast<std::size_t>(keep[order[i]])] == c ? 1.0 : 0.0;
    }
    const std::vector<double> g = lovasz_grad(fg_sorted);
    for (std::size_t i = 0; i < m; ++i) {
      const double sign = fg_sorted[i] > 0.5 ? -1.0 : 1.0;
      dprob[order[i] * n + c] += sign * g[i] / counted;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* p = probs.data() + i * n;
    const double* dp = dprob.data() + i * n;
    double inner = 0.0;
    for (int c = 0; c < n; ++c) inner += dp[c] * p[c];
    double* gz =
        grad.data() + static_cast<std::size_t>(keep[i]) * n;
    for (int c = 0; c < n; ++c) gz[c] += p[c] * (dp[c] - inner);
  }
}

namespace {

struct ScalClassStats {
  bool counted = false;
  double tp = 0.0;    // sum p*target
  double sp = 0.0;    // sum p
  double st = 0.0;    // sum target
  double tn = 0.0;    // sum (1-p)*(1-target)
  double snt = 0.0;   // sum (1-target)
  ScalTerm precision() const { return make_term(tp, sp); }
  ScalTerm recall() const { return make_term(tp, st); }
  ScalTerm specificity() const { return make_term(tn, snt); }
  double loss() const {
    return precision().loss() + recall().loss() + specificity().loss();
  }
};

struct ScalStats {
  std::vector<ScalClassStats> semantic;  // per channel
  ScalClassStats geometric;              // occupied = 1 - p(empty)
  int counted = 0;
};

ScalStats scal_stats(const SemanticVolume& logits, const LabelGrid& gt,
                     const std::vector<std::int64_t>& keep,
                     const std::vector<double>& probs) {
  const int n = logits.channels;
  ScalStats s;
  s.semantic.assign(static_cast<std::size_t>(n), ScalClassStats{});
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int label = gt.values[static_cast<std::size_t>(keep[i])];
    s.semantic[static_cast<std::size_t>(label)].counted = true;
    const double* p = probs.data() + i * n;
    for (int c = 0; c < n; ++c) {
      const double t = label == c ? 1.0 : 0.0;
      auto& cs = s.semantic[static_cast<std::size_t>(c)];
      cs.tp += p[c] * t;
      cs.sp += p[c];
      cs.st += t;
      cs.tn += (1.0 - p[c]) * (1.0 - t);
      cs.snt += 1.0 - t;
    }
    const double occ_p = 1.0 - p[0];
    const double occ_t = label != 0 ? 1.0 : 0.0;
    s.geometric.counted = true;
    s.geometric.tp += occ_p * occ_t;
    s.geometric.sp += occ_p;
    s.geometric.st += occ_t;
    s.geometric.tn += p[0] * (1.0 - occ_t);
    s.geometric.snt += 1.0 - occ_t;
  }
  for (const auto& cs : s.semantic) {
    if (cs.counted) ++s.counted;
  }
  return s;
}

}  // namespace

double scal_loss(const SemanticVolume& logits, const LabelGrid& gt) {
  check_shapes(logits, gt);
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return 0.0;
  const int n = logits.channels;
  std::vector<double> probs(keep.size() * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    softmax_row(logits.voxel(keep[i]).data(), n, probs.data() + i * n);
  }
  const ScalStats s = scal_stats(logits, gt, keep, probs);
  double semantic = 0.0;
  for (const auto& cs : s.semantic) {
    if (cs.counted) semantic += cs.loss();
  }
  if (s.counted > 0) semantic /= s.counted;
  return semantic + s.geometric.loss();
}

void scal_grad(const SemanticVolume& logits, const LabelGrid& gt,
               std::span<double> grad) {
  check_shapes(logits, gt);
  if (grad.size() != logits.values.size()) {
    throw InvalidInput("gradient buffer size mismatch");
  }
  const auto keep = valid_voxels(logits, gt);
  if (keep.empty()) return;
  const int n = logits.channels;
  std::vector<double> probs(keep.size() * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    softmax_row(logits.voxel(keep[i]).data(), n, probs.data() + i * n);
  }
  const ScalStats s = scal_stats(logits, gt, keep, probs);

  // d(-log(num/den))/d(num) = -1/num, /d(den) = 1/den, zero when floored.
  // Folded into per-class coefficients on p for target / non-target voxels.
  std::vector<double> coef_t(static_cast<std::size_t>(n), 0.0);
  std::vector<double> coef_f(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c) {
    const auto& cs = s.semantic[static_cast<std::size_t>(c)];
    if (!cs.counted) continue;
    double on_t = 0.0;
    double on_f = 0.0;
    const ScalTerm prec = cs.precision();
    if (prec.active && !prec.floored()) {
      on_t += -1.0 / prec.num + 1.0 / prec.den;
      on_f += 1.0 / prec.den;
    }
    const ScalTerm rec = cs.recall();
    if (rec.active && !rec.floored()) {
      on_t += -1.0 / rec.num;
    }
    const ScalTerm spec = cs.specificity();
    if (spec.active && !spec.floored()) {
      // tn depends on p via (1-p): d tn/dp = -(1-t)
      on_f += 1.0 / spec.num;
    }
    coef_t[static_cast<std::size_t>(c)] = on_t / s.counted;
    coef_f[static_cast<std::size_t>(c)] = on_f / s.counted;
  }
  double geo_t = 0.0;
  double geo_f = 0.0;
  {
    const auto& g = s.geometric;
    const ScalTerm prec = g.precision();
    if (prec.active && !prec.floored()) {
      geo_t += -1.0 / prec.num + 1.0 / prec.den;
      geo_f += 1.0 / prec.den;
    }
    const ScalTerm rec = g.recall();
    if (rec.active && !rec.floored()) {
      geo_t += -1.0 / rec.num;
    }
    const ScalTerm spec = g.specificity();
    if (spec.active && !spec.floored()) {
      geo_f += 1.0 / spec.num;
    }
  }

  std::vector<double> dp(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int label = gt.values[static_cast<std::size_t>(keep[i])];
    const double* p = probs.data() + i * n;
    for (int c = 0; c < n; ++c) {
      dp[static_cast<std::size_t>(c)] =
          label == c ? coef_t[static_cast<std::size_t>(c)]
                     : coef_f[static_cast<std::size_t>(c)];
    }
    // Geometric term acts on p[0] through occupied = 1 - p[0].
    dp[0] -= label != 0 ? geo_t : geo_f;
    double inner = 0.0;
    for (int c = 0; c < n; ++c) inner += dp[static_cast<std::size_t>(c)] * p[c];
    double* gz = grad.data() + static_cast<std::size_t>(keep[i]) * n;
    for (int c = 0; c < n; ++c) {
      gz[c] += p[c] * (dp[static_cast<std::size_t>(c)] - inner);
    }
  }
}

double align_loss(std::span<const double> logits_a,
                  std::span<const double> logits_b, int count, int channels) {
  if (logits_a.size() != logits_b.size() ||
      logits_a.size() != static_cast<std::size_t>(count) * channels) {
    throw InvalidInput("align loss input size mismatch");
  }
  if (count == 0) return 0.0;
  std::vector<double> p(static_cast<std::size_t>(channels));
  std::vector<double> q(static_cast<std::size_t>(channels));
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    softmax_row(logits_a.data() + static_cast<std::size_t>(i) * channels,
                channels, p.data());
    softmax_row(logits_b.data() + static_cast<std::size_t>(i) * channels,
                channels, q.data());
    for (int c = 0; c < channels; ++c) {
      const double pc = std::max(p[static_cast<std::size_t>(c)], kLogFloor);
      const double qc = std::max(q[static_cast<std::size_t>(c)], kLogFloor);
      total += pc * std::log(pc / qc) + qc * std::log(qc / pc);
    }
  }
  return total / count;
}

void align_grad(std::span<const double> logits_a,
                std::span<const double> logits_b, int count, int channels,
                std::span<double> grad_a, std::span<double> grad_b) {
  if (logits_a.size() != logits_b.size() ||
      grad_a.size() != logits_a.size() || grad_b.size() != logits_b.size()) {
    throw InvalidInput("align grad size mismatch");
  }
  if (count == 0) return;
  std::vector<double> p(static_cast<std::size_t>(channels));
  std::vector<double> q(static_cast<std::size_t>(channels));
  std::vector<double> dp(static_cast<std::size_t>(channels));
  std::vector<double> dq(static_cast<std::size_t>(channels));
  const double inv = 1.0 / count;
  for (int i = 0; i < count; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * channels;
    softmax_row(logits_a.data() + off, channels, p.data());
    softmax_row(logits_b.data() + off, channels, q.data());
    for (int c = 0; c < channels; ++c) {
      const double pc = std::max(p[static_cast<std::size_t>(c)], kLogFloor);
      const double qc = std::max(q[static_cast<std::size_t>(c)], kLogFloor);
      const double lg = std::log(pc / qc);
      dp[static_cast<std::size_t>(c)] = (lg + 1.0 - qc / pc) * inv;
      dq[static_cast<std::size_t>(c)] = (-lg + 1.0 - pc / qc) * inv;
    }
    double ip = 0.0;
    double iq = 0.0;
    for (int c = 0; c < channels; ++c) {
      ip += dp[static_cast<std::size_t>(c)] * p[static_cast<std::size_t>(c)];
      iq += dq[static_cast<std::size_t>(c)] * q[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < channels; ++c) {
      grad_a[off + static_cast<std::size_t>(c)] +=
          p[static_cast<std::size_t>(c)] *
          (dp[static_cast<std::size_t>(c)] - ip);
      grad_b[off + static_cast<std::size_t>(c)] +=
          q[static_cast<std::size_t>(c)] *
          (dq[static_cast<std::size_t>(c)] - iq);
    }
  }
}

SemanticVolume fuse_logits(const SemanticVolume& a, const SemanticVolume& b) {
  if (!(a.spec == b.spec) || a.channels != b.channels) {
    throw InvalidInput("fused branches must share shape");
  }
  SemanticVolume out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += b.values[i];
  }
  return out;
}

}  // namespace sgsplat
