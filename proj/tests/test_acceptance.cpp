// Acceptance gate: eight independent checks, one pass/fail line each.
// Exits nonzero if any check fails or overruns its time budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sgsplat/common.hpp"
#include "sgsplat/fit.hpp"
#include "sgsplat/gaussian.hpp"
#include "sgsplat/grid.hpp"
#include "sgsplat/io.hpp"
#include "sgsplat/losses.hpp"
#include "sgsplat/metrics.hpp"
#include "sgsplat/pipeline.hpp"
#include "sgsplat/scene_gen.hpp"
#include "sgsplat/scene_rep.hpp"
#include "sgsplat/sh.hpp"
#include "sgsplat/splat.hpp"

namespace {

using namespace sgsplat;

struct CheckResult {
  bool pass = false;
  std::string detail;
};

// Gaussian-branch occupancy IoU gain on the mini-street fixture, recorded
// as a self-baseline when the fitter was first brought up (measured
// 0.01576 from exactly this configuration). Regressions below the recorded
// margin fail the gate.
constexpr double kGaussOccupancyGainFixture = 0.015;

double frand_range(Rng& rng, double lo, double hi) { return rng.uniform(lo, hi); }

CheckResult check_splat_oracle() {
  for (int scene = 0; scene < 20; ++scene) {
    Rng rng(977u * static_cast<std::uint64_t>(scene) + 13u);
    GridSpec spec;
    spec.nx = static_cast<int>(rng.uniform_int(2, 8));
    spec.ny = static_cast<int>(rng.uniform_int(2, 8));
    spec.nz = static_cast<int>(rng.uniform_int(2, 8));
    spec.resolution = frand_range(rng, 0.1, 0.5);
    spec.origin = Eigen::Vector3d(frand_range(rng, -1.0, 1.0),
                                  frand_range(rng, -1.0, 1.0),
                                  frand_range(rng, -1.0, 1.0));
    const int channels = 1 + scene % 4;
    const int count = static_cast<int>(rng.uniform_int(1, 8));

    std::vector<SemanticGaussian> gaussians;
    for (int g = 0; g < count; ++g) {
      Eigen::Vector3d mean;
      for (int a = 0; a < 3; ++a) {
        const double extent =
            spec.resolution * (a == 0 ? spec.nx : a == 1 ? spec.ny : spec.nz);
        mean[a] = spec.origin[a] + frand_range(rng, 0.0, extent);
      }
      const Eigen::Vector3d scale(frand_range(rng, 0.05, 1.2),
                                  frand_range(rng, 0.05, 1.2),
                                  frand_range(rng, 0.05, 1.2));
      const Eigen::Vector4d quat(rng.normal(), rng.normal(), rng.normal(),
                                 rng.normal());
      std::vector<double> sem(static_cast<std::size_t>(channels));
      for (auto& s : sem) s = frand_range(rng, -1.0, 1.0);
      gaussians.push_back(SemanticGaussian::make(
          mean, scale, quat, frand_range(rng, 0.05, 1.0), std::move(sem)));
    }

    SplatOptions opts;
    opts.cutoff = kNoCutoff;
    opts.threads = 1;
    const SemanticVolume fast = splat(gaussians, spec, channels, opts);
    const SemanticVolume ref = oracles::naive_splat(gaussians, spec, channels);

    double worst = 0.0;
    for (std::size_t i = 0; i < fast.values.size(); ++i) {
      worst = std::max(worst, std::abs(fast.values[i] - ref.values[i]));
    }
    if (worst > 1e-10) {
      return {false, "scene " + std::to_string(scene) + " max |diff| " +
                         std::to_string(worst)};
    }
  }
  return {true, ""};
}

CheckResult check_sh_orthonormality() {
  constexpr int kDegree = 4;
  constexpr int kBasis = sh_basis_count(kDegree);
  constexpr int kPhi = 64;

  std::vector<double> nodes;
  std::vector<double> weights;
  oracles::gauss_legendre(16, nodes, weights);

  double gram[kBasis][kBasis] = {};
  const double pi = std::acos(-1.0);
  double y[kBasis];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double t = nodes[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (int j = 0; j < kPhi; ++j) {
      const double phi = 2.0 * pi * (j + 0.5) / kPhi;
      const Eigen::Vector3d dir(st * std::cos(phi), st * std::sin(phi), t);
      sh_basis(kDegree, dir, y);
      const double w = weights[i] * (2.0 * pi / kPhi);
      for (int a = 0; a < kBasis; ++a) {
        for (int b = 0; b < kBasis; ++b) {
          gram[a][b] += w * y[a] * y[b];
        }
      }
    }
  }

  double worst = 0.0;
  for (int a = 0; a < kBasis; ++a) {
    for (int b = 0; b < kBasis; ++b) {
      worst = std::max(worst, std::abs(gram[a][b] - (a == b ? 1.0 : 0.0)));
    }
  }
  if (worst > 1e-6) {
    return {false, "max |Gram - I| = " + std::to_string(worst)};
  }
  return {true, ""};
}

CheckResult check_gradients() {
  GridSpec spec;
  spec.nx = 14;
  spec.ny = 14;
  spec.nz = 6;
  spec.resolution = 0.25;

  LabelGrid gt = LabelGrid::zeros(spec);
  Rng rng(321);
  for (auto& v : gt.values) {
    const std::int64_t r = rng.uniform_int(0, 9);
    v = r < 5 ? 0 : static_cast<std::uint8_t>(r - 4);  // classes 0..5
  }

  const int num_classes = 6;
  // Noise keeps per-voxel logits distinct so the Lovasz sort has no exact
  // ties; at a tie the fixed-permutation derivative and the two-sided
  // difference quotient legitimately disagree.
  const FeatureVolume features = gen_features(gt, 8, 0.01, 5);

  FitConfig config;
  config.k = 6;
  config.sh_degree = 2;
  config.seed = 11;
  const SceneModel model = build_model(features, num_classes, config);

  if (model.layout().slices.size() != 11) {
    return {false, "expected 11 parameter slices"};
  }
  // 66 coordinates round-robin across the 11 slices: every group (offsets,
  // scales, rotations, opacities, SH residuals, projection, both heads,
  // plane weights) gets probed six times.
  const FdReport report = finite_diff_check(model, gt, 66, 1e-5, 17);
  if (report.checked < 64) {
    return {false, "only checked " + std::to_string(report.checked)};
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max rel error %.3e", report.max_rel_error);
  if (!(report.max_rel_error < 1e-4)) {
    return {false, std::string(buf) + " at " + report.worst_slice};
  }
  return {true, buf};
}

CheckResult check_loss_identities() {
  // Alignment: zero on identical logits, summation oracle on a known pair.
  {
    const std::vector<double> same = {1.25, -0.5, 3.0};
    if (align_loss(same, same, 1, 3) != 0.0) {
      return {false, "alignment loss nonzero on identical logits"};
    }
    const std::vector<double> a = {0.0, 0.0};  // softmax (0.5, 0.5)
    const std::vector<double> b = {std::log(0.9), std::log(0.1)};
    const double got = align_loss(a, b, 1, 2);
    const double direct =
        oracles::sym_kl(oracles::softmax_row(a.data(), 2),
                        oracles::softmax_row(b.data(), 2));
    if (std::abs(got - direct) > 1e-12) {
      return {false, "alignment disagrees with the summation oracle"};
    }
    if (std::abs(got - 0.8788898309344878) > 1e-4) {
      return {false, "alignment off the pinned (0.5,0.5)/(0.9,0.1) value: " +
                         std::to_string(got)};
    }
  }

  // Orthogonality: exact zero for orthonormal rows, exactly 2*lambda on the
  // duplicated-unit-row case.
  {
    if (orth_loss(ShProjection::identity(4, 0.5)) != 0.0) {
      return {false, "orthogonality penalty nonzero for identity"};
    }
    ShProjection dup;
    dup.rows = 2;
    dup.cols = 2;
    dup.weight = {1.0, 0.0, 1.0, 0.0};
    dup.lambda = 0.5;
    if (orth_loss(dup) != 1.0) {
      return {false, "duplicated-row penalty != 2*lambda (lambda=0.5)"};
    }
    dup.lambda = 1e-6;
    if (orth_loss(dup) != 2e-6) {
      return {false, "duplicated-row penalty != 2*lambda (lambda=1e-6)"};
    }
  }

  // Lovasz on hard binary predictions equals 1 - Jaccard, averaged over the
  // classes present in the ground truth. 2x2x1 grid, all 16x16 patterns.
  {
    GridSpec spec;
    spec.nx = 2;
    spec.ny = 2;
    spec.nz = 1;
    for (int gbits = 0; gbits < 16; ++gbits) {
      for (int pbits = 0; pbits < 16; ++pbits) {
        LabelGrid gt = LabelGrid::zeros(spec);
        SemanticVolume logits = SemanticVolume::zeros(spec, 2);
        for (int v = 0; v < 4; ++v) {
          const int g = (gbits >> v) & 1;
          const int p = (pbits >> v) & 1;
          gt.values[static_cast<std::size_t>(v)] =
              static_cast<std::uint8_t>(g);
          logits.voxel(v)[0] = p == 0 ? 500.0 : -500.0;
          logits.voxel(v)[1] = p == 0 ? -500.0 : 500.0;
        }
        double expected = 0.0;
        int present = 0;
        for (int c = 0; c < 2; ++c) {
          int inter = 0;
          int uni = 0;
          int in_gt = 0;
          for (int v = 0; v < 4; ++v) {
            const bool gc = ((gbits >> v) & 1) == c;
            const bool pc = ((pbits >> v) & 1) == c;
            in_gt += gc;
            inter += gc && pc;
            uni += gc || pc;
          }
          if (in_gt == 0) continue;
          ++present;
          expected += 1.0 - static_cast<double>(inter) / uni;
        }
        expected /= present;
        const double got = lovasz_softmax_loss(logits, gt);
        if (std::abs(got - expected) > 1e-12) {
          return {false, "gt pattern " + std::to_string(gbits) + " pred " +
                             std::to_string(pbits) + ": got " +
                             std::to_string(got) + " want " +
                             std::to_string(expected)};
        }
      }
    }
  }
  return {true, ""};
}

CheckResult check_selection_and_metrics() {
  // Anchor selection vs. a full sort, with quantized scores to force ties.
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(5000u + static_cast<std::uint64_t>(trial));
    GridSpec spec;
    spec.nx = static_cast<int>(rng.uniform_int(1, 6));
    spec.ny = static_cast<int>(rng.uniform_int(1, 6));
    spec.nz = static_cast<int>(rng.uniform_int(1, 6));
    ScalarGrid scores = ScalarGrid::zeros(spec);
    for (auto& s : scores.values) {
      s = std::floor(rng.uniform() * 8.0) / 8.0;
    }
    const int vc = static_cast<int>(spec.voxel_count());
    const int k = static_cast<int>(rng.uniform_int(1, vc));
    const auto got = select_anchors(scores, k);
    const auto want = oracles::sorted_top_k(scores.values, k);
    if (got != want) {
      return {false, "anchor mismatch on trial " + std::to_string(trial)};
    }
  }

  // Metrics vs. exhaustive confusion counting.
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(9000u + static_cast<std::uint64_t>(trial));
    GridSpec spec;
    spec.nx = static_cast<int>(rng.uniform_int(1, 8));
    spec.ny = static_cast<int>(rng.uniform_int(1, 8));
    spec.nz = static_cast<int>(rng.uniform_int(1, 8));
    const int num_classes = static_cast<int>(rng.uniform_int(2, 6));
    LabelGrid gt = LabelGrid::zeros(spec);
    LabelGrid pred = LabelGrid::zeros(spec);
    for (std::size_t v = 0; v < gt.values.size(); ++v) {
      gt.values[v] = rng.uniform() < 0.1
                         ? static_cast<std::uint8_t>(kIgnoreLabel)
                         : static_cast<std::uint8_t>(
                               rng.uniform_int(0, num_classes - 1));
      pred.values[v] =
          static_cast<std::uint8_t>(rng.uniform_int(0, num_classes - 1));
    }
    const MetricsReport got = evaluate(pred, gt, num_classes);
    const oracles::CountedMetrics want =
        oracles::count_metrics(pred, gt, num_classes);
    for (int c = 0; c < num_classes; ++c) {
      const auto& pc = got.per_class[static_cast<std::size_t>(c)];
      if (static_cast<long>(pc.tp) != want.tp[static_cast<std::size_t>(c)] ||
          static_cast<long>(pc.fp) != want.fp[static_cast<std::size_t>(c)] ||
          static_cast<long>(pc.fn) != want.fn[static_cast<std::size_t>(c)]) {
        return {false, "confusion counts differ on trial " +
                           std::to_string(trial)};
      }
    }
    if (std::abs(got.occupancy_iou - want.occupancy_iou) > 1e-12 ||
        std::abs(got.mean_iou - want.mean_iou) > 1e-12) {
      return {false, "IoU summary differs on trial " + std::to_string(trial)};
    }
  }
  return {true, ""};
}

CheckResult check_fitting_improvement() {
  const LabelGrid gt = mini_street(7);
  PipelineConfig config;
  config.feature_channels = 16;
  config.noise = 0.0;
  config.fit.iterations = 500;
  config.fit.k = 64;
  config.fit.sh_degree = 2;
  config.fit.seed = 42;
  config.fit.threads = 1;

  const PipelineResult result = run_pipeline(gt, kMiniStreetClasses, config);
  const auto& traj = result.fit.trajectory;
  if (traj.size() != 501) {
    return {false, "trajectory has " + std::to_string(traj.size()) +
                       " records, expected 501"};
  }
  const double miou0 = traj.front().fused_mean_iou;
  const double miou1 = traj.back().fused_mean_iou;
  const double occ0 = traj.front().gauss_occupancy_iou;
  const double occ1 = traj.back().gauss_occupancy_iou;
  if (!(miou1 > miou0)) {
    return {false, "fused mIoU did not improve: " + std::to_string(miou0) +
                       " -> " + std::to_string(miou1)};
  }
  if (!(occ1 - occ0 >= kGaussOccupancyGainFixture)) {
    return {false, "Gaussian occupancy gain " + std::to_string(occ1 - occ0) +
                       " below the recorded fixture " +
                       std::to_string(kGaussOccupancyGainFixture)};
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "fused mIoU %.4f -> %.4f, occupancy +%.4f",
                miou0, miou1, occ1 - occ0);
  return {true, buf};
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CheckResult check_determinism() {
  const LabelGrid gt = mini_street(3);
  PipelineConfig config;
  config.feature_channels = 8;
  config.noise = 0.05;
  config.fit.iterations = 60;
  config.fit.k = 32;
  config.fit.sh_degree = 1;
  config.fit.seed = 123;
  config.fit.threads = 1;

  const auto dir =
      std::filesystem::temp_directory_path() / "sgsplat_acceptance";
  std::filesystem::create_directories(dir);

  std::vector<std::string> runs;
  for (int run = 0; run < 2; ++run) {
    const PipelineResult r = run_pipeline(gt, kMiniStreetClasses, config);
    const auto gpath = dir / ("gaussians_" + std::to_string(run) + ".sphg");
    const auto ppath = dir / ("prediction_" + std::to_string(run) + ".sphv");
    write_gaussians(gpath.string(), r.fit.gaussians, r.fit.field);
    write_scene(ppath.string(), r.prediction,
                static_cast<std::uint16_t>(kMiniStreetClasses));
    std::string blob = file_bytes(gpath);
    blob += '\x1f';
    blob += file_bytes(ppath);
    blob += '\x1f';
    blob += serialize_metrics(
        {{"fused", r.fused_metrics}, {"gauss", r.gauss_metrics}});
    blob += '\x1f';
    blob += serialize_metrics_json(
        {{"fused", r.fused_metrics}, {"gauss", r.gauss_metrics}});
    blob += '\x1f';
    blob += serialize_trajectory(r.fit.trajectory);
    runs.push_back(std::move(blob));
  }
  std::filesystem::remove_all(dir);

  if (runs[0] != runs[1]) {
    return {false, "artifacts differ between reruns with the same seed"};
  }
  return {true, ""};
}

CheckResult check_defaults() {
  if (default_anchor_count(128 * 128 * 16) != 1024) {
    return {false, "default anchor count at full scale != 1024"};
  }
  const FitConfig defaults;
  if (defaults.lambda != 1e-6) return {false, "default lambda != 1e-6"};
  if (defaults.step != 2e-4) return {false, "default step != 2e-4"};

  PipelineConfig torture;
  torture.feature_channels = 23;
  torture.noise = 0.1 + 0.2;  // 0.30000000000000004
  torture.upsample = true;
  torture.fit.iterations = 77;
  torture.fit.step = 1.0 / 3.0;
  torture.fit.optimizer = Optimizer::kGradientDescent;
  torture.fit.beta1 = 0.123456789012345678;
  torture.fit.beta2 = 1.0 - 1e-12;
  torture.fit.epsilon = 2.2250738585072014e-308;
  torture.fit.weight_decay = 1e-2;
  torture.fit.lambda = 6.02214076e23;
  torture.fit.cutoff = 2.5000000000000004;
  torture.fit.tolerance = 1e-17;
  torture.fit.k = 77;
  torture.fit.sh_degree = 4;
  torture.fit.similarity = SimilarityMode::kCosine;
  torture.fit.seed = 0xDEADBEEFCAFEBABEull;
  torture.fit.threads = 3;

  for (const PipelineConfig& original : {PipelineConfig{}, torture}) {
    const std::string s1 = serialize_config(original);
    const PipelineConfig parsed = parse_config(s1);
    const std::string s2 = serialize_config(parsed);
    if (s1 != s2) return {false, "serialized config not stable"};
    const bool equal =
        parsed.feature_channels == original.feature_channels &&
        parsed.noise == original.noise &&
        parsed.upsample == original.upsample &&
        parsed.fit.iterations == original.fit.iterations &&
        parsed.fit.step == original.fit.step &&
        parsed.fit.optimizer == original.fit.optimizer &&
        parsed.fit.beta1 == original.fit.beta1 &&
        parsed.fit.beta2 == original.fit.beta2 &&
        parsed.fit.epsilon == original.fit.epsilon &&
        parsed.fit.weight_decay == original.fit.weight_decay &&
        parsed.fit.lambda == original.fit.lambda &&
        parsed.fit.cutoff == original.fit.cutoff &&
        parsed.fit.tolerance == original.fit.tolerance &&
        parsed.fit.k == original.fit.k &&
        parsed.fit.sh_degree == original.fit.sh_degree &&
        parsed.fit.similarity == original.fit.similarity &&
        parsed.fit.seed == original.fit.seed &&
        parsed.fit.threads == original.fit.threads;
    if (!equal) return {false, "config fields changed across a round-trip"};
  }
  return {true, ""};
}

struct Criterion {
  const char* name;
  std::function<CheckResult()> run;
  double budget_seconds;  // 0: untimed
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"splatting matches the dense covariance-inverse oracle (20 scenes)",
       check_splat_oracle, 5.0},
      {"SH basis is orthonormal under Gauss-Legendre quadrature (L=4)",
       check_sh_orthonormality, 10.0},
      {"analytic gradients match central differences in every group",
       check_gradients, 60.0},
      {"loss identities: alignment KL, orthogonality, Lovasz vs Jaccard",
       check_loss_identities, 0.0},
      {"anchor selection and metrics match exhaustive oracles",
       check_selection_and_metrics, 10.0},
      {"mini-street fit improves fused mIoU and occupancy IoU",
       check_fitting_improvement, 300.0},
      {"pipeline reruns with one seed are bitwise identical",
       check_determinism, 0.0},
      {"hyperparameter defaults and lossless config round-trip",
       check_defaults, 0.0},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (r.pass && c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      r.pass = false;
      r.detail = "over time budget (" + std::to_string(c.budget_seconds) + " s)";
    }
    std::printf("[%s] %zu. %s (%.2f s)%s%s\n", r.pass ? "PASS" : "FAIL", i + 1,
                c.name, secs, r.detail.empty() ? "" : " - ",
                r.detail.c_str());
    std::fflush(stdout);
    failed += r.pass ? 0 : 1;
  }
  std::printf("%zu/%zu acceptance checks passed\n", criteria.size() - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
