#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgsplat/io.hpp"
#include "sgsplat/metrics.hpp"
#include "sgsplat/pipeline.hpp"
#include "sgsplat/scene_gen.hpp"

namespace {

using namespace sgsplat;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<int> sh_degree;
  std::optional<std::string> sim_mode;
  bool deterministic = false;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--k", o.k, "Override the anchor count");
  cmd->add_option("--sh-degree", o.sh_degree, "Override the SH degree");
  cmd->add_option("--sim-mode", o.sim_mode, "Anchor similarity mode")
      ->check(CLI::IsMember({"dot", "cosine"}));
  cmd->add_flag("--deterministic", o.deterministic,
                "Force single-threaded numerics");
}

PipelineConfig make_config(const std::string& config_path, const Overrides& o) {
  PipelineConfig c =
      config_path.empty() ? PipelineConfig{} : load_config(config_path);
  if (o.seed) c.fit.seed = *o.seed;
  if (o.k) c.fit.k = *o.k;
  if (o.sh_degree) c.fit.sh_degree = *o.sh_degree;
  if (o.sim_mode) {
    c.fit.similarity = *o.sim_mode == "cosine" ? SimilarityMode::kCosine
                                               : SimilarityMode::kDot;
  }
  if (o.deterministic) c.fit.threads = 1;
  c.validate();
  return c;
}

LabelGrid load_labels(const std::string& path, std::uint16_t& num_semantic) {
  SceneData scene = read_scene(path);
  if (scene.kind != PayloadKind::kLabels) {
    throw InvalidInput("expected a label scene: " + path);
  }
  num_semantic = scene.num_semantic;
  return std::move(scene.labels);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing: " + path);
}

int run_gen(const std::string& preset, std::uint64_t seed,
            const std::string& out) {
  if (preset != "mini-street") {
    throw InvalidInput("unknown preset: " + preset);
  }
  const LabelGrid labels = mini_street(seed);
  write_scene(out, labels, kMiniStreetClasses);
  std::printf("wrote %s (%dx%dx%d labels)\n", out.c_str(), labels.spec.nx,
              labels.spec.ny, labels.spec.nz);
  return 0;
}

int run_features(const std::string& scene_path, const std::string& config_path,
                 const Overrides& o, const std::string& out) {
  const PipelineConfig config = make_config(config_path, o);
  std::uint16_t num_semantic = 0;
  const LabelGrid labels = load_labels(scene_path, num_semantic);
  const FeatureVolume features = gen_features(
      labels, config.feature_channels, config.noise, config.fit.seed);
  write_scene(out, features);
  std::printf("wrote %s (%d channels)\n", out.c_str(), features.channels);
  return 0;
}

int run_fit(const std::string& scene_path, const std::string& config_path,
            const Overrides& o, const std::string& out_dir) {
  const PipelineConfig config = make_config(config_path, o);
  std::uint16_t num_semantic = 0;
  const LabelGrid gt = load_labels(scene_path, num_semantic);
  if (num_semantic < 1) {
    throw InvalidInput("scene declares no semantic classes");
  }

  const PipelineResult result = run_pipeline(gt, num_semantic, config);

  std::filesystem::create_directories(out_dir);
  const auto at = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  write_gaussians(at("gaussians.sphg"), result.fit.gaussians,
                  result.fit.field);
  LabelGrid prediction = result.prediction;
  if (config.upsample) prediction = upsample_labels(prediction, 2);
  write_scene(at("prediction.sphv"), prediction, num_semantic);
  const NamedMetrics reports{{"fused", result.fused_metrics},
                             {"gauss", result.gauss_metrics}};
  write_text(at("metrics.txt"), serialize_metrics(reports));
  write_text(at("metrics.json"), serialize_metrics_json(reports));
  write_text(at("trajectory.txt"), serialize_trajectory(result.fit.trajectory));

  std::printf("fused mean IoU %.6f, occupancy IoU %.6f (%zu iterations)\n",
              result.fused_metrics.mean_iou, result.fused_metrics.occupancy_iou,
              result.fit.trajectory.size() - 1);
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& scene_path,
             const std::string& out_dir) {
  std::uint16_t pred_n = 0;
  std::uint16_t gt_n = 0;
  const LabelGrid pred = load_labels(pred_path, pred_n);
  const LabelGrid gt = load_labels(scene_path, gt_n);
  const int num_classes = std::max<int>(std::max(pred_n, gt_n), 1) + 1;
  const MetricsReport report = evaluate(pred, gt, num_classes);

  const NamedMetrics reports{{"eval", report}};
  std::fputs(serialize_metrics(reports).c_str(), stdout);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto at = [&](const char* name) {
      return (std::filesystem::path(out_dir) / name).string();
    };
    write_text(at("metrics.txt"), serialize_metrics(reports));
    write_text(at("metrics.json"), serialize_metrics_json(reports));
  }
  return 0;
}

int run_export(const std::string& input, const std::string& out) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw IoError("cannot open: " + input);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw IoError("truncated file: " + input);
  in.close();

  const std::string tag(magic, 4);
  if (tag == "SPHG") {
    const GaussianSet set = read_gaussians(input);
    export_gaussians_ply(out, set.gaussians);
    std::printf("wrote %s (%zu gaussians)\n", out.c_str(),
                set.gaussians.size());
  } else if (tag == "SPHV") {
    SceneData scene = read_scene(input);
    LabelGrid labels;
    if (scene.kind == PayloadKind::kLabels) {
      labels = std::move(scene.labels);
    } else if (scene.kind == PayloadKind::kLogits) {
      labels = argmax_labels(scene.logits);
    } else {
      throw InvalidInput("scalar scenes have no class colors: " + input);
    }
    export_labels_ply(out, labels);
    std::printf("wrote %s\n", out.c_str());
  } else {
    throw InvalidInput("unrecognized file magic in " + input);
  }
  return 0;
}

int run_check_grad(const std::string& scene_path,
                   const std::string& config_path, const Overrides& o,
                   int coords, double step, double tol) {
  const PipelineConfig config = make_config(config_path, o);
  std::uint16_t num_semantic = 0;
  const LabelGrid gt = load_labels(scene_path, num_semantic);
  if (num_semantic < 1) {
    throw InvalidInput("scene declares no semantic classes");
  }
  const FeatureVolume features = gen_features(
      gt, config.feature_channels, config.noise, config.fit.seed);
  const SceneModel model =
      build_model(features, num_semantic + 1, config.fit);
  const FdReport report =
      finite_diff_check(model, gt, coords, step, config.fit.seed);
  std::printf("checked %d coords, max relative error %.3e (slice %s)\n",
              report.checked, report.max_rel_error,
              report.worst_slice.empty() ? "-" : report.worst_slice.c_str());
  if (report.max_rel_error >= tol) {
    std::fprintf(stderr, "gradient check failed: %.3e >= %.3e\n",
                 report.max_rel_error, tol);
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic Gaussian scene toolkit"};
  app.require_subcommand(1);

  std::string preset = "mini-street";
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen", "Rasterize a synthetic scene");
  gen->add_option("--preset", preset, "Scene preset")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Scene seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output scene file")->required();

  std::string feat_scene;
  std::string feat_config;
  std::string feat_out;
  Overrides feat_o;
  CLI::App* features =
      app.add_subcommand("features", "Generate per-voxel features");
  features->add_option("--scene", feat_scene, "Label scene file")->required();
  features->add_option("--config", feat_config, "Config file");
  features->add_option("--out", feat_out, "Output feature file")->required();
  add_override_flags(features, feat_o);

  std::string fit_scene;
  std::string fit_config;
  std::string fit_out;
  Overrides fit_o;
  CLI::App* fit = app.add_subcommand("fit", "Fit Gaussians to a scene");
  fit->add_option("--scene", fit_scene, "Label scene file")->required();
  fit->add_option("--config", fit_config, "Config file");
  fit->add_option("--out", fit_out, "Output directory")->required();
  add_override_flags(fit, fit_o);

  std::string eval_pred;
  std::string eval_scene;
  std::string eval_out;
  CLI::App* eval =
      app.add_subcommand("eval", "Score a prediction against ground truth");
  eval->add_option("prediction", eval_pred, "Predicted label scene")
      ->required();
  eval->add_option("--scene", eval_scene, "Ground-truth scene")->required();
  eval->add_option("--out", eval_out, "Optional report directory");

  std::string export_in;
  std::string export_out;
  CLI::App* exp =
      app.add_subcommand("export", "Export a point cloud for inspection");
  exp->add_option("input", export_in, "Scene or Gaussian file")->required();
  exp->add_option("--out", export_out, "Output .ply path")->required();

  std::string cg_scene;
  std::string cg_config;
  int cg_coords = 64;
  double cg_step = 1e-5;
  double cg_tol = 1e-4;
  Overrides cg_o;
  CLI::App* cg = app.add_subcommand(
      "check-grad", "Compare analytic gradients with finite differences");
  cg->add_option("--scene", cg_scene, "Label scene file")->required();
  cg->add_option("--config", cg_config, "Config file");
  cg->add_option("--coords", cg_coords, "Coordinates to probe")
      ->capture_default_str();
  cg->add_option("--step", cg_step, "Finite-difference step")
      ->capture_default_str();
  cg->add_option("--tol", cg_tol, "Maximum relative error")
      ->capture_default_str();
  add_override_flags(cg, cg_o);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(preset, gen_seed, gen_out);
    if (features->parsed()) {
      return run_features(feat_scene, feat_config, feat_o, feat_out);
    }
    if (fit->parsed()) return run_fit(fit_scene, fit_config, fit_o, fit_out);
    if (eval->parsed()) return run_eval(eval_pred, eval_scene, eval_out);
    if (exp->parsed()) return run_export(export_in, export_out);
    if (cg->parsed()) {
      return run_check_grad(cg_scene, cg_config, cg_o, cg_coords, cg_step,
                            cg_tol);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  }
}
