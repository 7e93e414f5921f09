#pragma once

#include <string>

#include "sgsplat/fit.hpp"
#include "sgsplat/metrics.hpp"

namespace sgsplat {

struct PipelineConfig {
  FitConfig fit;
  int feature_channels = 16;
  double noise = 0.0;
  bool upsample = false;  // 2x nearest-neighbor label upsampling on export

  void validate() const;
};

/// Flat `key = value` text with '#' comments. Every field has a key; unknown
/// keys are rejected. serialize_config round-trips losslessly (%.17g).
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
std::string serialize_config(const PipelineConfig& config);

struct PipelineResult {
  MetricsReport fused_metrics;
  MetricsReport gauss_metrics;
  LabelGrid prediction;  // argmax of the fused logits
  FitResult fit;
};

/// features -> planes -> similarity -> anchors -> Gaussians -> fit -> fuse
/// -> metrics. Deterministic for a fixed config (seed, single thread).
PipelineResult run_pipeline(const LabelGrid& gt, int num_semantic,
                            const PipelineConfig& config);

/// Nearest-neighbor label upsampling by an integer factor per axis.
LabelGrid upsample_labels(const LabelGrid& labels, int factor);

using NamedMetrics = std::vector<std::pair<std::string, MetricsReport>>;

/// Flat `key = value` metrics report (%.17g doubles, deterministic order).
std::string serialize_metrics(const NamedMetrics& reports);

/// The same report as structured JSON.
std::string serialize_metrics_json(const NamedMetrics& reports);

/// One line per iteration: losses plus the tracked quality numbers.
std::string serialize_trajectory(const std::vector<FitRecord>& trajectory);

}  // namespace sgsplat
