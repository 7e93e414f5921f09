#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgsplat/gaussian.hpp"
#include "sgsplat/grid.hpp"
#include "sgsplat/losses.hpp"
#include "sgsplat/scene_rep.hpp"
#include "sgsplat/sh.hpp"

namespace sgsplat {

enum class Optimizer : std::uint8_t { kGradientDescent = 0, kAdam = 1 };

struct FitConfig {
  int iterations = 500;
  double step = 2e-4;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled, skips Gaussian geometry groups
  double lambda = 1e-6;
  double cutoff = 3.0;
  double tolerance = 0.0;  // stop when |Δloss| < tolerance; 0 disables
  int k = 0;               // 0: default_anchor_count(grid)
  int sh_degree = 2;
  SimilarityMode similarity = SimilarityMode::kDot;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// One anchor per 256 voxels, saturating at 1024 (the paper-scale value).
int default_anchor_count(std::size_t voxel_count);

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  bool decay_exempt = false;  // per-Gaussian groups skip weight decay
};

struct ParamLayout {
  std::vector<ParamSlice> slices;
  std::size_t total = 0;
  const ParamSlice& find(const std::string& name) const;
  const ParamSlice& containing(std::size_t coord) const;
};

/// Everything the fitter optimizes, plus the frozen inputs it reads.
///
/// Per-Gaussian parameters are residuals on top of the head outputs:
///   raw_g    = gauss_head(f_anchor_g) + residuals_g      (11 values)
///   coeffs_g = proj * f_anchor_g (reshaped) + res_sh_g
/// so at initialization (residuals zero) the Gaussians coincide with
/// init_gaussians and the SH field with expand_semantics.
struct SceneModel {
  GridSpec spec;
  int feature_channels = 0;
  int num_classes = 0;  // class logit channels, channel 0 = empty
  int sh_degree = 2;
  double lambda = 1e-6;
  double cutoff = 3.0;

  FeatureVolume features;               // frozen voxel-branch features
  TriPlane planes;                      // frozen pooled planes; weights optimizable
  std::vector<std::uint32_t> anchors;   // frozen anchor voxel ids

  LinearHead gauss_head;                // 11 x C
  LinearHead voxel_head;                // num_classes x C
  ShProjection proj;                    // (basis * num_classes) x C
  std::vector<double> res_offset;       // K x 3
  std::vector<double> res_scale;        // K x 3
  std::vector<double> res_rotation;     // K x 4
  std::vector<double> res_opacity;      // K
  std::vector<double> res_sh;           // K x basis x num_classes

  int anchor_count() const { return static_cast<int>(anchors.size()); }
  int basis() const { return sh_basis_count(sh_degree); }
  void validate() const;

  ParamLayout layout() const;
  void flatten(std::span<double> out) const;
  void unflatten(std::span<const double> in);
};

/// Assemble a model from per-voxel features: pool the planes, score
/// similarity between the voxel features and the broadcast field, pick the
/// top-k anchors, and initialize heads/projection from the seed.
SceneModel build_model(const FeatureVolume& features, int num_classes,
                       const FitConfig& config);

/// Splat support captured during a forward pass: per Gaussian, the voxels it
/// reached and the unit view directions used there. backward() and the
/// finite-difference surrogate both treat these as constants.
struct FrozenPair {
  std::uint32_t voxel = 0;
  Eigen::Vector3d direction{0.0, 0.0, 0.0};
  bool degenerate = false;  // voxel center coincides with the mean
};

struct FrozenSupport {
  std::vector<std::vector<FrozenPair>> pairs;  // indexed by Gaussian
};

struct ForwardResult {
  std::vector<SemanticGaussian> gaussians;
  ShField field;
  std::vector<double> raw;           // K x 11 post-residual head outputs
  std::vector<double> anchor_feats;  // K x C gathered fused features
  FeatureVolume fused;
  SemanticVolume gauss_logits;  // includes the empty-channel bias
  SemanticVolume voxel_logits;
  SemanticVolume fused_logits;
  FrozenSupport support;
  LossReport losses;
};

ForwardResult forward(const SceneModel& model, const LabelGrid& gt,
                      int threads = 1);

/// Total loss with the splat support and view directions pinned to
/// `support`. Equals ForwardResult::losses.total() at the capture point;
/// this is the function backward() differentiates exactly.
double frozen_loss(const SceneModel& model, const LabelGrid& gt,
                   const FrozenSupport& support);

/// Reverse-mode gradient of frozen_loss at the forward point, written into
/// `grad` (layout().total doubles).
void backward(const SceneModel& model, const LabelGrid& gt,
              const ForwardResult& fwd, std::span<double> grad);

struct FitRecord {
  int iteration = 0;
  LossReport losses;
  double fused_mean_iou = 0.0;
  double gauss_occupancy_iou = 0.0;
};

struct FitResult {
  std::vector<FitRecord> trajectory;  // iterations + 1 records
  SceneModel model;
  std::vector<SemanticGaussian> gaussians;  // final activated set
  ShField field;
};

/// Deterministic full-batch descent on the total loss. Aborts with
/// NumericError naming the offending term if any loss turns non-finite.
FitResult fit(SceneModel model, const LabelGrid& gt, const FitConfig& config);

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_coord = 0;
  std::string worst_slice;
  int checked = 0;
};

/// Central-difference check of backward() against frozen_loss over a random
/// coordinate sample touching every parameter slice. Relative error uses
/// |analytic| + |numeric| as denominator and skips pairs below 1e-8.
FdReport finite_diff_check(const SceneModel& model, const LabelGrid& gt,
                           int coords, double step, std::uint64_t seed);

}  // namespace sgsplat
