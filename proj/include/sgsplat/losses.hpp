#pragma once

#include <span>
#include <string>
#include <vector>

#include "sgsplat/grid.hpp"

namespace sgsplat {

/// Mean softmax cross-entropy over voxels whose label is not kIgnoreLabel.
/// Returns 0 when every voxel is ignored.
double cross_entropy_loss(const SemanticVolume& logits, const LabelGrid& gt);

/// Lovasz-softmax over the classes present in the ground truth: for each
/// such class the errors |gt_onehot - p| are sorted descending (ties by
/// ascending voxel index) and folded against the Jaccard subgradient.
double lovasz_softmax_loss(const SemanticVolume& logits, const LabelGrid& gt);

/// Scene-class affinity: precision/recall/specificity log terms on softmax
/// mass, semantic variant per ground-truth-present class plus a geometric
/// variant with everything but channel 0 collapsed to "occupied".
double scal_loss(const SemanticVolume& logits, const LabelGrid& gt);

/// Mean over anchors of the symmetric KL divergence between the two
/// branches' softmax distributions; probabilities floored at 1e-12.
double align_loss(std::span<const double> logits_a,
                  std::span<const double> logits_b, int count, int channels);

/// Per-voxel logit fusion of the two branches.
SemanticVolume fuse_logits(const SemanticVolume& a, const SemanticVolume& b);

struct LossReport {
  double ce = 0.0;
  double lovasz = 0.0;
  double scal = 0.0;
  double align = 0.0;
  double orth = 0.0;
  double total() const { return ce + lovasz + scal + align + orth; }
};

/// d(cross_entropy)/d(logits), matching cross_entropy_loss.
void cross_entropy_grad(const SemanticVolume& logits, const LabelGrid& gt,
                        std::span<double> grad);

/// d(lovasz_softmax)/d(logits) under the fixed-permutation convention: the
/// sort from the forward pass is treated as constant.
void lovasz_softmax_grad(const SemanticVolume& logits, const LabelGrid& gt,
                         std::span<double> grad);

/// d(scal)/d(logits).
void scal_grad(const SemanticVolume& logits, const LabelGrid& gt,
               std::span<double> grad);

/// d(align)/d(logits_a) and d(logits_b), accumulated into the grads.
void align_grad(std::span<const double> logits_a,
                std::span<const double> logits_b, int count, int channels,
                std::span<double> grad_a, std::span<double> grad_b);

}  // namespace sgsplat
