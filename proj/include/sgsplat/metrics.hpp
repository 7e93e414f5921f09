#pragma once

#include <vector>

#include "sgsplat/grid.hpp"

namespace sgsplat {

/// Per-voxel argmax of the logits; ties resolve to the lowest channel.
LabelGrid argmax_labels(const SemanticVolume& logits);

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double iou() const {
    const std::uint64_t denom = tp + fp + fn;
    return denom == 0 ? 0.0 : static_cast<double>(tp) / denom;
  }
};

struct MetricsReport {
  std::vector<ClassCounts> per_class;  // index = class id
  double occupancy_iou = 0.0;          // class 0 = empty, rest occupied
  double mean_iou = 0.0;               // semantic classes present in gt or pred
};

/// Voxels labelled kIgnoreLabel in the ground truth are excluded everywhere.
MetricsReport evaluate(const LabelGrid& prediction, const LabelGrid& gt,
                       int num_classes);

}  // namespace sgsplat
