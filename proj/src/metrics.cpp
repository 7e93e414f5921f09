#include "sgsplat/metrics.hpp"

namespace sgsplat {

LabelGrid argmax_labels(const SemanticVolume& logits) {
  LabelGrid out = LabelGrid::zeros(logits.spec, 1);
  const std::int64_t n = logits.spec.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    const double* z = logits.voxel(v).data();
    int best = 0;
    for (int c = 1; c < logits.channels; ++c) {
      if (z[c] > z[best]) best = c;
    }
    out.values[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

MetricsReport evaluate(const LabelGrid& prediction, const LabelGrid& gt,
                       int num_classes) {
  if (!(prediction.spec == gt.spec)) {
    throw InvalidInput("prediction and ground truth must share a grid");
  }
  if (num_classes < 2) {
    throw InvalidInput("need at least the empty class plus one");
  }
  MetricsReport report;
  report.per_class.assign(static_cast<std::size_t>(num_classes), ClassCounts{});
  ClassCounts occupancy;
  const std::int64_t n = gt.spec.voxel_count();
  for (std::int64_t v = 0; v < n; ++v) {
    const int truth = gt.values[static_cast<std::size_t>(v)];
    if (truth == kIgnoreLabel) continue;
    const int pred = prediction.values[static_cast<std::size_t>(v)];
    if (truth >= num_classes || pred >= num_classes) {
      throw InvalidInput("label exceeds declared class count");
    }
    if (pred == truth) {
      ++report.per_class[static_cast<std::size_t>(truth)].tp;
    } else {
      ++report.per_class[static_cast<std::size_t>(pred)].fp;
      ++report.per_class[static_cast<std::size_t>(truth)].fn;
    }
    const bool occ_t = truth != 0;
    const bool occ_p = pred != 0;
    if (occ_t && occ_p) {
      ++occupancy.tp;
    } else if (occ_p) {
      ++occupancy.fp;
    } else if (occ_t) {
      ++occupancy.fn;
    }
  }
  report.occupancy_iou = occupancy.iou();
  double sum = 0.0;
  int present = 0;
  for (int c = 1; c < num_classes; ++c) {
    const ClassCounts& cc = report.per_class[static_cast<std::size_t>(c)];
    if (cc.tp + cc.fp + cc.fn == 0) continue;
    sum += cc.iou();
    ++present;
  }
  report.mean_iou = present == 0 ? 0.0 : sum / present;
  return report;
}

}  // namespace sgsplat
