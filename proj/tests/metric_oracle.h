#pragma once

#include <optional>
#include <vector>

#include "ctxgen/datagen.h"

namespace ctxgen::testing {

// Per-pixel recount straight from label maps, with no confusion matrix.
// nullopt where the scorer is required to raise.
struct OracleMetrics {
  std::optional<double> miou;
  std::optional<double> pixel_acc;
  std::optional<double> mean_acc;
};

inline OracleMetrics BruteForceMetrics(const std::vector<LabelMap>& truth, const std::vector<LabelMap>& pred,
                                       const std::vector<int>& subset) {
  OracleMetrics out;
  double iou_sum = 0, recall_sum = 0;
  int iou_n = 0, recall_n = 0, present = 0;
  int64_t hits = 0, truths = 0;
  for (int c : subset) {
    int64_t tp = 0, fp = 0, fn = 0, t_count = 0, p_count = 0;
    for (size_t m = 0; m < truth.size(); ++m) {
      for (size_t i = 0; i < truth[m].values.size(); ++i) {
        const int t = truth[m].values[i], p = pred[m].values[i];
        if (t == kIgnore) continue;
        if (t == c) ++t_count;
        if (p == c) ++p_count;
        if (t == c && p == c) ++tp;
        if (t != c && p == c) ++fp;
        if (t == c && p != c) ++fn;
      }
    }
    if (t_count + p_count > 0) ++present;
    if (tp + fp + fn > 0) {
      iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      ++iou_n;
    }
    if (t_count > 0) {
      recall_sum += static_cast<double>(tp) / static_cast<double>(t_count);
      ++recall_n;
    }
    hits += tp;
    truths += t_count;
  }
  if (iou_n > 0) out.miou = iou_sum / iou_n;
  if (present > 0) {
    out.pixel_acc = truths == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(truths);
    out.mean_acc = recall_n == 0 ? 0.0 : recall_sum / recall_n;
  }
  return out;
}

}  // namespace ctxgen::testing
