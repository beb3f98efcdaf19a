#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxgen/datagen.h"
#include "ctxgen/tensor.h"

namespace ctxgen {

// counts[truth][prediction] over every category; IGNORE truth pixels are
// tallied separately and never scored.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_categories = 0);

  // Throws DimensionError on shape mismatch, ContractError on an id that is
  // neither a category nor IGNORE (predictions may not be IGNORE).
  void Update(const LabelMap& truth, const LabelMap& prediction);
  void Merge(const ConfusionMatrix& other);

  int size() const { return n_; }
  int64_t count(int truth, int prediction) const { return counts_[static_cast<size_t>(truth * n_ + prediction)]; }
  int64_t ignored() const { return ignored_; }
  int64_t truth_total(int c) const;
  int64_t prediction_total(int c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int n_ = 0;
  std::vector<int64_t> counts_;
  int64_t ignored_ = 0;
};

// IoU_c = tp / (tp + fp + fn), averaged over subset categories that appear
// in truth or prediction. Throws ContractError if none do.
double MeanIou(const ConfusionMatrix& cm, std::span<const int> subset);
// sum tp / sum truth pixels over the subset.
double PixelAccuracy(const ConfusionMatrix& cm, std::span<const int> subset);
// Mean recall over subset categories that have truth pixels.
double MeanAccuracy(const ConfusionMatrix& cm, std::span<const int> subset);
// 2su / (s + u), zero when both are zero.
double HarmonicIou(double miou_seen, double miou_unseen);

struct SplitMetrics {
  double pixel_acc = 0.0;
  double mean_acc = 0.0;
  double miou = 0.0;
};

struct MetricReport {
  SplitMetrics overall;
  SplitMetrics seen;
  SplitMetrics unseen;
  double hiou = 0.0;
};

MetricReport Evaluate(const ConfusionMatrix& cm, std::span<const int> seen_ids, std::span<const int> unseen_ids);

inline constexpr const char* kMetricCsvHeader = "iter,split,pixel_acc,mean_acc,miou_seen,miou_unseen,hiou";
// Three rows (overall, seen, unseen); pixel_acc and mean_acc belong to the
// row's split, the mIoU and hIoU columns are shared.
std::string MetricCsvRows(int64_t iter, const MetricReport& report);

struct KMeansResult {
  std::vector<int> assignment;
  Tensor centers;                  // [K, D]
  std::vector<double> objective;   // within-cluster sum of squares per iteration
  int iterations = 0;
};

// Lloyd's algorithm on rows of `points` [P, D] with seeded initial centers
// drawn from the points. At most 100 iterations; stops when no center moves
// more than 1e-9.
KMeansResult KMeans(const Tensor& points, int k, uint64_t seed);

// Per-pixel squared L2 distance between [N,C,h,w] maps -> [N,h,w].
Tensor RecLossMap(const Tensor& real, const Tensor& generated);

struct GrayImage {
  std::string pgm;
  double min = 0.0;
  double max = 0.0;
};

// Min-max normalizes one [h,w] slice of a map to 0..255.
GrayImage RenderGray(const Tensor& map, int64_t index);

// Argmax over the three scale weights per pixel, as gray levels 0/128/255.
LabelMap ScaleSelectionMap(const Tensor& scale_weights, int64_t index);

}  // namespace ctxgen
