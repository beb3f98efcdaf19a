#include "ctxgen/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ctxgen/errors.h"
#include "ctxgen/io.h"
#include "ctxgen/rng.h"

namespace ctxgen {

ConfusionMatrix::ConfusionMatrix(int num_categories)
    : n_(num_categories), counts_(static_cast<size_t>(num_categories * num_categories), 0) {}

void ConfusionMatrix::Update(const LabelMap& truth, const LabelMap& prediction) {
  if (truth.height != prediction.height || truth.width != prediction.width) {
    throw DimensionError("confusion update: truth and prediction differ in size");
  }
  for (size_t i = 0; i < truth.values.size(); ++i) {
    const int t = truth.values[i];
    const int p = prediction.values[i];
    if (t == kIgnore) {
      ++ignored_;
      continue;
    }
    if (t < 0 || t >= n_ || p < 0 || p >= n_) {
      throw ContractError("confusion update: invalid id (truth " + std::to_string(t) + ", prediction " +
                          std::to_string(p) + ")");
    }
    ++counts_[static_cast<size_t>(t * n_ + p)];
  }
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw DimensionError("confusion merge: category counts differ");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

int64_t ConfusionMatrix::truth_total(int c) const {
  int64_t s = 0;
  for (int p = 0; p < n_; ++p) s += count(c, p);
  return s;
}

int64_t ConfusionMatrix::prediction_total(int c) const {
  int64_t s = 0;
  for (int t = 0; t < n_; ++t) s += count(t, c);
  return s;
}

double MeanIou(const ConfusionMatrix& cm, std::span<const int> subset) {
  if (subset.empty()) throw ContractError("miou: empty subset");
  double total = 0.0;
  int present = 0;
  for (int c : subset) {
    const int64_t tp = cm.count(c, c);
    const int64_t fn = cm.truth_total(c) - tp;
    const int64_t fp = cm.prediction_total(c) - tp;
    const int64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    total += static_cast<double>(tp) / static_cast<double>(denom);
    ++present;
  }
  if (present == 0) throw ContractError("miou: no subset category appears in the confusion matrix");
  return total / present;
}

double PixelAccuracy(const ConfusionMatrix& cm, std::span<const int> subset) {
  if (subset.empty()) throw ContractError("pixel accuracy: empty subset");
  int64_t tp = 0, truth = 0, pred = 0;
  for (int c : subset) {
    tp += cm.count(c, c);
    truth += cm.truth_total(c);
    pred += cm.prediction_total(c);
  }
  if (truth + pred == 0) throw ContractError("pixel accuracy: subset absent from the confusion matrix");
  return truth == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth);
}

double MeanAccuracy(const ConfusionMatrix& cm, std::span<const int> subset) {
  if (subset.empty()) throw ContractError("mean accuracy: empty subset");
  double total = 0.0;
  int present = 0, any = 0;
  for (int c : subset) {
    const int64_t truth = cm.truth_total(c);
    any += (truth + cm.prediction_total(c)) > 0;
    if (truth == 0) continue;
    total += static_cast<double>(cm.count(c, c)) / static_cast<double>(truth);
    ++present;
  }
  if (any == 0) throw ContractError("mean accuracy: subset absent from the confusion matrix");
  return present == 0 ? 0.0 : total / present;
}

double HarmonicIou(double s, double u) {
  if (s + u == 0.0) return 0.0;
  return 2.0 * s * u / (s + u);
}

MetricReport Evaluate(const ConfusionMatrix& cm, std::span<const int> seen_ids, std::span<const int> unseen_ids) {
  auto split = [&cm](std::span<const int> ids) {
    SplitMetrics m;
    m.pixel_acc = PixelAccuracy(cm, ids);
    m.mean_acc = MeanAccuracy(cm, ids);
    m.miou = MeanIou(cm, ids);
    return m;
  };
  std::vector<int> all(seen_ids.begin(), seen_ids.end());
  all.insert(all.end(), unseen_ids.begin(), unseen_ids.end());
  std::sort(all.begin(), all.end());
  MetricReport r;
  r.overall = split(all);
  r.seen = split(seen_ids);
  r.unseen = split(unseen_ids);
  r.hiou = HarmonicIou(r.seen.miou, r.unseen.miou);
  return r;
}

std::string MetricCsvRows(int64_t iter, const MetricReport& r) {
  std::string out;
  auto row = [&](const char* name, const SplitMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(iter), name,
                  m.pixel_acc, m.mean_acc, r.seen.miou, r.unseen.miou, r.hiou);
    out += buf;
  };
  row("overall", r.overall);
  row("seen", r.seen);
  row("unseen", r.unseen);
  return out;
}

KMeansResult KMeans(const Tensor& points, int k, uint64_t seed) {
  if (points.rank() != 2) throw DimensionError("kmeans: expected [P,D] points");
  const int64_t n = points.dim(0), d = points.dim(1);
  if (k < 1) throw ContractError("kmeans: K must be at least 1");
  if (n < k) throw ContractError("kmeans: fewer points than clusters");

  // Seeded partial Fisher-Yates draws K distinct starting points.
  Rng rng(seed);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  KMeansResult res;
  res.centers = Tensor({k, d});
  for (int c = 0; c < k; ++c) {
    const auto j = c + static_cast<int64_t>(rng.UniformInt(static_cast<uint64_t>(n - c)));
    std::swap(order[static_cast<size_t>(c)], order[static_cast<size_t>(j)]);
    std::copy_n(points.raw() + order[static_cast<size_t>(c)] * d, d, res.centers.raw() + c * d);
  }

  res.assignment.assign(static_cast<size_t>(n), 0);
  auto dist2 = [&](int64_t i, const Tensor& centers, int c) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = points[i * d + j] - centers[c * d + j];
      s += diff * diff;
    }
    return s;
  };
  for (int iter = 0; iter < 100; ++iter) {
    double objective = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(i, res.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double dd = dist2(i, res.centers, c);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      res.assignment[static_cast<size_t>(i)] = best;
      objective += best_d;
    }
    res.objective.push_back(objective);
    res.iterations = iter + 1;

    Tensor next({k, d});
    std::vector<int64_t> members(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<size_t>(i)];
      ++members[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j) next[c * d + j] += points[i * d + j];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (members[static_cast<size_t>(c)] == 0) {
        std::copy_n(res.centers.raw() + c * d, d, next.raw() + c * d);
        continue;
      }
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        next[c * d + j] /= static_cast<double>(members[static_cast<size_t>(c)]);
        const double diff = next[c * d + j] - res.centers[c * d + j];
        s += diff * diff;
      }
      shift = std::max(shift, std::sqrt(s));
    }
    res.centers = std::move(next);
    if (shift < 1e-9) break;
  }
  return res;
}

Tensor RecLossMap(const Tensor& real, const Tensor& generated) {
  if (real.shape() != generated.shape() || real.rank() != 4) throw DimensionError("rec loss map: shape mismatch");
  const int64_t n = real.dim(0), c = real.dim(1), h = real.dim(2), w = real.dim(3);
  Tensor out({n, h, w});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      for (int64_t p = 0; p < h * w; ++p) {
        const double d = real[(i * c + k) * h * w + p] - generated[(i * c + k) * h * w + p];
        out[i * h * w + p] += d * d;
      }
    }
  }
  return out;
}

GrayImage RenderGray(const Tensor& map, int64_t index) {
  if (map.rank() != 3) throw DimensionError("RenderGray: expected [N,h,w]");
  const int64_t h = map.dim(1), w = map.dim(2);
  const double* src = map.raw() + index * h * w;
  GrayImage g;
  g.min = *std::min_element(src, src + h * w);
  g.max = *std::max_element(src, src + h * w);
  LabelMap out(h, w, 0);
  const double range = g.max - g.min;
  for (int64_t p = 0; p < h * w; ++p) {
    out.values[static_cast<size_t>(p)] = range > 0.0 ? static_cast<int>(std::lround((src[p] - g.min) / range * 255.0)) : 0;
  }
  g.pgm = EncodePgm(out);
  return g;
}

LabelMap ScaleSelectionMap(const Tensor& a, int64_t index) {
  if (a.rank() != 4 || a.dim(1) != 3) throw DimensionError("ScaleSelectionMap: expected [N,3,h,w]");
  const int64_t h = a.dim(2), w = a.dim(3);
  LabelMap out(h, w, 0);
  constexpr int kLevels[3] = {0, 128, 255};
  for (int64_t p = 0; p < h * w; ++p) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (a[(index * 3 + k) * h * w + p] > a[(index * 3 + best) * h * w + p]) best = k;
    }
    out.values[static_cast<size_t>(p)] = kLevels[best];
  }
  return out;
}

}  // namespace ctxgen
