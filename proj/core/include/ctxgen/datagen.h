#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxgen/tensor.h"

namespace ctxgen {

// Label value for pixels excluded from losses and metrics.
inline constexpr int kIgnore = 255;

inline constexpr int kNumShapes = 4;    // disk, square, triangle, diamond
inline constexpr int kNumColors = 4;    // red, green, blue, yellow
inline constexpr int kTextureDims = 2;  // horizontal stripe, vertical stripe
inline constexpr int kAttributeDims = kNumShapes + kNumColors + kTextureDims;

// Attribute vector layout: shape one-hot | color one-hot | texture scalars.
struct CategorySpec {
  int id = 0;
  std::string name;
  std::vector<double> attributes;
  bool seen = true;

  int shape() const;
  int color() const;
  double texture(int k) const { return attributes.at(kNumShapes + kNumColors + k); }
};

// 16 categories: every (color, texture) pair once, objects of texture t drawn
// as shape t. Four of them, one per color and texture, are unseen.
std::vector<CategorySpec> DefaultCategories();

// Throws ConfigError unless ids are contiguous, there are >= 2 seen and >= 1
// unseen categories, and each unseen category shares its shape, its color and
// each texture scalar with some seen category.
void ValidateCategories(const std::vector<CategorySpec>& categories);

struct LabelMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<int> values;

  LabelMap() = default;
  LabelMap(int64_t h, int64_t w, int fill = kIgnore)
      : height(h), width(w), values(static_cast<size_t>(h * w), fill) {}
  int& at(int64_t y, int64_t x) { return values[static_cast<size_t>(y * width + x)]; }
  int at(int64_t y, int64_t x) const { return values[static_cast<size_t>(y * width + x)]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct SegSample {
  Tensor image;  // [3,H,W], values are multiples of 1/255
  LabelMap labels;
  uint64_t seed = 0;
  // Nonzero where the label is a pseudo-label from self-training; empty when
  // there are none. Pseudo-labels feed the classification loss only.
  std::vector<uint8_t> pseudo;
};

struct WordEmbeddingTable {
  int dim = 0;
  std::vector<std::string> names;
  Tensor rows;  // [K, dim], L2-normalized
  std::vector<int> seen_ids;
  std::vector<int> unseen_ids;

  int num_categories() const { return static_cast<int>(names.size()); }
  bool is_seen(int id) const;
};

// Attributes followed by a seeded Gaussian projection of the attributes,
// L2-normalized. Throws ConfigError when dim < kAttributeDims.
WordEmbeddingTable BuildEmbeddings(const std::vector<CategorySpec>& categories, int dim, uint64_t seed);

struct DatasetConfig {
  int image_size = 64;
  int num_train = 200;
  int num_test = 50;
  int min_objects = 2;
  int max_objects = 3;
  int min_radius = 9;
  int max_radius = 20;
  int stripe_period = 8;
  double noise = 0.04;
  int embedding_dim = 32;
  uint64_t seed = 7;

  // Canonical key=value lines, one per field, fixed order.
  std::string Serialize() const;
  uint64_t Hash() const;
};

DatasetConfig ParseDatasetConfig(const std::string& text);

struct Corpus {
  DatasetConfig config;
  std::vector<CategorySpec> categories;
  WordEmbeddingTable embeddings;
  std::vector<SegSample> train;
  std::vector<SegSample> test;

  int num_categories() const { return static_cast<int>(categories.size()); }
};

// Pure function of (config, categories). Training-split pixels of unseen
// categories carry kIgnore.
Corpus GenerateCorpus(const DatasetConfig& config, const std::vector<CategorySpec>& categories);

// Renders one scene. `with_unseen_labels` false masks unseen pixels.
SegSample RenderScene(const DatasetConfig& config, const std::vector<CategorySpec>& categories,
                      uint64_t sample_seed, bool with_unseen_labels);

// Nearest-neighbor (top-left) downsampling. Throws DimensionError when the
// map is not divisible by `factor`.
LabelMap DownsampleLabels(const LabelMap& labels, int factor);

// Nearest-neighbor upsampling by an integer factor.
LabelMap UpsampleLabels(const LabelMap& labels, int factor);

}  // namespace ctxgen
