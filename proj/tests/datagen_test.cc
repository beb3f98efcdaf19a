#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "ctxgen/datagen.h"
#include "ctxgen/errors.h"
#include "test_util.h"

namespace ctxgen {
namespace {

bool SameSample(const SegSample& a, const SegSample& b) {
  return BitIdentical(a.image, b.image) && a.labels == b.labels && a.seed == b.seed;
}

const Corpus& DefaultCorpus() {
  static const Corpus corpus = GenerateCorpus(DatasetConfig{}, DefaultCategories());
  return corpus;
}

double Cosine(const WordEmbeddingTable& t, int a, int b) {
  double s = 0;
  for (int k = 0; k < t.dim; ++k) s += t.rows[a * t.dim + k] * t.rows[b * t.dim + k];
  return s;
}

TEST(CategoriesTest, DefaultTableIsValid) {
  const std::vector<CategorySpec> cats = DefaultCategories();
  ASSERT_EQ(cats.size(), 16u);
  EXPECT_NO_THROW(ValidateCategories(cats));
  int unseen = 0;
  for (const CategorySpec& c : cats) unseen += !c.seen;
  EXPECT_EQ(unseen, 4);
}

TEST(CategoriesTest, EveryUnseenAttributeHasASeenDonor) {
  const std::vector<CategorySpec> cats = DefaultCategories();
  for (const CategorySpec& u : cats) {
    if (u.seen) continue;
    bool shape = false, color = false;
    for (const CategorySpec& s : cats) {
      if (!s.seen) continue;
      shape |= s.shape() == u.shape();
      color |= s.color() == u.color();
    }
    EXPECT_TRUE(shape && color) << u.name;
  }
}

TEST(CategoriesTest, ValidationErrors) {
  std::vector<CategorySpec> cats = DefaultCategories();
  for (CategorySpec& c : cats) c.seen = true;
  EXPECT_THROW(ValidateCategories(cats), ConfigError);
  EXPECT_THROW(GenerateCorpus(testing::TinyDatasetConfig(), cats), ConfigError);

  cats = DefaultCategories();
  cats[3].id = 7;
  EXPECT_THROW(ValidateCategories(cats), ConfigError);

  // An unseen category whose color no seen category has.
  cats = DefaultCategories();
  const int lonely_color = cats[0].color();
  for (CategorySpec& c : cats) {
    if (c.color() == lonely_color) c.seen = false;
  }
  EXPECT_THROW(ValidateCategories(cats), ConfigError);
}

TEST(EmbeddingsTest, RowsAreUnitLength) {
  const WordEmbeddingTable t = BuildEmbeddings(DefaultCategories(), 32, 5);
  ASSERT_EQ(t.rows.shape(), (Shape{16, 32}));
  for (int c = 0; c < 16; ++c) EXPECT_NEAR(Cosine(t, c, c), 1.0, 1e-9);
}

TEST(EmbeddingsTest, SplitsPartitionIds) {
  const WordEmbeddingTable t = BuildEmbeddings(DefaultCategories(), 32, 5);
  std::set<int> all(t.seen_ids.begin(), t.seen_ids.end());
  for (int u : t.unseen_ids) EXPECT_TRUE(all.insert(u).second);
  EXPECT_EQ(all.size(), 16u);
}

TEST(EmbeddingsTest, IdenticalAttributesGiveIdenticalRows) {
  std::vector<CategorySpec> cats = DefaultCategories();
  cats[1].attributes = cats[0].attributes;
  const WordEmbeddingTable t = BuildEmbeddings(cats, 20, 9);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(t.rows[k], t.rows[20 + k]);
}

TEST(EmbeddingsTest, SharedAttributesAreCloser) {
  const std::vector<CategorySpec> cats = DefaultCategories();
  const WordEmbeddingTable t = BuildEmbeddings(cats, 32, 5);
  for (int u : t.unseen_ids) {
    double best_shape = -2;
    std::vector<double> unrelated;
    for (int s : t.seen_ids) {
      const CategorySpec &a = cats[static_cast<size_t>(u)], &b = cats[static_cast<size_t>(s)];
      if (a.shape() == b.shape()) best_shape = std::max(best_shape, Cosine(t, u, s));
      if (a.shape() != b.shape() && a.color() != b.color() && a.attributes != b.attributes) {
        bool share_texture = false;
        for (int k = 0; k < kTextureDims; ++k) share_texture |= a.texture(k) == b.texture(k);
        if (!share_texture) unrelated.push_back(Cosine(t, u, s));
      }
    }
    ASSERT_FALSE(unrelated.empty());
    for (double c : unrelated) EXPECT_GT(best_shape, c) << t.names[static_cast<size_t>(u)];
  }
}

TEST(EmbeddingsTest, TooSmallDimension) {
  EXPECT_THROW(BuildEmbeddings(DefaultCategories(), kAttributeDims - 1, 1), ConfigError);
  EXPECT_NO_THROW(BuildEmbeddings(DefaultCategories(), kAttributeDims, 1));
}

TEST(CorpusTest, GenerationIsDeterministic) {
  const DatasetConfig config = testing::TinyDatasetConfig();
  const Corpus a = GenerateCorpus(config, DefaultCategories());
  const Corpus b = GenerateCorpus(config, DefaultCategories());
  ASSERT_EQ(a.train.size(), b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) EXPECT_TRUE(SameSample(a.train[i], b.train[i]));
  for (size_t i = 0; i < a.test.size(); ++i) EXPECT_TRUE(SameSample(a.test[i], b.test[i]));
  EXPECT_TRUE(BitIdentical(a.embeddings.rows, b.embeddings.rows));

  DatasetConfig other = config;
  other.seed = config.seed + 1;
  const Corpus c = GenerateCorpus(other, DefaultCategories());
  EXPECT_FALSE(SameSample(a.train[0], c.train[0]));
}

TEST(CorpusTest, DefaultCorpusCountsAndUnseenFraction) {
  const Corpus& corpus = DefaultCorpus();
  EXPECT_EQ(corpus.train.size(), 200u);
  EXPECT_EQ(corpus.test.size(), 50u);
  int64_t unseen = 0, total = 0;
  for (const SegSample& s : corpus.test) {
    EXPECT_EQ(s.image.shape(), (Shape{3, 64, 64}));
    for (int v : s.labels.values) {
      unseen += !corpus.embeddings.is_seen(v);
      ++total;
    }
  }
  const double fraction = static_cast<double>(unseen) / static_cast<double>(total);
  EXPECT_GE(fraction, 0.10);
  EXPECT_LE(fraction, 0.60);
}

TEST(CorpusTest, TrainingSplitNeverLeaksUnseenLabels) {
  const Corpus& corpus = DefaultCorpus();
  bool any_ignore = false;
  for (const SegSample& s : corpus.train) {
    for (int v : s.labels.values) {
      if (v == kIgnore) {
        any_ignore = true;
        continue;
      }
      ASSERT_GE(v, 0);
      ASSERT_LT(v, corpus.num_categories());
      ASSERT_TRUE(corpus.embeddings.is_seen(v));
    }
  }
  EXPECT_TRUE(any_ignore);
}

TEST(CorpusTest, TestLabelsAreValidAndImagesInRange) {
  for (const SegSample& s : DefaultCorpus().test) {
    for (int v : s.labels.values) {
      ASSERT_GE(v, 0);
      ASSERT_LT(v, 16);
    }
    for (double v : s.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ASSERT_EQ(std::round(v * 255.0), v * 255.0);
    }
  }
}

TEST(CorpusTest, ConfigPreconditions) {
  DatasetConfig config = testing::TinyDatasetConfig();
  config.image_size = 16;
  EXPECT_THROW(GenerateCorpus(config, DefaultCategories()), ConfigError);
}

TEST(DatasetConfigTest, ParseAndSerializeRoundTrip) {
  DatasetConfig config;
  config.num_train = 17;
  config.noise = 0.125;
  config.seed = 0xFFFFFFFFFFFFFFF0ull;
  const DatasetConfig back = ParseDatasetConfig(config.Serialize());
  EXPECT_EQ(back.Serialize(), config.Serialize());
  EXPECT_EQ(back.Hash(), config.Hash());
  EXPECT_THROW(ParseDatasetConfig("bogus=1\n"), ConfigError);
  EXPECT_THROW(ParseDatasetConfig("num_train=abc\n"), ConfigError);
  EXPECT_THROW(ParseDatasetConfig("num_train\n"), ConfigError);
  EXPECT_EQ(ParseDatasetConfig("# comment\n\nnum_test = 3\n").num_test, 3);
}

TEST(LabelResampleTest, DownsampleExamples) {
  LabelMap m(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) m.at(y, x) = (y + x) % 2;
  EXPECT_EQ(DownsampleLabels(m, 1), m);
  const LabelMap d = DownsampleLabels(m, 2);
  ASSERT_EQ(d.height, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(d.at(y, x), m.at(2 * y, 2 * x));
  const LabelMap c(8, 8, 3);
  EXPECT_EQ(DownsampleLabels(c, 4), LabelMap(2, 2, 3));
  EXPECT_EQ(DownsampleLabels(LabelMap(4, 4), 2), LabelMap(2, 2));
  EXPECT_THROW(DownsampleLabels(LabelMap(5, 4, 0), 2), DimensionError);
}

TEST(LabelResampleTest, UpsampleInvertsDownsampleOfBlocks) {
  LabelMap m(2, 3);
  for (int i = 0; i < 6; ++i) m.values[static_cast<size_t>(i)] = i;
  const LabelMap up = UpsampleLabels(m, 4);
  EXPECT_EQ(up.height, 8);
  EXPECT_EQ(up.width, 12);
  EXPECT_EQ(up.at(7, 11), 5);
  EXPECT_EQ(DownsampleLabels(up, 4), m);
}

}  // namespace
}  // namespace ctxgen
