#include <filesystem>

#include <gtest/gtest.h>

#include "ctxgen/datagen.h"
#include "ctxgen/errors.h"
#include "ctxgen/io.h"
#include "test_util.h"

namespace ctxgen {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

TEST(NetpbmTest, PpmRoundTrip) {
  Tensor img({3, 5, 7});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
  const std::string bytes = EncodePpm(img);
  EXPECT_EQ(bytes.substr(0, 2), "P6");
  EXPECT_TRUE(BitIdentical(DecodePpm(bytes), img));
}

TEST(NetpbmTest, PgmRoundTrip) {
  LabelMap m(3, 4);
  for (int i = 0; i < 12; ++i) m.values[static_cast<size_t>(i)] = i == 5 ? kIgnore : i;
  EXPECT_EQ(DecodePgm(EncodePgm(m)), m);
  LabelMap bad(1, 1, 300);
  EXPECT_ANY_THROW(EncodePgm(bad));
}

TEST(NetpbmTest, TruncationIsAParseErrorWithOffset) {
  const std::string bytes = EncodePgm(LabelMap(4, 4, 1));
  try {
    DecodePgm(bytes.substr(0, bytes.size() - 3));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), bytes.size() - 3);
  }
  EXPECT_THROW(DecodePpm(EncodePpm(Tensor({3, 2, 2})).substr(0, 10)), ParseError);
  EXPECT_THROW(DecodePpm("P5\n2 2\n255\n...."), ParseError);
  EXPECT_THROW(DecodePgm(""), ParseError);
}

TEST(EmbeddingsCsvTest, RoundTripIsExact) {
  const WordEmbeddingTable t = BuildEmbeddings(DefaultCategories(), 32, 11);
  const WordEmbeddingTable back = DecodeEmbeddingsCsv(EncodeEmbeddingsCsv(t));
  EXPECT_TRUE(BitIdentical(back.rows, t.rows));
  EXPECT_EQ(back.names, t.names);
  EXPECT_EQ(back.seen_ids, t.seen_ids);
  EXPECT_EQ(back.unseen_ids, t.unseen_ids);
}

TEST(EmbeddingsCsvTest, WrongArityNamesTheRow) {
  std::string text = EncodeEmbeddingsCsv(BuildEmbeddings(DefaultCategories(), 12, 1));
  // Drop the last value of the third row.
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) pos = text.find('\n', pos) + 1;
  const size_t end = text.find('\n', pos);
  const size_t comma = text.rfind(',', end);
  text.erase(comma, end - comma);
  try {
    DecodeEmbeddingsCsv(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 4"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, RoundTripKeepsConfigHash) {
  DatasetManifest m;
  m.config = testing::TinyDatasetConfig();
  m.config.seed = 0xF000000000000001ull;
  m.config_hash = HexU64(m.config.Hash());
  m.categories = DefaultCategories();
  m.samples.push_back({"train", "train/a.ppm", "train/a.pgm", 0xFFFFFFFFFFFFFFFFull});
  m.samples.push_back({"test", "test/b.ppm", "test/b.pgm", 3});
  const std::string text = EncodeManifest(m);
  const DatasetManifest back = DecodeManifest(text);
  EXPECT_EQ(EncodeManifest(back), text);
  EXPECT_EQ(back.config_hash, HexU64(back.config.Hash()));
  EXPECT_EQ(back.samples[0].seed, 0xFFFFFFFFFFFFFFFFull);
  EXPECT_EQ(back.count("train"), 1u);
  EXPECT_THROW(DecodeManifest("format=ctxgen-corpus-1\nmystery=1\n"), ParseError);
  EXPECT_THROW(DecodeManifest("config.num_train=3\n"), ParseError);
}

TEST(CorpusFilesTest, SaveLoadIsExact) {
  TempDir dir;
  const Corpus corpus = GenerateCorpus(testing::TinyDatasetConfig(), DefaultCategories());
  SaveCorpus(corpus, dir.path() / "c");
  const Corpus back = LoadCorpus(dir.path() / "c");
  ASSERT_EQ(back.train.size(), corpus.train.size());
  ASSERT_EQ(back.test.size(), corpus.test.size());
  for (size_t i = 0; i < corpus.train.size(); ++i) {
    EXPECT_TRUE(BitIdentical(back.train[i].image, corpus.train[i].image));
    EXPECT_EQ(back.train[i].labels, corpus.train[i].labels);
    EXPECT_EQ(back.train[i].seed, corpus.train[i].seed);
  }
  for (size_t i = 0; i < corpus.test.size(); ++i) EXPECT_EQ(back.test[i].labels, corpus.test[i].labels);
  EXPECT_TRUE(BitIdentical(back.embeddings.rows, corpus.embeddings.rows));
  EXPECT_EQ(back.config.Serialize(), corpus.config.Serialize());
}

TEST(CorpusFilesTest, SameInputsSameDigest) {
  TempDir dir;
  const Corpus corpus = GenerateCorpus(testing::TinyDatasetConfig(), DefaultCategories());
  SaveCorpus(corpus, dir.path() / "a");
  SaveCorpus(GenerateCorpus(testing::TinyDatasetConfig(), DefaultCategories()), dir.path() / "b");
  EXPECT_EQ(DirectoryDigest(dir.path() / "a"), DirectoryDigest(dir.path() / "b"));
  WriteFileAtomic(dir.path() / "b" / "extra.txt", "x");
  EXPECT_NE(DirectoryDigest(dir.path() / "a"), DirectoryDigest(dir.path() / "b"));
}

TEST(CorpusFilesTest, TamperedConfigIsDetected) {
  TempDir dir;
  SaveCorpus(GenerateCorpus(testing::TinyDatasetConfig(), DefaultCategories()), dir.path());
  std::string manifest = ReadFile(dir.path() / "manifest.txt");
  const size_t pos = manifest.find("config.noise=");
  ASSERT_NE(pos, std::string::npos);
  manifest.insert(pos + 13, "9");
  WriteFileAtomic(dir.path() / "manifest.txt", manifest);
  EXPECT_THROW(LoadCorpus(dir.path()), ParseError);
}

TEST(FileTest, AtomicWriteLeavesNoTemporary) {
  TempDir dir;
  const fs::path p = dir.path() / "sub" / "f.bin";
  WriteFileAtomic(p, "hello");
  WriteFileAtomic(p, "world");
  EXPECT_EQ(ReadFile(p), "world");
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(p.parent_path())) ++files;
  EXPECT_EQ(files, 1);
  EXPECT_THROW(ReadFile(dir.path() / "missing"), IoError);
}

}  // namespace
}  // namespace ctxgen
