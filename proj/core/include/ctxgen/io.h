#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctxgen/datagen.h"
#include "ctxgen/tensor.h"

namespace ctxgen {

// Writes to `path`.tmp and renames over `path`, so readers never observe a
// partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes);
std::string ReadFile(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255) from a [3,H,W] tensor in [0,1].
std::string EncodePpm(const Tensor& image);
Tensor DecodePpm(std::string_view bytes);

// Binary PGM (P5, maxval 255). Label values must lie in [0,255].
std::string EncodePgm(const LabelMap& labels);
LabelMap DecodePgm(std::string_view bytes);

// One row per category: id,name,seen_flag,v0,...,v{d-1}, 17 significant
// digits.
std::string EncodeEmbeddingsCsv(const WordEmbeddingTable& table);
WordEmbeddingTable DecodeEmbeddingsCsv(std::string_view text);

// Line-oriented key=value manifest; '#' starts a comment. Keys:
//   format          ctxgen-corpus-1
//   config.<field>  every DatasetConfig field
//   config_hash     hex FNV-1a of the canonical config serialization
//   embeddings      relative path of the embedding CSV
//   category        id,name,seen_flag,a0,...,a9 (repeated)
//   sample          split,image_path,label_path,seed (repeated)
struct ManifestEntry {
  std::string split;
  std::string image_path;
  std::string label_path;
  uint64_t seed = 0;
};

struct DatasetManifest {
  DatasetConfig config;
  std::string config_hash;
  std::string embeddings_path = "embeddings.csv";
  std::vector<CategorySpec> categories;
  std::vector<ManifestEntry> samples;

  size_t count(std::string_view split) const;
};

std::string EncodeManifest(const DatasetManifest& manifest);
DatasetManifest DecodeManifest(std::string_view text);

// Writes manifest.txt, embeddings.csv and train/, test/ image and label
// files under `dir`. Returns the manifest that was written.
DatasetManifest SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus LoadCorpus(const std::filesystem::path& dir);

// Order-stable digest over every regular file below `dir` (relative path and
// content).
std::string DirectoryDigest(const std::filesystem::path& dir);

std::string HexU64(uint64_t v);

}  // namespace ctxgen
