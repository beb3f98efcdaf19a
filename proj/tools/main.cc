#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctxgen/datagen.h"
#include "ctxgen/errors.h"
#include "ctxgen/io.h"
#include "ctxgen/metrics.h"
#include "ctxgen/network.h"
#include "ctxgen/ops.h"
#include "ctxgen/trainer.h"

namespace fs = std::filesystem;
using namespace ctxgen;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Raised for problems the user fixes by changing the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void Progress(const std::string& line) { std::cerr << line << std::endl; }

std::string ReadConfigFile(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
  return ReadFile(path);
}

const std::vector<std::string> kDefaultAblationCells = {
    "full",         "no_finetune",   "module:seg_only", "module:seg_cm", "module:no_cm",
    "no_kl",        "no_adv",        "no_rec",          "ratio:natural", "ratio:1:1",
    "ratio:1:10",   "ratio:0:1",     "variant:pointwise", "variant:plain_conv", "variant:dilated",
    "variant:multiscale", "variant:masked", "variant:global_selector", "variant:no_residual",
    "variant:parallel"};

int GenData(const std::string& config_path, const std::string& out, std::optional<uint64_t> seed) {
  DatasetConfig config = ParseDatasetConfig(ReadConfigFile(config_path));
  if (seed) config.seed = *seed;
  const Corpus corpus = GenerateCorpus(config, DefaultCategories());
  SaveCorpus(corpus, out);
  std::printf("train=%zu test=%zu categories=%d seen=%zu unseen=%zu digest=%s\n", corpus.train.size(),
              corpus.test.size(), corpus.num_categories(), corpus.embeddings.seen_ids.size(),
              corpus.embeddings.unseen_ids.size(), DirectoryDigest(out).c_str());
  return 0;
}

TrainConfig LoadTrainConfig(const std::string& path) { return ParseTrainConfig(ReadConfigFile(path)); }

int Train(const std::string& data, const std::string& config_path, const std::string& out,
          const std::optional<std::string>& variant, std::optional<int> self_train) {
  TrainConfig config = LoadTrainConfig(config_path);
  if (variant) {
    try {
      VariantFromName(*variant);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    config.variant = *variant;
  }
  if (self_train) config.self_training_rounds = *self_train;
  config.Validate();
  const Corpus corpus = LoadCorpus(data);
  fs::create_directories(out);
  WriteFileAtomic(fs::path(out) / "config.txt", config.Serialize());
  Trainer trainer(corpus, config);
  trainer.set_logger(Progress);
  const RunResult result = trainer.Run({fs::path(out)});
  std::printf("iterations=%lld miou_seen=%.4f miou_unseen=%.4f hiou=%.4f\n", static_cast<long long>(result.iterations),
              result.report.seen.miou, result.report.unseen.miou, result.report.hiou);
  return 0;
}

Model LoadCompatibleModel(const std::string& checkpoint, const Corpus& corpus) {
  Model model = LoadCheckpoint(checkpoint);
  if (model.config().num_classes != corpus.num_categories()) {
    throw ContractError("category mismatch: checkpoint has " + std::to_string(model.config().num_classes) +
                        " categories, corpus has " + std::to_string(corpus.num_categories()));
  }
  return model;
}

int Eval(const std::string& data, const std::string& checkpoint, const std::string& out) {
  const Corpus corpus = LoadCorpus(data);
  Model model = LoadCompatibleModel(checkpoint, corpus);
  const MetricReport report = EvaluateReport(model, corpus, corpus.test);
  WriteFileAtomic(out, std::string(kMetricCsvHeader) + "\n" + MetricCsvRows(0, report));
  std::printf("miou_seen=%.4f miou_unseen=%.4f hiou=%.4f\n", report.seen.miou, report.unseen.miou, report.hiou);
  return 0;
}

int Ablate(const std::string& data, const std::string& config_path, const std::string& out) {
  std::istringstream in(ReadConfigFile(config_path));
  std::string line, rest;
  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    if (line.rfind("cells=", 0) == 0) {
      std::istringstream list(line.substr(6));
      std::string cell;
      while (std::getline(list, cell, ',')) {
        if (!cell.empty()) cells.push_back(cell);
      }
    } else {
      rest += line + "\n";
    }
  }
  if (cells.empty()) cells = kDefaultAblationCells;
  const TrainConfig base = ParseTrainConfig(rest);
  const Corpus corpus = LoadCorpus(data);
  const std::string csv = RunAblation(corpus, base, cells, DirectoryDigest(data), Progress);
  fs::create_directories(out);
  WriteFileAtomic(fs::path(out) / "ablation.csv", csv);
  std::printf("cells=%zu\n", cells.size());
  return 0;
}

std::string Numbered(const std::string& stem, size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem.c_str(), i, ext);
  return buf;
}

int AnalyzeKMeans(Model& model, const Corpus& corpus, const fs::path& out, const std::string& category, int k) {
  int target = -1;
  for (const CategorySpec& c : corpus.categories) {
    if (c.name == category) target = c.id;
  }
  if (target < 0) throw UsageError("unknown category '" + category + "'");
  const int stride = ModelConfig::kStride;
  std::vector<std::pair<size_t, int64_t>> where;  // (test image, pixel)
  std::vector<double> rows;
  int64_t l = 0, h = 0, w = 0;
  for (size_t i = 0; i < corpus.test.size(); ++i) {
    const SegSample& s = corpus.test[i];
    Tape tape(GroupMask::None());
    Rng unused(0);
    Var f = model.Backbone(tape, tape.Constant(StackImages({&s})));
    const Tensor& x = model.Context(tape, f, unused, Mode::kEval).x.value();
    l = x.dim(1), h = x.dim(2), w = x.dim(3);
    for (int64_t p = 0; p < h * w; ++p) {
      if (s.labels.at((p / w) * stride, (p % w) * stride) != target) continue;
      where.emplace_back(i, p);
      for (int64_t c = 0; c < l; ++c) rows.push_back(x[c * h * w + p]);
    }
  }
  if (static_cast<int64_t>(where.size()) < k) throw ContractError("too few pixels of '" + category + "' to cluster");
  const KMeansResult km = KMeans(Tensor({static_cast<int64_t>(where.size()), l}, rows), k, 1);
  std::vector<std::optional<LabelMap>> maps(corpus.test.size());
  for (size_t j = 0; j < where.size(); ++j) {
    auto& m = maps[where[j].first];
    if (!m) m = LabelMap(h, w, 0);
    const int level = k == 1 ? 255 : 64 + 191 * km.assignment[j] / (k - 1);
    m->values[static_cast<size_t>(where[j].second)] = level;
  }
  std::string csv = "image,pixels\n";
  for (size_t i = 0; i < maps.size(); ++i) {
    if (!maps[i]) continue;
    WriteFileAtomic(out / Numbered("kmeans", i, "pgm"), EncodePgm(*maps[i]));
    int64_t n = 0;
    for (int v : maps[i]->values) n += v != 0;
    csv += std::to_string(i) + "," + std::to_string(n) + "\n";
  }
  WriteFileAtomic(out / "kmeans.csv", csv);
  return 0;
}

int AnalyzeRecMap(Model& model, const Corpus& corpus, const fs::path& out, int limit) {
  const WordEmbeddingTable& table = corpus.embeddings;
  const int stride = ModelConfig::kStride;
  std::string csv = "image,variant,min,max\n";
  Rng rng(1);
  for (size_t i = 0; i < corpus.test.size() && static_cast<int>(i) < limit; ++i) {
    const SegSample& s = corpus.test[i];
    Tape tape(GroupMask::None());
    Var f = model.Backbone(tape, tape.Constant(StackImages({&s})));
    ContextOutput cm = model.Context(tape, f, rng, Mode::kEval);
    const int64_t h = f.dim(2), w = f.dim(3), d = table.dim;
    Tensor emb({1, d, h, w}, 0.0);
    for (int64_t p = 0; p < h * w; ++p) {
      const int c = s.labels.at((p / w) * stride, (p % w) * stride);
      for (int64_t k = 0; k < d; ++k) emb[k * h * w + p] = table.rows[c * d + k];
    }
    Var wmap = tape.Constant(emb);
    const Tensor ones(cm.mu.shape(), 1.0), zeros(cm.mu.shape(), 0.0);
    const bool per_channel = model.config().variant.channel_eps || !model.config().variant.enabled;
    const Var random_z = sample_latent(tape.Constant(zeros), tape.Constant(ones), rng, per_channel);
    const std::pair<const char*, Var> variants[] = {{"with_cm", cm.mu}, {"without_cm", random_z}};
    for (const auto& [name, z] : variants) {
      const Tensor map = RecLossMap(cm.x.value(), model.Generate(tape, z, wmap, rng, false).value());
      const GrayImage gray = RenderGray(map, 0);
      WriteFileAtomic(out / Numbered(std::string("recmap_") + name, i, "pgm"), gray.pgm);
      char row[128];
      std::snprintf(row, sizeof(row), "%zu,%s,%.17g,%.17g\n", i, name, gray.min, gray.max);
      csv += row;
    }
  }
  WriteFileAtomic(out / "recmap.csv", csv);
  return 0;
}

int AnalyzeScaleSelection(Model& model, const Corpus& corpus, const fs::path& out, int limit) {
  if (model.config().variant.selector == SelectorMode::kOff || !model.config().variant.enabled) {
    throw ContractError("checkpoint variant has no scale selector");
  }
  for (size_t i = 0; i < corpus.test.size() && static_cast<int>(i) < limit; ++i) {
    Tape tape(GroupMask::None());
    Rng unused(0);
    Var f = model.Backbone(tape, tape.Constant(StackImages({&corpus.test[i]})));
    const ContextOutput cm = model.Context(tape, f, unused, Mode::kEval);
    WriteFileAtomic(out / Numbered("scalesel", i, "pgm"), EncodePgm(ScaleSelectionMap(cm.scale_weights.value(), 0)));
  }
  return 0;
}

int Analyze(const std::string& checkpoint, const std::string& data, const std::string& mode, const std::string& out,
            const std::string& category, int k, int limit) {
  if (mode != "kmeans" && mode != "recmap" && mode != "scalesel") {
    throw UsageError("unknown mode '" + mode + "' (expected kmeans, recmap or scalesel)");
  }
  const Corpus corpus = LoadCorpus(data);
  Model model = LoadCompatibleModel(checkpoint, corpus);
  fs::create_directories(out);
  if (mode == "kmeans") return AnalyzeKMeans(model, corpus, out, category, k);
  if (mode == "recmap") return AnalyzeRecMap(model, corpus, out, limit);
  return AnalyzeScaleSelection(model, corpus, out, limit);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware feature generation for zero-shot segmentation on a synthetic corpus"};
  app.require_subcommand(1);

  std::string config, out, data, checkpoint, mode, category = "red_hstripe";
  std::optional<uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> self_train;
  int k = 2, limit = 8;

  CLI::App* gen = app.add_subcommand("gen-data", "Render the synthetic corpus and embedding table");
  gen->add_option("--config", config, "Dataset config file (key=value)")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  CLI::App* train = app.add_subcommand("train", "Train a model; writes checkpoint and CSV logs");
  train->add_option("--data", data, "Corpus directory")->required();
  train->add_option("--config", config, "Training config file (key=value)")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--variant", variant, "Contextual module variant");
  train->add_option("--self-train", self_train, "Number of pseudo-labeling rounds")->check(CLI::NonNegativeNumber);

  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on the test split");
  eval->add_option("--data", data, "Corpus directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--out", out, "Report CSV path")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Train and score an ablation matrix");
  ablate->add_option("--data", data, "Corpus directory")->required();
  ablate->add_option("--config", config, "Base training config; an optional cells=a,b,... line picks cells")
      ->required();
  ablate->add_option("--out", out, "Output directory")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "Write feature-analysis maps");
  analyze->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  analyze->add_option("--data", data, "Corpus directory")->required();
  analyze->add_option("--mode", mode, "kmeans, recmap or scalesel")->required();
  analyze->add_option("--out", out, "Output directory")->required();
  analyze->add_option("--category", category, "Category to cluster (kmeans)");
  analyze->add_option("--k", k, "Cluster count (kmeans)")->check(CLI::PositiveNumber);
  analyze->add_option("--limit", limit, "Number of test images (recmap, scalesel)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return GenData(config, out, seed);
    if (train->parsed()) return Train(data, config, out, variant, self_train);
    if (eval->parsed()) return Eval(data, checkpoint, out);
    if (ablate->parsed()) return Ablate(data, config, out);
    return Analyze(checkpoint, data, mode, out, category, k, limit);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
}
