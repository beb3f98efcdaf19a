#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxgen/datagen.h"
#include "ctxgen/losses.h"
#include "ctxgen/metrics.h"
#include "ctxgen/network.h"

namespace ctxgen {

struct TrainConfig {
  double lambda1 = 10.0;
  double lambda2 = 100.0;
  bool use_kl = true;
  bool use_adv = true;
  bool use_rec = true;
  // Expected seen:unseen pixel ratio of generated embedding maps.
  double ratio_seen = 1.0;
  double ratio_unseen = 1.0;
  double base_lr = 2.5e-4;
  // false: real features are a fixed target of the reconstruction term and
  // only the generator side receives its gradient.
  bool rec_into_features = true;
  // Gradient-norm bound per parameter group and update; 0 disables clipping.
  double grad_clip = 0.0;
  int plateau_patience = 200;
  double plateau_factor = 0.1;
  int warmup_iters = 1000;
  int alternation_period = 100;
  int total_iters = 1400;
  // false: every iteration is a training step.
  bool finetune = true;
  int batch_size = 2;
  uint64_t seed = 7;
  std::string variant = "full";
  int feature_dim = 64;
  int generator_hidden = 512;
  int backbone_width1 = 16;
  int backbone_width2 = 32;
  double slope = 0.2;
  double dropout = 0.5;
  int self_training_rounds = 0;
  double self_training_threshold = 0.9;
  int self_training_iters = 200;
  int log_every = 1;
  // 0 disables intermediate evaluation / checkpoints; the final ones are
  // always written by Run.
  int eval_every = 0;
  int checkpoint_every = 0;

  // Throws ConfigError on an out-of-range field.
  void Validate() const;
  LossWeights weights() const { return {lambda1, lambda2, use_kl, use_adv, use_rec}; }
  ModelConfig model_config(int num_classes, int embed_dim) const;
  std::string Serialize() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// key=value lines, '#' comments. Unknown keys raise ConfigError.
TrainConfig ParseTrainConfig(const std::string& text);
// Applies one key=value assignment.
void SetTrainConfigField(TrainConfig& config, const std::string& key, const std::string& value);

enum class Phase { kTrain, kFinetune };
const char* PhaseName(Phase phase);

// Iterations below warmup are TRAIN; afterwards the phase flips every
// alternation_period iterations, starting with FINETUNE.
Phase PhaseAt(int64_t iteration, const TrainConfig& config);

// Divides the learning rate by 1/factor when the observed loss has not
// improved for `patience` consecutive observations.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor) : lr_(lr), patience_(patience), factor_(factor) {}
  // Returns true when the rate was reduced by this observation.
  bool Observe(double loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = 0.0;
  bool have_best_ = false;
  int stale_ = 0;
};

struct EmbeddingMap {
  Tensor embeddings;  // [1,d,h,w]
  LabelMap labels;    // [h,w]
};

// Each pixel independently picks the seen split with probability
// r_seen / (r_seen + r_unseen), then a uniform category of that split.
EmbeddingMap BuildEmbeddingMap(const WordEmbeddingTable& table, double ratio_seen, double ratio_unseen, int64_t height,
                               int64_t width, Rng& rng);

// Confusion matrix of full-resolution predictions over `samples`.
ConfusionMatrix EvaluateModel(Model& model, std::span<const SegSample> samples, int num_categories);
MetricReport EvaluateReport(Model& model, const Corpus& corpus, std::span<const SegSample> samples);

// Pseudo-labels IGNORE pixels whose prediction is an unseen category with
// probability >= threshold. Existing labels are never replaced.
std::vector<SegSample> SelfTrainingRound(Model& model, std::span<const SegSample> samples,
                                         const WordEmbeddingTable& table, double threshold);

struct RunOutputs {
  std::filesystem::path dir;  // empty: write nothing
  std::string checkpoint_name = "checkpoint.bin";
  std::string loss_log_name = "losses.csv";
  std::string metric_log_name = "metrics.csv";
};

struct RunResult {
  MetricReport report;
  std::vector<std::string> loss_rows;
  std::vector<std::string> metric_rows;
  int64_t iterations = 0;
  double final_lr = 0.0;
};

class Trainer {
 public:
  Trainer(const Corpus& corpus, TrainConfig config);

  Model& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  double lr() const { return plateau_.lr(); }
  int64_t iteration() const { return iteration_; }
  void set_logger(std::function<void(const std::string&)> log) { log_ = std::move(log); }

  // Joint update on real features. First steps the discriminator head on the
  // negated discriminator objective, then every other trainable group on
  // cls + adv_g + lambda1 * rec + lambda2 * kl.
  LossReport TrainingStep(std::span<const SegSample* const> batch);
  // Generated-feature update; backbone and contextual module are untouched.
  LossReport FinetuningStep();

  // Next training batch from the current training set.
  std::vector<const SegSample*> NextBatch();
  // Replaces the training set (self-training).
  void SetTrainingSet(std::vector<SegSample> samples);

  // Runs total_iters iterations of the schedule plus any self-training
  // rounds, writing logs and the final checkpoint when `out.dir` is set.
  RunResult Run(const RunOutputs& out = {});

 private:
  LossReport Step(int64_t iteration);

  const Corpus& corpus_;
  TrainConfig config_;
  Model model_;
  PlateauScheduler plateau_;
  Rng batch_rng_;
  Rng noise_rng_;
  Rng dropout_rng_;
  Rng map_rng_;
  std::vector<SegSample> train_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int64_t iteration_ = 0;
  std::function<void(const std::string&)> log_;
};

// One ablation cell: a name and the config it trains with.
struct AblationCell {
  std::string name;
  TrainConfig config;
};

// Cell names: full, no_finetune, variant:<name>, module:seg_only,
// module:seg_cm, module:no_cm, no_kl, no_adv, no_rec, ratio:<a>:<b>,
// ratio:natural. Throws ConfigError on an unknown name.
AblationCell ExpandAblationCell(const TrainConfig& base, const std::string& name, const Corpus& corpus);

inline constexpr const char* kAblationCsvHeader =
    "cell,variant,ratio_seen,ratio_unseen,pixel_acc,mean_acc,miou_seen,miou_unseen,hiou";
std::string AblationCsvRow(const AblationCell& cell, const MetricReport& report);

// Trains and evaluates every cell with the base seed. The CSV starts with a
// `# corpus_digest=<digest>` line.
std::string RunAblation(const Corpus& corpus, const TrainConfig& base, const std::vector<std::string>& cells,
                        const std::string& corpus_digest, const std::function<void(const std::string&)>& log = {});

}  // namespace ctxgen
