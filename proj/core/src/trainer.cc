#include "ctxgen/trainer.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

#include "ctxgen/errors.h"
#include "ctxgen/io.h"
#include "ctxgen/ops.h"

namespace ctxgen {
namespace {

constexpr GroupMask kJointGroups{ParamGroup::kBackbone, ParamGroup::kContext, ParamGroup::kGenerator,
                                 ParamGroup::kSharedHead, ParamGroup::kClassifier};
constexpr GroupMask kFinetuneGroups{ParamGroup::kGenerator, ParamGroup::kSharedHead, ParamGroup::kClassifier};
constexpr GroupMask kDiscriminatorGroup{ParamGroup::kDiscriminator};
constexpr double kEmaDecay = 0.9;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ParseDouble(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
  return out;
}

template <typename Int>
Int ParseInt(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::pair<double, double> ParseRatio(const std::string& key, const std::string& v) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw ConfigError(key + ": expected <seen>:<unseen>, got '" + v + "'");
  return {ParseDouble(key, v.substr(0, colon)), ParseDouble(key, v.substr(colon + 1))};
}

std::vector<uint8_t> AllPixels(size_t n) { return std::vector<uint8_t>(n, 1); }

// Sum of weighted terms; `terms` holds (weight, loss) pairs.
Var WeightedSum(const std::vector<std::pair<double, Var>>& terms) {
  Var total;
  for (const auto& [w, v] : terms) {
    const Var t = w == 1.0 ? v : scale(v, w);
    total = total.valid() ? add(total, t) : t;
  }
  return total;
}

struct BatchTargets {
  std::vector<int> labels;      // cls targets; pseudo-labels included
  std::vector<uint8_t> real;    // labeled ground-truth pixels for rec and adv
  Tensor embeddings;            // [N,d,h,w]; zero where unlabeled
  int64_t labeled = 0;
  int64_t real_count = 0;
};

BatchTargets PrepareTargets(std::span<const SegSample* const> batch, const WordEmbeddingTable& table, int64_t h,
                            int64_t w) {
  const int64_t n = static_cast<int64_t>(batch.size());
  const int64_t d = table.dim;
  const int stride = ModelConfig::kStride;
  BatchTargets t;
  t.labels.assign(static_cast<size_t>(n * h * w), kIgnore);
  t.real.assign(static_cast<size_t>(n * h * w), 0);
  t.embeddings = Tensor({n, d, h, w}, 0.0);
  for (int64_t b = 0; b < n; ++b) {
    const SegSample& s = *batch[static_cast<size_t>(b)];
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const int64_t fy = y * stride, fx = x * stride;
        const int label = s.labels.at(fy, fx);
        if (label == kIgnore) continue;
        const size_t p = static_cast<size_t>(b * h * w + y * w + x);
        t.labels[p] = label;
        ++t.labeled;
        const bool pseudo = !s.pseudo.empty() && s.pseudo[static_cast<size_t>(fy * s.labels.width + fx)] != 0;
        if (pseudo) continue;
        t.real[p] = 1;
        ++t.real_count;
        for (int64_t c = 0; c < d; ++c) {
          t.embeddings.at(b, c, y, x) = table.rows[label * d + c];
        }
      }
    }
  }
  return t;
}

// Clipping is applied to each parameter group separately so a large term in
// one subnetwork cannot shrink the updates of another.
void Update(Model& model, GroupMask groups, double lr, double clip) {
  if (clip > 0.0) {
    for (int g = 0; g <= static_cast<int>(ParamGroup::kTest); ++g) {
      const auto group = static_cast<ParamGroup>(g);
      if (groups.contains(group)) ClipGradNorm(model.ParameterPtrs(GroupMask{group}), clip);
    }
  }
  SgdStep(model.ParameterPtrs(groups), lr);
}

// One discriminator update on detached features. Returns the objective
// value (the quantity the discriminator maximizes).
double DiscriminatorStep(Model& model, const Tensor* real, const Tensor& fake, PixelMask mask, double lr,
                         double clip) {
  Tape tape(kDiscriminatorGroup);
  Var d_real = real != nullptr ? model.Discriminate(tape, tape.Constant(*real)) : Var();
  Var d_fake = model.Discriminate(tape, tape.Constant(fake));
  Var objective = adv_objective_d(d_real, d_fake, mask);
  const double value = objective.value().item();
  tape.Backward(scale(objective, -1.0));
  Update(model, kDiscriminatorGroup, lr, clip);
  return value;
}

}  // namespace

void TrainConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(lambda1 >= 0.0 && lambda2 >= 0.0, "lambda1 and lambda2 must be non-negative");
  require(ratio_seen >= 0.0 && ratio_unseen >= 0.0, "ratio components must be non-negative");
  require(ratio_seen + ratio_unseen > 0.0, "ratio 0:0 selects no category");
  require(base_lr > 0.0, "base_lr must be positive");
  require(grad_clip >= 0.0, "grad_clip must be non-negative");
  require(plateau_patience >= 1, "plateau_patience must be >= 1");
  require(plateau_factor > 0.0 && plateau_factor <= 1.0, "plateau_factor must be in (0,1]");
  require(warmup_iters >= 0 && total_iters >= 0, "iteration counts must be non-negative");
  require(alternation_period >= 1, "alternation_period must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(feature_dim >= 1 && generator_hidden >= 1 && backbone_width1 >= 1 && backbone_width2 >= 1,
          "layer widths must be positive");
  require(slope > 0.0 && slope < 1.0, "slope must be in (0,1)");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  require(self_training_rounds >= 0 && self_training_iters >= 0, "self-training counts must be non-negative");
  require(self_training_threshold >= 0.0, "self_training_threshold must be non-negative");
  require(log_every >= 1, "log_every must be >= 1");
  require(eval_every >= 0 && checkpoint_every >= 0, "cadences must be non-negative");
  VariantFromName(variant);
}

ModelConfig TrainConfig::model_config(int num_classes, int embed_dim) const {
  ModelConfig m;
  m.num_classes = num_classes;
  m.embed_dim = embed_dim;
  m.feature_dim = feature_dim;
  m.backbone_width1 = backbone_width1;
  m.backbone_width2 = backbone_width2;
  m.generator_hidden = generator_hidden;
  m.slope = slope;
  m.dropout = dropout;
  m.variant = VariantFromName(variant);
  return m;
}

std::string TrainConfig::Serialize() const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "lambda1=" << FormatDouble(lambda1) << "\n"
     << "lambda2=" << FormatDouble(lambda2) << "\n"
     << "use_kl=" << b(use_kl) << "\n"
     << "use_adv=" << b(use_adv) << "\n"
     << "use_rec=" << b(use_rec) << "\n"
     << "ratio=" << FormatDouble(ratio_seen) << ":" << FormatDouble(ratio_unseen) << "\n"
     << "base_lr=" << FormatDouble(base_lr) << "\n"
     << "rec_into_features=" << b(rec_into_features) << "\n"
     << "grad_clip=" << FormatDouble(grad_clip) << "\n"
     << "plateau_patience=" << plateau_patience << "\n"
     << "plateau_factor=" << FormatDouble(plateau_factor) << "\n"
     << "warmup_iters=" << warmup_iters << "\n"
     << "alternation_period=" << alternation_period << "\n"
     << "total_iters=" << total_iters << "\n"
     << "finetune=" << b(finetune) << "\n"
     << "batch_size=" << batch_size << "\n"
     << "seed=" << seed << "\n"
     << "variant=" << variant << "\n"
     << "feature_dim=" << feature_dim << "\n"
     << "generator_hidden=" << generator_hidden << "\n"
     << "backbone_width1=" << backbone_width1 << "\n"
     << "backbone_width2=" << backbone_width2 << "\n"
     << "slope=" << FormatDouble(slope) << "\n"
     << "dropout=" << FormatDouble(dropout) << "\n"
     << "self_training_rounds=" << self_training_rounds << "\n"
     << "self_training_threshold=" << FormatDouble(self_training_threshold) << "\n"
     << "self_training_iters=" << self_training_iters << "\n"
     << "log_every=" << log_every << "\n"
     << "eval_every=" << eval_every << "\n"
     << "checkpoint_every=" << checkpoint_every << "\n";
  return os.str();
}

void SetTrainConfigField(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "lambda1") c.lambda1 = ParseDouble(key, value);
  else if (key == "lambda2") c.lambda2 = ParseDouble(key, value);
  else if (key == "use_kl") c.use_kl = ParseBool(key, value);
  else if (key == "use_adv") c.use_adv = ParseBool(key, value);
  else if (key == "use_rec") c.use_rec = ParseBool(key, value);
  else if (key == "ratio") std::tie(c.ratio_seen, c.ratio_unseen) = ParseRatio(key, value);
  else if (key == "base_lr") c.base_lr = ParseDouble(key, value);
  else if (key == "rec_into_features") c.rec_into_features = ParseBool(key, value);
  else if (key == "grad_clip") c.grad_clip = ParseDouble(key, value);
  else if (key == "plateau_patience") c.plateau_patience = ParseInt<int>(key, value);
  else if (key == "plateau_factor") c.plateau_factor = ParseDouble(key, value);
  else if (key == "warmup_iters") c.warmup_iters = ParseInt<int>(key, value);
  else if (key == "alternation_period") c.alternation_period = ParseInt<int>(key, value);
  else if (key == "total_iters") c.total_iters = ParseInt<int>(key, value);
  else if (key == "finetune") c.finetune = ParseBool(key, value);
  else if (key == "batch_size") c.batch_size = ParseInt<int>(key, value);
  else if (key == "seed") c.seed = ParseInt<uint64_t>(key, value);
  else if (key == "variant") c.variant = value;
  else if (key == "feature_dim") c.feature_dim = ParseInt<int>(key, value);
  else if (key == "generator_hidden") c.generator_hidden = ParseInt<int>(key, value);
  else if (key == "backbone_width1") c.backbone_width1 = ParseInt<int>(key, value);
  else if (key == "backbone_width2") c.backbone_width2 = ParseInt<int>(key, value);
  else if (key == "slope") c.slope = ParseDouble(key, value);
  else if (key == "dropout") c.dropout = ParseDouble(key, value);
  else if (key == "self_training_rounds") c.self_training_rounds = ParseInt<int>(key, value);
  else if (key == "self_training_threshold") c.self_training_threshold = ParseDouble(key, value);
  else if (key == "self_training_iters") c.self_training_iters = ParseInt<int>(key, value);
  else if (key == "log_every") c.log_every = ParseInt<int>(key, value);
  else if (key == "eval_every") c.eval_every = ParseInt<int>(key, value);
  else if (key == "checkpoint_every") c.checkpoint_every = ParseInt<int>(key, value);
  else throw ConfigError("train config: unknown key '" + key + "'");
}

TrainConfig ParseTrainConfig(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("train config line " + std::to_string(line_no) + ": expected key=value");
    }
    SetTrainConfigField(config, Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
  }
  config.Validate();
  return config;
}

const char* PhaseName(Phase phase) { return phase == Phase::kTrain ? "train" : "finetune"; }

Phase PhaseAt(int64_t iteration, const TrainConfig& config) {
  if (!config.finetune || iteration < config.warmup_iters) return Phase::kTrain;
  const int64_t block = (iteration - config.warmup_iters) / config.alternation_period;
  return block % 2 == 0 ? Phase::kFinetune : Phase::kTrain;
}

bool PlateauScheduler::Observe(double loss) {
  if (!have_best_ || loss < best_) {
    best_ = loss;
    have_best_ = true;
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  lr_ *= factor_;
  stale_ = 0;
  return true;
}

EmbeddingMap BuildEmbeddingMap(const WordEmbeddingTable& table, double ratio_seen, double ratio_unseen, int64_t height,
                               int64_t width, Rng& rng) {
  if (ratio_seen < 0.0 || ratio_unseen < 0.0 || ratio_seen + ratio_unseen <= 0.0) {
    throw ConfigError("embedding map: ratio " + FormatDouble(ratio_seen) + ":" + FormatDouble(ratio_unseen) +
                      " selects no category");
  }
  if (ratio_seen > 0.0 && table.seen_ids.empty()) throw ConfigError("embedding map: no seen categories");
  if (ratio_unseen > 0.0 && table.unseen_ids.empty()) throw ConfigError("embedding map: no unseen categories");
  const int64_t d = table.dim;
  const double p_seen = ratio_seen / (ratio_seen + ratio_unseen);
  EmbeddingMap out{Tensor({1, d, height, width}, 0.0), LabelMap(height, width)};
  for (int64_t p = 0; p < height * width; ++p) {
    const std::vector<int>& split = rng.Bernoulli(p_seen) ? table.seen_ids : table.unseen_ids;
    const int id = split[rng.UniformInt(split.size())];
    out.labels.values[static_cast<size_t>(p)] = id;
    for (int64_t c = 0; c < d; ++c) out.embeddings[c * height * width + p] = table.rows[id * d + c];
  }
  return out;
}

ConfusionMatrix EvaluateModel(Model& model, std::span<const SegSample> samples, int num_categories) {
  ConfusionMatrix cm(num_categories);
  for (const SegSample& s : samples) {
    const std::vector<LabelMap> pred = model.SegmentFull(StackImages({&s}));
    cm.Update(s.labels, pred.front());
  }
  return cm;
}

MetricReport EvaluateReport(Model& model, const Corpus& corpus, std::span<const SegSample> samples) {
  const ConfusionMatrix cm = EvaluateModel(model, samples, corpus.num_categories());
  return Evaluate(cm, corpus.embeddings.seen_ids, corpus.embeddings.unseen_ids);
}

std::vector<SegSample> SelfTrainingRound(Model& model, std::span<const SegSample> samples,
                                         const WordEmbeddingTable& table, double threshold) {
  std::vector<SegSample> out(samples.begin(), samples.end());
  const int stride = ModelConfig::kStride;
  for (SegSample& s : out) {
    const Tensor probs = model.Probabilities(StackImages({&s}));
    const int64_t k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
    const int64_t height = s.labels.height, width = s.labels.width;
    if (s.pseudo.empty()) s.pseudo.assign(static_cast<size_t>(height * width), 0);
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        int& label = s.labels.at(y, x);
        if (label != kIgnore) continue;
        const int64_t p = (y / stride) * w + (x / stride);
        int best = 0;
        for (int64_t c = 1; c < k; ++c) {
          if (probs[c * h * w + p] > probs[best * h * w + p]) best = static_cast<int>(c);
        }
        if (table.is_seen(best) || probs[best * h * w + p] < threshold) continue;
        label = best;
        s.pseudo[static_cast<size_t>(y * width + x)] = 1;
      }
    }
  }
  return out;
}

Trainer::Trainer(const Corpus& corpus, TrainConfig config)
    : corpus_(corpus),
      config_(std::move(config)),
      plateau_(config_.base_lr, config_.plateau_patience, config_.plateau_factor),
      batch_rng_(Rng(config_.seed).Fork(1)),
      noise_rng_(Rng(config_.seed).Fork(2)),
      dropout_rng_(Rng(config_.seed).Fork(3)),
      map_rng_(Rng(config_.seed).Fork(4)) {
  config_.Validate();
  if (corpus.train.empty()) throw ConfigError("trainer: empty training split");
  model_ = Model(config_.model_config(corpus.num_categories(), corpus.embeddings.dim), config_.seed);
  SetTrainingSet(corpus.train);
}

void Trainer::SetTrainingSet(std::vector<SegSample> samples) {
  if (samples.empty()) throw ConfigError("trainer: empty training set");
  train_ = std::move(samples);
  order_.resize(train_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();
}

std::vector<const SegSample*> Trainer::NextBatch() {
  std::vector<const SegSample*> batch;
  while (batch.size() < static_cast<size_t>(config_.batch_size)) {
    if (cursor_ >= order_.size()) {
      for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[batch_rng_.UniformInt(i)]);
      cursor_ = 0;
    }
    batch.push_back(&train_[order_[cursor_++]]);
  }
  return batch;
}

LossReport Trainer::TrainingStep(std::span<const SegSample* const> batch) {
  const LossWeights weights = config_.weights();
  const double lr = plateau_.lr();
  const Tensor images = StackImages(std::vector<const SegSample*>(batch.begin(), batch.end()));
  const int64_t h = images.dim(2) / ModelConfig::kStride, w = images.dim(3) / ModelConfig::kStride;
  const BatchTargets targets = PrepareTargets(batch, corpus_.embeddings, h, w);
  LossReport report;
  if (targets.labeled == 0) {
    if (log_) log_("warning: batch with no labeled pixels skipped");
    return report;
  }
  report.pixel_count = targets.labeled;
  const bool has_real = targets.real_count > 0;

  Tape tape(kJointGroups);
  Var f = model_.Backbone(tape, tape.Constant(images));
  ContextOutput cm = model_.Context(tape, f, noise_rng_, Mode::kTrain);
  Var x_gen = model_.Generate(tape, cm.z, tape.Constant(targets.embeddings), dropout_rng_, true);

  if (weights.use_adv && has_real) {
    report.adv_d = DiscriminatorStep(model_, &cm.x.value(), x_gen.value(), targets.real, lr, config_.grad_clip);
  }

  std::vector<std::pair<double, Var>> terms;
  Var cls = cls_loss(model_.ClassifierLogits(tape, cm.x), targets.labels);
  report.cls = cls.value().item();
  terms.emplace_back(1.0, cls);
  if (weights.use_adv && has_real) {
    Var adv = adv_objective_g(model_.DiscriminateFixed(tape, x_gen), targets.real);
    report.adv_g = adv.value().item();
    terms.emplace_back(1.0, adv);
  }
  if (weights.use_rec && has_real) {
    Var rec = rec_loss(config_.rec_into_features ? cm.x : tape.Constant(cm.x.value()), x_gen, targets.real);
    report.rec = rec.value().item();
    if (weights.lambda1 > 0.0) terms.emplace_back(weights.lambda1, rec);
  }
  if (weights.use_kl) {
    Var kl = kl_loss(cm.mu, cm.sigma);
    report.kl = kl.value().item();
    if (weights.lambda2 > 0.0) terms.emplace_back(weights.lambda2, kl);
  }
  report.total = TrainObjective(report, weights);
  tape.Backward(WeightedSum(terms));
  Update(model_, kJointGroups, lr, config_.grad_clip);
  model_.EnforceConstraints();
  return report;
}

LossReport Trainer::FinetuningStep() {
  const LossWeights weights = config_.weights();
  const double lr = plateau_.lr();
  const int64_t n = config_.batch_size;
  const int64_t h = corpus_.config.image_size / ModelConfig::kStride;
  const int64_t w = corpus_.config.image_size / ModelConfig::kStride;
  const int64_t d = corpus_.embeddings.dim;
  const int64_t l = model_.config().feature_dim;

  Tensor embeddings({n, d, h, w}, 0.0);
  std::vector<int> labels(static_cast<size_t>(n * h * w));
  for (int64_t b = 0; b < n; ++b) {
    const EmbeddingMap map = BuildEmbeddingMap(corpus_.embeddings, config_.ratio_seen, config_.ratio_unseen, h, w,
                                               map_rng_);
    std::copy(map.embeddings.raw(), map.embeddings.raw() + map.embeddings.size(), embeddings.raw() + b * d * h * w);
    std::copy(map.labels.values.begin(), map.labels.values.end(), labels.begin() + b * h * w);
  }
  const std::vector<uint8_t> mask = AllPixels(labels.size());

  Tape tape(kFinetuneGroups);
  const ContextVariant& v = model_.config().variant;
  const bool per_channel = v.channel_eps || !v.enabled;
  Var z = sample_latent(tape.Constant(Tensor({n, l, h, w}, 0.0)), tape.Constant(Tensor({n, l, h, w}, 1.0)),
                        noise_rng_, per_channel);
  Var x_gen = model_.Generate(tape, z, tape.Constant(embeddings), dropout_rng_, true);

  LossReport report;
  report.pixel_count = static_cast<int64_t>(labels.size());
  if (weights.use_adv) report.adv_d = DiscriminatorStep(model_, nullptr, x_gen.value(), mask, lr, config_.grad_clip);

  std::vector<std::pair<double, Var>> terms;
  Var cls = cls_loss(model_.ClassifierLogits(tape, x_gen), labels);
  report.cls = cls.value().item();
  terms.emplace_back(1.0, cls);
  if (weights.use_adv) {
    Var adv = adv_objective_g(model_.DiscriminateFixed(tape, x_gen), mask);
    report.adv_g = adv.value().item();
    terms.emplace_back(1.0, adv);
  }
  report.total = FinetuneObjective(report, weights);
  tape.Backward(WeightedSum(terms));
  Update(model_, kFinetuneGroups, lr, config_.grad_clip);
  return report;
}

LossReport Trainer::Step(int64_t iteration) {
  if (PhaseAt(iteration, config_) == Phase::kFinetune) return FinetuningStep();
  const std::vector<const SegSample*> batch = NextBatch();
  return TrainingStep(batch);
}

RunResult Trainer::Run(const RunOutputs& out) {
  RunResult result;
  result.loss_rows.push_back(kLossCsvHeader);
  result.metric_rows.push_back(kMetricCsvHeader);
  const bool write = !out.dir.empty();
  double ema = 0.0;
  bool have_ema = false;

  auto flush = [&]() {
    if (!write) return;
    std::string losses, metrics;
    for (const std::string& r : result.loss_rows) losses += r + "\n";
    for (const std::string& r : result.metric_rows) metrics += r + "\n";
    WriteFileAtomic(out.dir / out.loss_log_name, losses);
    WriteFileAtomic(out.dir / out.metric_log_name, metrics);
    SaveCheckpoint(model_, out.dir / out.checkpoint_name);
  };
  auto evaluate = [&]() {
    result.report = EvaluateReport(model_, corpus_, corpus_.test);
    std::string rows = MetricCsvRows(iteration_, result.report);
    if (!rows.empty() && rows.back() == '\n') rows.pop_back();
    result.metric_rows.push_back(rows);
    if (log_) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "iter %lld: miou_seen=%.4f miou_unseen=%.4f hiou=%.4f",
                    static_cast<long long>(iteration_), result.report.seen.miou, result.report.unseen.miou,
                    result.report.hiou);
      log_(buf);
    }
  };
  auto record = [&](Phase phase, const LossReport& r) {
    if (phase == Phase::kTrain && r.pixel_count > 0) {
      ema = have_ema ? kEmaDecay * ema + (1.0 - kEmaDecay) * r.total : r.total;
      have_ema = true;
      if (plateau_.Observe(ema) && log_) log_("learning rate reduced to " + FormatDouble(plateau_.lr()));
    }
    ++iteration_;
    if (iteration_ % config_.log_every == 0) result.loss_rows.push_back(LossCsvRow(iteration_, PhaseName(phase), r));
    if (config_.eval_every > 0 && iteration_ % config_.eval_every == 0) evaluate();
    if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) flush();
  };

  for (int64_t it = 0; it < config_.total_iters; ++it) {
    const Phase phase = PhaseAt(it, config_);
    record(phase, Step(it));
  }
  for (int round = 0; round < config_.self_training_rounds; ++round) {
    SetTrainingSet(SelfTrainingRound(model_, train_, corpus_.embeddings, config_.self_training_threshold));
    if (log_) log_("self-training round " + std::to_string(round + 1));
    for (int it = 0; it < config_.self_training_iters; ++it) record(Phase::kTrain, TrainingStep(NextBatch()));
  }
  if (config_.eval_every == 0 || iteration_ % config_.eval_every != 0 || config_.total_iters == 0) evaluate();
  flush();
  result.iterations = iteration_;
  result.final_lr = plateau_.lr();
  return result;
}

AblationCell ExpandAblationCell(const TrainConfig& base, const std::string& name, const Corpus& corpus) {
  AblationCell cell{name, base};
  TrainConfig& c = cell.config;
  auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (name == "full") {
  } else if (name == "no_finetune") {
    c.finetune = false;
  } else if (starts("variant:")) {
    c.variant = name.substr(8);
    VariantFromName(c.variant);
  } else if (name == "module:seg_only") {
    c.variant = "no_cm";
    c.finetune = false;
    c.use_adv = c.use_rec = c.use_kl = false;
  } else if (name == "module:seg_cm") {
    c.finetune = false;
    c.use_adv = c.use_rec = false;
  } else if (name == "module:no_cm") {
    c.variant = "no_cm";
  } else if (name == "no_kl") {
    c.use_kl = false;
  } else if (name == "no_adv") {
    c.use_adv = false;
  } else if (name == "no_rec") {
    c.use_rec = false;
  } else if (name == "ratio:natural") {
    c.ratio_seen = static_cast<double>(corpus.embeddings.seen_ids.size());
    c.ratio_unseen = static_cast<double>(corpus.embeddings.unseen_ids.size());
  } else if (starts("ratio:")) {
    std::tie(c.ratio_seen, c.ratio_unseen) = ParseRatio("ablation cell", name.substr(6));
  } else {
    throw ConfigError("unknown ablation cell '" + name + "'");
  }
  c.Validate();
  return cell;
}

std::string AblationCsvRow(const AblationCell& cell, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f", cell.name.c_str(),
                cell.config.variant.c_str(), FormatDouble(cell.config.ratio_seen).c_str(),
                FormatDouble(cell.config.ratio_unseen).c_str(), r.overall.pixel_acc, r.overall.mean_acc, r.seen.miou,
                r.unseen.miou, r.hiou);
  return buf;
}

std::string RunAblation(const Corpus& corpus, const TrainConfig& base, const std::vector<std::string>& cells,
                        const std::string& corpus_digest, const std::function<void(const std::string&)>& log) {
  std::vector<AblationCell> expanded;
  for (const std::string& name : cells) expanded.push_back(ExpandAblationCell(base, name, corpus));
  std::string csv = "# corpus_digest=" + corpus_digest + "\n" + kAblationCsvHeader + "\n";
  for (const AblationCell& cell : expanded) {
    if (log) log("ablation cell " + cell.name);
    Trainer trainer(corpus, cell.config);
    if (log) trainer.set_logger(log);
    const RunResult result = trainer.Run();
    csv += AblationCsvRow(cell, result.report) + "\n";
  }
  return csv;
}

}  // namespace ctxgen
