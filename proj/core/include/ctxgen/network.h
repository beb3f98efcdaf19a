#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxgen/autograd.h"
#include "ctxgen/datagen.h"
#include "ctxgen/ops.h"
#include "ctxgen/rng.h"

namespace ctxgen {

enum class Arrangement : uint8_t { kSerial = 0, kParallel = 1 };
enum class SelectorMode : uint8_t { kPerPixel = 0, kGlobal = 1, kOff = 2 };

// Wiring switches for the contextual module and its ablations.
struct ContextVariant {
  // false: no contextual module; X = F and latent codes are drawn from N(0,1).
  bool enabled = true;
  Arrangement arrangement = Arrangement::kSerial;
  // false: X = F; the latent code is still produced for the generator.
  bool residual = true;
  // Center taps of the first context conv are held at zero.
  bool masked_center = false;
  SelectorMode selector = SelectorMode::kPerPixel;
  // false: the deepest context map goes through one more 3x3 conv instead
  // of concatenating all three scales.
  bool multiscale = true;
  bool dilated = true;
  // Two 1x1 convs and no spatial context at all.
  bool pointwise = false;
  // One noise draw per channel instead of one per pixel.
  bool channel_eps = false;

  std::array<int, 3> Dilations() const;
  friend bool operator==(const ContextVariant&, const ContextVariant&) = default;
};

// Named variants accepted by the command line.
std::vector<std::string> VariantNames();
ContextVariant VariantFromName(const std::string& name);
std::string VariantName(const ContextVariant& variant);

struct ModelConfig {
  int num_classes = 16;
  int embed_dim = 32;
  int feature_dim = 64;
  int backbone_width1 = 16;
  int backbone_width2 = 32;
  int generator_hidden = 512;
  double slope = 0.2;
  double dropout = 0.5;
  double sigma_floor = 1e-6;
  ContextVariant variant;

  // Spatial reduction of the backbone.
  static constexpr int kStride = 4;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Mode { kTrain, kEval };

struct ContextOutput {
  Var x;      // enhanced features [N,l,h,w]
  Var mu;     // [N,l,h,w]
  Var sigma;  // [N,l,h,w], strictly positive
  Var z;      // [N,l,h,w]
  Var scale_weights;  // [N,3,h,w]; invalid when the selector is off
  std::array<Var, 3> context_maps;  // invalid for the pointwise variant
  Tensor eps;  // noise actually used; [N,1,h,w] or [N,l,h,w]
};

// Z = mu + eps * sigma with one standard-normal eps per pixel shared by all
// channels (or per element when `per_channel`). Throws ContractError when
// any sigma <= 0.
Var sample_latent(Var mu, Var sigma, Rng& rng, bool per_channel, Tensor* eps_out = nullptr);

// The five subnetworks. Parameters live in one vector so a Model is an
// ordinary copyable value; layers refer to them by index.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> ParameterPtrs();
  std::vector<Parameter*> ParameterPtrs(GroupMask groups);
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;

  // image [N,3,H,W] -> F [N,l,H/4,W/4]
  Var Backbone(Tape& tape, Var image);
  ContextOutput Context(Tape& tape, Var features, Rng& rng, Mode mode);
  // Three context maps only, in evaluation mode.
  std::array<Var, 3> ContextMaps(Tape& tape, Var features);
  // z [N,l,h,w], w [N,d,h,w] -> generated features [N,l,h,w], per pixel.
  Var Generate(Tape& tape, Var z, Var w, Rng& rng, bool training);
  Var SharedFeatures(Tape& tape, Var x);
  Var ClassifierLogits(Tape& tape, Var x);
  Var Discriminate(Tape& tape, Var x);
  // Same scores with the shared and discriminator heads held constant, so
  // gradients reach only `x`.
  Var DiscriminateFixed(Tape& tape, Var x);

  // E -> CM (Z = mu) -> C, argmax per pixel at feature resolution.
  std::vector<LabelMap> Segment(const Tensor& images);
  // Same, upsampled to image resolution.
  std::vector<LabelMap> SegmentFull(const Tensor& images);
  // Class probabilities [N,K,h,w] in evaluation mode.
  Tensor Probabilities(const Tensor& images);

  // Re-applies structural constraints (masked center taps) after an update.
  void EnforceConstraints();

  uint64_t GroupChecksum(ParamGroup group) const;

  friend bool operator==(const Model& a, const Model& b);

 private:
  struct Layer {
    int weight = -1;
    int bias = -1;
  };

  Layer AddConv(const std::string& name, ParamGroup group, int cin, int cout, int k, Rng& rng);
  Layer AddAffine(const std::string& name, ParamGroup group, int din, int dout, Rng& rng);
  Var Conv(Tape& tape, const Layer& layer, Var x, Conv2dOptions opts);
  Var Dense(Tape& tape, const Layer& layer, Var x);
  int Find(const std::string& name) const;
  void Build(uint64_t seed);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::array<Layer, 4> backbone_{};
  std::array<Layer, 3> context_{};
  Layer context_extra_{};
  Layer selector_{};
  Layer latent_head_{};
  std::array<Layer, 3> generator_{};
  Layer shared_{};
  Layer classifier_{};
  Layer discriminator_{};

  friend std::string EncodeCheckpoint(const Model& model);
  friend Model DecodeCheckpoint(std::string_view bytes);
};

// Little-endian binary checkpoint:
//   "CTXGCKPT" | u32 version | model config | variant flags (u8 each) |
//   u32 count | per parameter: u32 name length, name, u8 group, u8 frozen,
//   u32 rank, i64 dims, f64 values.
std::string EncodeCheckpoint(const Model& model);
Model DecodeCheckpoint(std::string_view bytes);
void SaveCheckpoint(const Model& model, const std::filesystem::path& path);
Model LoadCheckpoint(const std::filesystem::path& path);

// Stacks [3,H,W] sample images into a batch [N,3,H,W].
Tensor StackImages(const std::vector<const SegSample*>& samples);

}  // namespace ctxgen
