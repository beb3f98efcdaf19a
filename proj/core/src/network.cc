#include "ctxgen/network.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "ctxgen/errors.h"
#include "ctxgen/io.h"

namespace ctxgen {
namespace {

Tensor SliceBatch(const Tensor& t, int64_t index) {
  Shape s = t.shape();
  s[0] = 1;
  const int64_t per = t.size() / t.dim(0);
  return Tensor(s, std::vector<double>(t.raw() + index * per, t.raw() + (index + 1) * per));
}

}  // namespace

std::array<int, 3> ContextVariant::Dilations() const {
  if (!dilated) return {1, 1, 1};
  return arrangement == Arrangement::kSerial ? std::array<int, 3>{1, 2, 5} : std::array<int, 3>{1, 2, 6};
}

std::vector<std::string> VariantNames() {
  return {"full",     "no_cm",  "pointwise",       "plain_conv",  "dilated",    "multiscale",
          "masked",   "global_selector", "no_residual", "parallel", "channel_eps"};
}

ContextVariant VariantFromName(const std::string& name) {
  ContextVariant v;
  if (name == "full") return v;
  if (name == "no_cm") {
    v.enabled = false;
  } else if (name == "pointwise") {
    v.pointwise = true;
    v.multiscale = false;
    v.dilated = false;
    v.selector = SelectorMode::kOff;
  } else if (name == "plain_conv") {
    v.multiscale = false;
    v.dilated = false;
    v.selector = SelectorMode::kOff;
  } else if (name == "dilated") {
    v.multiscale = false;
    v.selector = SelectorMode::kOff;
  } else if (name == "multiscale") {
    v.selector = SelectorMode::kOff;
  } else if (name == "masked") {
    v.masked_center = true;
  } else if (name == "global_selector") {
    v.selector = SelectorMode::kGlobal;
  } else if (name == "no_residual") {
    v.residual = false;
  } else if (name == "parallel") {
    v.arrangement = Arrangement::kParallel;
  } else if (name == "channel_eps") {
    v.channel_eps = true;
  } else {
    std::string valid;
    for (const auto& n : VariantNames()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown variant '" + name + "'; valid: " + valid);
  }
  return v;
}

std::string VariantName(const ContextVariant& variant) {
  for (const auto& n : VariantNames()) {
    if (VariantFromName(n) == variant) return n;
  }
  return "custom";
}

Var sample_latent(Var mu, Var sigma, Rng& rng, bool per_channel, Tensor* eps_out) {
  if (mu.shape() != sigma.shape() || mu.value().rank() != 4) {
    throw DimensionError("sample_latent: mu and sigma must share an NCHW shape");
  }
  for (double s : sigma.value().data()) {
    if (!(s > 0.0)) throw ContractError("sample_latent: sigma must be positive");
  }
  const int64_t n = mu.dim(0), c = mu.dim(1), h = mu.dim(2), w = mu.dim(3);
  Tape& tape = *mu.tape();
  Tensor eps(per_channel ? Shape{n, c, h, w} : Shape{n, 1, h, w});
  for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.Normal();
  if (eps_out != nullptr) *eps_out = eps;
  Var e = tape.Constant(std::move(eps));
  if (!per_channel) e = broadcast_channels(e, c);
  return add(mu, mul(sigma, e));
}

Model::Model(const ModelConfig& config, uint64_t seed) : config_(config) { Build(seed); }

Model::Layer Model::AddConv(const std::string& name, ParamGroup group, int cin, int cout, int k, Rng& rng) {
  const int fan_in = cin * k * k;
  const double bound = std::sqrt(6.0 / fan_in);
  Tensor w({cout, cin, k, k});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.Uniform() - 1.0) * bound;
  Layer layer;
  layer.weight = static_cast<int>(params_.size());
  params_.emplace_back(name + ".weight", group, std::move(w));
  layer.bias = static_cast<int>(params_.size());
  params_.emplace_back(name + ".bias", group, Tensor({cout}));
  return layer;
}

Model::Layer Model::AddAffine(const std::string& name, ParamGroup group, int din, int dout, Rng& rng) {
  const double bound = std::sqrt(6.0 / din);
  Tensor w({dout, din});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.Uniform() - 1.0) * bound;
  Layer layer;
  layer.weight = static_cast<int>(params_.size());
  params_.emplace_back(name + ".weight", group, std::move(w));
  layer.bias = static_cast<int>(params_.size());
  params_.emplace_back(name + ".bias", group, Tensor({dout}));
  return layer;
}

void Model::Build(uint64_t seed) {
  const ModelConfig& c = config_;
  if (c.num_classes < 2 || c.embed_dim < 1 || c.feature_dim < 1 || c.generator_hidden < 1 ||
      c.backbone_width1 < 1 || c.backbone_width2 < 1) {
    throw ConfigError("model dimensions must be positive (and at least 2 classes)");
  }
  if (!(c.slope > 0.0 && c.slope < 1.0)) throw ConfigError("leaky slope must be in (0,1)");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  const ContextVariant& v = c.variant;
  if (v.pointwise && v.multiscale) throw ConfigError("pointwise variant cannot be multiscale");
  if (!v.multiscale && v.selector != SelectorMode::kOff) throw ConfigError("selector requires multiscale");

  Rng rng(seed);
  params_.clear();
  const int l = c.feature_dim;
  backbone_[0] = AddConv("backbone.0", ParamGroup::kBackbone, 3, c.backbone_width1, 3, rng);
  backbone_[1] = AddConv("backbone.1", ParamGroup::kBackbone, c.backbone_width1, c.backbone_width2, 3, rng);
  backbone_[2] = AddConv("backbone.2", ParamGroup::kBackbone, c.backbone_width2, l, 3, rng);
  backbone_[3] = AddConv("backbone.3", ParamGroup::kBackbone, l, l, 3, rng);

  if (v.enabled) {
    if (v.pointwise) {
      context_[0] = AddConv("context.0", ParamGroup::kContext, l, l, 1, rng);
      latent_head_ = AddConv("context.latent", ParamGroup::kContext, l, 2 * l, 1, rng);
    } else {
      for (int k = 0; k < 3; ++k) {
        context_[static_cast<size_t>(k)] = AddConv("context." + std::to_string(k), ParamGroup::kContext, l, l, 3, rng);
      }
      if (v.multiscale) {
        if (v.selector == SelectorMode::kPerPixel) {
          selector_ = AddConv("context.selector", ParamGroup::kContext, 3 * l, 3, 3, rng);
        } else if (v.selector == SelectorMode::kGlobal) {
          selector_ = AddAffine("context.selector", ParamGroup::kContext, 3 * l, 3, rng);
        }
        latent_head_ = AddConv("context.latent", ParamGroup::kContext, 3 * l, 2 * l, 1, rng);
      } else {
        context_extra_ = AddConv("context.extra", ParamGroup::kContext, l, l, 3, rng);
        latent_head_ = AddConv("context.latent", ParamGroup::kContext, l, 2 * l, 1, rng);
      }
    }
  }

  generator_[0] = AddAffine("generator.0", ParamGroup::kGenerator, l + c.embed_dim, c.generator_hidden, rng);
  generator_[1] = AddAffine("generator.1", ParamGroup::kGenerator, c.generator_hidden, c.generator_hidden, rng);
  generator_[2] = AddAffine("generator.2", ParamGroup::kGenerator, c.generator_hidden, l, rng);

  shared_ = AddConv("head.shared", ParamGroup::kSharedHead, l, l, 1, rng);
  classifier_ = AddConv("head.classifier", ParamGroup::kClassifier, l, c.num_classes, 1, rng);
  discriminator_ = AddConv("head.discriminator", ParamGroup::kDiscriminator, l, 1, 1, rng);
  EnforceConstraints();
}

std::vector<Parameter*> Model::ParameterPtrs() { return ParameterPtrs(GroupMask::All()); }

std::vector<Parameter*> Model::ParameterPtrs(GroupMask groups) {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (groups.contains(p.group)) out.push_back(&p);
  }
  return out;
}

int Model::Find(const std::string& name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw ContractError("no parameter named '" + name + "'");
}

Parameter& Model::parameter(const std::string& name) { return params_[static_cast<size_t>(Find(name))]; }
const Parameter& Model::parameter(const std::string& name) const { return params_[static_cast<size_t>(Find(name))]; }

Var Model::Conv(Tape& tape, const Layer& layer, Var x, Conv2dOptions opts) {
  return conv2d(x, tape.Param(params_[static_cast<size_t>(layer.weight)]),
                tape.Param(params_[static_cast<size_t>(layer.bias)]), opts);
}

Var Model::Dense(Tape& tape, const Layer& layer, Var x) {
  return affine(x, tape.Param(params_[static_cast<size_t>(layer.weight)]),
                tape.Param(params_[static_cast<size_t>(layer.bias)]));
}

Var Model::Backbone(Tape& tape, Var image) {
  if (image.value().rank() != 4 || image.dim(1) != 3) throw DimensionError("backbone: expected [N,3,H,W] image");
  if (image.dim(2) % ModelConfig::kStride != 0 || image.dim(3) % ModelConfig::kStride != 0) {
    throw DimensionError("backbone: image size " + ShapeString(image.shape()) + " not divisible by 4");
  }
  const double s = config_.slope;
  Var h = leaky_relu(Conv(tape, backbone_[0], add_scalar(image, -0.5), {2, 1, 1}), s);
  h = leaky_relu(Conv(tape, backbone_[1], h, {1, 1, 1}), s);
  h = leaky_relu(Conv(tape, backbone_[2], h, {2, 1, 1}), s);
  return leaky_relu(Conv(tape, backbone_[3], h, {1, 1, 1}), s);
}

std::array<Var, 3> Model::ContextMaps(Tape& tape, Var features) {
  const ContextVariant& v = config_.variant;
  if (!v.enabled || v.pointwise) throw ContractError("variant has no context maps");
  const auto dil = v.Dilations();
  const double s = config_.slope;
  std::array<Var, 3> maps;
  Var prev = features;
  for (size_t k = 0; k < 3; ++k) {
    Var in = v.arrangement == Arrangement::kSerial ? prev : features;
    maps[k] = leaky_relu(Conv(tape, context_[k], in, {1, dil[k], SamePadding(3, dil[k])}), s);
    prev = maps[k];
  }
  return maps;
}

ContextOutput Model::Context(Tape& tape, Var features, Rng& rng, Mode mode) {
  const ContextVariant& v = config_.variant;
  const int64_t n = features.dim(0), l = features.dim(1), h = features.dim(2), w = features.dim(3);
  if (l != config_.feature_dim) throw DimensionError("context: feature width mismatch");
  const double s = config_.slope;
  ContextOutput out;

  if (!v.enabled) {
    out.x = features;
    out.mu = tape.Constant(Tensor(features.shape(), 0.0));
    out.sigma = tape.Constant(Tensor(features.shape(), 1.0));
    Tensor eps(features.shape());
    for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.Normal();
    out.eps = eps;
    out.z = tape.Constant(std::move(eps));
    return out;
  }

  Var fused;
  if (v.pointwise) {
    fused = leaky_relu(Conv(tape, context_[0], features, {}), s);
  } else {
    out.context_maps = ContextMaps(tape, features);
    if (v.multiscale) {
      std::vector<Var> parts(out.context_maps.begin(), out.context_maps.end());
      Var stacked = concat_channels(parts);
      if (v.selector == SelectorMode::kOff) {
        fused = stacked;
      } else {
        if (v.selector == SelectorMode::kPerPixel) {
          out.scale_weights = softmax_channels(Conv(tape, selector_, stacked, {1, 1, 1}));
        } else {
          Var pooled = to_pixel_rows(spatial_mean(stacked));
          Var weights = softmax_channels(from_pixel_rows(Dense(tape, selector_, pooled), n, 1, 1));
          out.scale_weights = broadcast_spatial(weights, h, w);
        }
        std::vector<Var> weighted;
        for (int k = 0; k < 3; ++k) {
          Var a = broadcast_channels(slice_channels(out.scale_weights, k, 1), l);
          weighted.push_back(mul(out.context_maps[static_cast<size_t>(k)], a));
        }
        fused = concat_channels(weighted);
      }
    } else {
      fused = leaky_relu(Conv(tape, context_extra_, out.context_maps[2], {1, 1, 1}), s);
    }
  }

  Var head = Conv(tape, latent_head_, fused, {});
  out.mu = slice_channels(head, 0, l);
  Var log_var = slice_channels(head, l, l);
  out.sigma = clamp_min(exp(scale(log_var, 0.5)), config_.sigma_floor);
  if (mode == Mode::kTrain) {
    out.z = sample_latent(out.mu, out.sigma, rng, v.channel_eps, &out.eps);
  } else {
    out.z = out.mu;
  }
  out.x = v.residual ? add(features, mul(features, sigmoid(out.z))) : features;
  return out;
}

Var Model::Generate(Tape& tape, Var z, Var w, Rng& rng, bool training) {
  if (z.value().rank() != 4 || w.value().rank() != 4) throw DimensionError("generator: expected NCHW inputs");
  if (z.dim(1) != config_.feature_dim) {
    throw DimensionError("generator: latent width " + std::to_string(z.dim(1)) + " != " +
                         std::to_string(config_.feature_dim));
  }
  if (w.dim(1) != config_.embed_dim) {
    throw DimensionError("generator: embedding width " + std::to_string(w.dim(1)) + " != " +
                         std::to_string(config_.embed_dim));
  }
  if (z.dim(0) != w.dim(0) || z.dim(2) != w.dim(2) || z.dim(3) != w.dim(3)) {
    throw DimensionError("generator: latent and embedding maps differ in size");
  }
  const double s = config_.slope;
  Var rows = concat_columns(to_pixel_rows(z), to_pixel_rows(w));
  Var hid = dropout(leaky_relu(Dense(tape, generator_[0], rows), s), config_.dropout, rng, training);
  hid = dropout(leaky_relu(Dense(tape, generator_[1], hid), s), config_.dropout, rng, training);
  Var out = Dense(tape, generator_[2], hid);
  return from_pixel_rows(out, z.dim(0), z.dim(2), z.dim(3));
}

Var Model::SharedFeatures(Tape& tape, Var x) {
  if (x.value().rank() != 4 || x.dim(1) != config_.feature_dim) throw DimensionError("head: feature width mismatch");
  return leaky_relu(Conv(tape, shared_, x, {}), config_.slope);
}

Var Model::ClassifierLogits(Tape& tape, Var x) { return Conv(tape, classifier_, SharedFeatures(tape, x), {}); }

Var Model::Discriminate(Tape& tape, Var x) { return sigmoid(Conv(tape, discriminator_, SharedFeatures(tape, x), {})); }

Var Model::DiscriminateFixed(Tape& tape, Var x) {
  auto fixed = [&](int index) { return tape.Constant(params_[static_cast<size_t>(index)].value); };
  if (x.value().rank() != 4 || x.dim(1) != config_.feature_dim) throw DimensionError("head: feature width mismatch");
  Var h = leaky_relu(conv2d(x, fixed(shared_.weight), fixed(shared_.bias)), config_.slope);
  return sigmoid(conv2d(h, fixed(discriminator_.weight), fixed(discriminator_.bias)));
}

Tensor Model::Probabilities(const Tensor& images) {
  Tape tape(GroupMask::None());
  Rng unused(0);
  Var f = Backbone(tape, tape.Constant(images));
  ContextOutput cm = Context(tape, f, unused, Mode::kEval);
  return softmax_channels(ClassifierLogits(tape, cm.x)).value();
}

std::vector<LabelMap> Model::Segment(const Tensor& images) {
  std::vector<LabelMap> out;
  for (int64_t i = 0; i < images.dim(0); ++i) {
    const Tensor probs = Probabilities(SliceBatch(images, i));
    const int64_t k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
    LabelMap map(h, w, 0);
    for (int64_t p = 0; p < h * w; ++p) {
      int best = 0;
      for (int64_t c = 1; c < k; ++c) {
        if (probs[c * h * w + p] > probs[best * h * w + p]) best = static_cast<int>(c);
      }
      map.values[static_cast<size_t>(p)] = best;
    }
    out.push_back(std::move(map));
  }
  return out;
}

std::vector<LabelMap> Model::SegmentFull(const Tensor& images) {
  std::vector<LabelMap> maps = Segment(images);
  for (LabelMap& m : maps) m = UpsampleLabels(m, ModelConfig::kStride);
  return maps;
}

void Model::EnforceConstraints() {
  if (!config_.variant.enabled || !config_.variant.masked_center || config_.variant.pointwise) return;
  Tensor& w = params_[static_cast<size_t>(context_[0].weight)].value;
  const int64_t co = w.dim(0), ci = w.dim(1);
  for (int64_t o = 0; o < co; ++o) {
    for (int64_t i = 0; i < ci; ++i) w.at(o, i, 1, 1) = 0.0;
  }
}

uint64_t Model::GroupChecksum(ParamGroup group) const {
  uint64_t h = 0;
  for (const Parameter& p : params_) {
    if (p.group == group) h = h * 1099511628211ULL ^ Checksum(p.value);
  }
  return h;
}

bool operator==(const Model& a, const Model& b) {
  if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
  for (size_t i = 0; i < a.params_.size(); ++i) {
    const Parameter& p = a.params_[i];
    const Parameter& q = b.params_[i];
    if (p.name != q.name || p.group != q.group || p.frozen != q.frozen || !BitIdentical(p.value, q.value)) return false;
  }
  return true;
}

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void Put(T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out_.append(reinterpret_cast<const char*>(buf), sizeof(T));
  }
  void Bytes(std::string_view s) { out_.append(s); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T Get(const char* what) {
    if (pos_ + sizeof(T) > in_.size()) throw ParseError(std::string("checkpoint: truncated reading ") + what, pos_);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::string_view Bytes(size_t n, const char* what) {
    if (pos_ + n > in_.size()) throw ParseError(std::string("checkpoint: truncated reading ") + what, pos_);
    std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const Model& model) {
  Writer w;
  w.Bytes(std::string_view(kMagic, 8));
  w.Put<uint32_t>(kVersion);
  const ModelConfig& c = model.config_;
  w.Put<uint32_t>(static_cast<uint32_t>(c.num_classes));
  w.Put<uint32_t>(static_cast<uint32_t>(c.embed_dim));
  w.Put<uint32_t>(static_cast<uint32_t>(c.feature_dim));
  w.Put<uint32_t>(static_cast<uint32_t>(c.backbone_width1));
  w.Put<uint32_t>(static_cast<uint32_t>(c.backbone_width2));
  w.Put<uint32_t>(static_cast<uint32_t>(c.generator_hidden));
  w.Put<double>(c.slope);
  w.Put<double>(c.dropout);
  w.Put<double>(c.sigma_floor);
  const ContextVariant& v = c.variant;
  for (uint8_t flag : {static_cast<uint8_t>(v.enabled), static_cast<uint8_t>(v.arrangement),
                       static_cast<uint8_t>(v.residual), static_cast<uint8_t>(v.masked_center),
                       static_cast<uint8_t>(v.selector), static_cast<uint8_t>(v.multiscale),
                       static_cast<uint8_t>(v.dilated), static_cast<uint8_t>(v.pointwise),
                       static_cast<uint8_t>(v.channel_eps)}) {
    w.Put<uint8_t>(flag);
  }
  w.Put<uint32_t>(static_cast<uint32_t>(model.params_.size()));
  for (const Parameter& p : model.params_) {
    w.Put<uint32_t>(static_cast<uint32_t>(p.name.size()));
    w.Bytes(p.name);
    w.Put<uint8_t>(static_cast<uint8_t>(p.group));
    w.Put<uint8_t>(static_cast<uint8_t>(p.frozen));
    w.Put<uint32_t>(static_cast<uint32_t>(p.value.rank()));
    for (int64_t d : p.value.shape()) w.Put<int64_t>(d);
    for (double x : p.value.data()) w.Put<double>(x);
  }
  return w.Take();
}

Model DecodeCheckpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.Bytes(8, "magic") != std::string_view(kMagic, 8)) throw ParseError("checkpoint: bad magic", 0);
  const auto version = r.Get<uint32_t>("version");
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version), 8);
  ModelConfig c;
  c.num_classes = static_cast<int>(r.Get<uint32_t>("num_classes"));
  c.embed_dim = static_cast<int>(r.Get<uint32_t>("embed_dim"));
  c.feature_dim = static_cast<int>(r.Get<uint32_t>("feature_dim"));
  c.backbone_width1 = static_cast<int>(r.Get<uint32_t>("backbone_width1"));
  c.backbone_width2 = static_cast<int>(r.Get<uint32_t>("backbone_width2"));
  c.generator_hidden = static_cast<int>(r.Get<uint32_t>("generator_hidden"));
  c.slope = r.Get<double>("slope");
  c.dropout = r.Get<double>("dropout");
  c.sigma_floor = r.Get<double>("sigma_floor");
  ContextVariant& v = c.variant;
  v.enabled = r.Get<uint8_t>("variant") != 0;
  v.arrangement = static_cast<Arrangement>(r.Get<uint8_t>("variant"));
  v.residual = r.Get<uint8_t>("variant") != 0;
  v.masked_center = r.Get<uint8_t>("variant") != 0;
  v.selector = static_cast<SelectorMode>(r.Get<uint8_t>("variant"));
  v.multiscale = r.Get<uint8_t>("variant") != 0;
  v.dilated = r.Get<uint8_t>("variant") != 0;
  v.pointwise = r.Get<uint8_t>("variant") != 0;
  v.channel_eps = r.Get<uint8_t>("variant") != 0;

  Model model;
  try {
    model = Model(c, 0);
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint: invalid model config: ") + e.what(), r.pos());
  }
  const auto count = r.Get<uint32_t>("parameter count");
  if (count != model.params_.size()) {
    throw ParseError("checkpoint: expected " + std::to_string(model.params_.size()) + " parameters, found " +
                         std::to_string(count),
                     r.pos());
  }
  for (Parameter& p : model.params_) {
    const size_t at = r.pos();
    const auto len = r.Get<uint32_t>("name length");
    const std::string name(r.Bytes(len, "name"));
    if (name != p.name) throw ParseError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'", at);
    p.group = static_cast<ParamGroup>(r.Get<uint8_t>("group"));
    p.frozen = r.Get<uint8_t>("frozen") != 0;
    const auto rank = r.Get<uint32_t>("rank");
    Shape shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(r.Get<int64_t>("dim"));
    if (shape != p.value.shape()) throw ParseError("checkpoint: shape mismatch for '" + name + "'", at);
    for (double& x : p.value.data()) x = r.Get<double>("values");
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());
  return model;
}

void SaveCheckpoint(const Model& model, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeCheckpoint(model));
}

Model LoadCheckpoint(const std::filesystem::path& path) { return DecodeCheckpoint(ReadFile(path)); }

Tensor StackImages(const std::vector<const SegSample*>& samples) {
  if (samples.empty()) throw ContractError("StackImages: empty batch");
  const Shape& s = samples[0]->image.shape();
  Tensor out({static_cast<int64_t>(samples.size()), s[0], s[1], s[2]});
  const int64_t per = samples[0]->image.size();
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->image.shape() != s) throw DimensionError("StackImages: images differ in size");
    std::copy_n(samples[i]->image.raw(), per, out.raw() + static_cast<int64_t>(i) * per);
  }
  return out;
}

}  // namespace ctxgen
