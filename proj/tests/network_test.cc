#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "ctxgen/errors.h"
#include "ctxgen/network.h"
#include "ctxgen/ops.h"
#include "test_util.h"

namespace ctxgen {
namespace {

using testing::RandomTensor;
using testing::TinyModelConfig;

ModelConfig WithVariant(const std::string& name) {
  ModelConfig c = TinyModelConfig();
  c.variant = VariantFromName(name);
  return c;
}

Tensor ImageBatch(int64_t n, int64_t size, uint64_t seed) { return RandomTensor({n, 3, size, size}, seed, 0.0, 1.0); }

TEST(BackboneTest, DefaultShape) {
  Model m(ModelConfig{}, 1);
  Tape tape(GroupMask::None());
  EXPECT_EQ(m.Backbone(tape, tape.Constant(ImageBatch(1, 64, 2))).shape(), (Shape{1, 64, 16, 16}));
}

TEST(BackboneTest, MidGrayImageWithZeroBiasesGivesZero) {
  // The first layer centers pixel values around 0.5, so a uniform mid-gray
  // image is the zero input.
  Model m(TinyModelConfig(), 1);
  for (Parameter& p : m.parameters())
    if (p.name.ends_with(".bias")) p.value.Fill(0.0);
  Tape tape(GroupMask::None());
  const Tensor f = m.Backbone(tape, tape.Constant(Tensor({1, 3, 16, 16}, 0.5))).value();
  EXPECT_EQ(f, Tensor({1, 8, 4, 4}));
}

TEST(BackboneTest, BatchOrderIsEquivariant) {
  Model m(TinyModelConfig(), 1);
  const Tensor a = ImageBatch(1, 16, 3), b = ImageBatch(1, 16, 4);
  Tensor ab({2, 3, 16, 16}), ba({2, 3, 16, 16});
  std::copy(a.raw(), a.raw() + a.size(), ab.raw());
  std::copy(b.raw(), b.raw() + b.size(), ab.raw() + a.size());
  std::copy(b.raw(), b.raw() + b.size(), ba.raw());
  std::copy(a.raw(), a.raw() + a.size(), ba.raw() + b.size());
  Tape tape(GroupMask::None());
  const Tensor fab = m.Backbone(tape, tape.Constant(ab)).value();
  const Tensor fba = m.Backbone(tape, tape.Constant(ba)).value();
  const int64_t half = fab.size() / 2;
  for (int64_t i = 0; i < half; ++i) {
    ASSERT_EQ(fab[i], fba[half + i]);
    ASSERT_EQ(fab[half + i], fba[i]);
  }
}

TEST(BackboneTest, IndivisibleSizeIsRejected) {
  Model m(TinyModelConfig(), 1);
  Tape tape(GroupMask::None());
  EXPECT_THROW(m.Backbone(tape, tape.Constant(ImageBatch(1, 18, 1))), DimensionError);
}

TEST(ContextTest, ReceptiveFieldsSerial) {
  Model m(TinyModelConfig(), 5);
  const int64_t expected[] = {3, 7, 17};
  for (int k = 0; k < 3; ++k) {
    const testing::ImpulseSupport s = testing::ProbeContextMap(m, k);
    EXPECT_EQ(s.height, expected[k]) << "map " << k;
    EXPECT_EQ(s.width, expected[k]) << "map " << k;
    EXPECT_TRUE(s.centered);
  }
}

TEST(ContextTest, ReceptiveFieldsParallel) {
  Model m(WithVariant("parallel"), 5);
  const int64_t expected[] = {3, 5, 13};
  for (int k = 0; k < 3; ++k) {
    const testing::ImpulseSupport s = testing::ProbeContextMap(m, k);
    EXPECT_EQ(s.height, expected[k]) << "map " << k;
    EXPECT_EQ(s.width, expected[k]) << "map " << k;
  }
}

TEST(ContextTest, SelectorWeightsAreDistributions) {
  Model m(TinyModelConfig(), 6);
  Tape tape(GroupMask::None());
  Rng rng(1);
  ContextOutput out = m.Context(tape, tape.Constant(RandomTensor({2, 8, 5, 5}, 7)), rng, Mode::kTrain);
  const Tensor& a = out.scale_weights.value();
  ASSERT_EQ(a.shape(), (Shape{2, 3, 5, 5}));
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 25; ++p) {
      double s = 0;
      for (int64_t k = 0; k < 3; ++k) {
        const double v = a[(n * 3 + k) * 25 + p];
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(ContextTest, LatentIsMeanPlusRecordedNoise) {
  Model m(TinyModelConfig(), 6);
  Tape tape(GroupMask::None());
  Rng rng(2);
  ContextOutput out = m.Context(tape, tape.Constant(RandomTensor({1, 8, 4, 4}, 8)), rng, Mode::kTrain);
  ASSERT_EQ(out.eps.shape(), (Shape{1, 1, 4, 4}));
  const Tensor &mu = out.mu.value(), &sigma = out.sigma.value(), &z = out.z.value();
  for (int64_t k = 0; k < 8; ++k)
    for (int64_t p = 0; p < 16; ++p) {
      EXPECT_GT(sigma[k * 16 + p], 0.0);
      EXPECT_NEAR(z[k * 16 + p], mu[k * 16 + p] + out.eps[p] * sigma[k * 16 + p], 1e-14);
    }
}

TEST(ContextTest, EvalModeUsesMean) {
  Model m(TinyModelConfig(), 6);
  Tape tape(GroupMask::None());
  Rng rng(2);
  ContextOutput out = m.Context(tape, tape.Constant(RandomTensor({1, 8, 4, 4}, 8)), rng, Mode::kEval);
  EXPECT_EQ(out.z.value(), out.mu.value());
  EXPECT_EQ(rng.counter(), 0u);
}

TEST(ContextTest, ResidualOffPassesFeaturesThrough) {
  Model m(WithVariant("no_residual"), 6);
  Tape tape(GroupMask::None());
  Rng rng(2);
  const Tensor f = RandomTensor({1, 8, 4, 4}, 9);
  ContextOutput out = m.Context(tape, tape.Constant(f), rng, Mode::kTrain);
  EXPECT_EQ(out.x.value(), f);
  EXPECT_EQ(out.z.shape(), f.shape());
}

TEST(ContextTest, VanishingSigmaAndZeroMeanGiveHalfResidual) {
  Model m(TinyModelConfig(), 6);
  m.parameter("context.latent.weight").value.Fill(0.0);
  Tensor& bias = m.parameter("context.latent.bias").value;
  for (int64_t k = 0; k < 8; ++k) {
    bias[k] = 0.0;       // mu
    bias[8 + k] = -80.0;  // log variance
  }
  Tape tape(GroupMask::None());
  Rng rng(3);
  const Tensor f = RandomTensor({1, 8, 4, 4}, 10);
  const Tensor x = m.Context(tape, tape.Constant(f), rng, Mode::kTrain).x.value();
  // sigma bottoms out at the 1e-6 floor, so Z is within a few 1e-6 of zero.
  for (int64_t i = 0; i < f.size(); ++i) EXPECT_NEAR(x[i], 1.5 * f[i], 1e-5 * std::abs(f[i]));
}

TEST(ContextTest, NoCmDrawsStandardNormalCodes) {
  Model m(WithVariant("no_cm"), 6);
  Tape tape(GroupMask::None());
  Rng rng(4);
  const Tensor f = RandomTensor({1, 8, 4, 4}, 11);
  ContextOutput out = m.Context(tape, tape.Constant(f), rng, Mode::kTrain);
  EXPECT_EQ(out.x.value(), f);
  EXPECT_EQ(out.eps, out.z.value());
  EXPECT_THROW(m.ContextMaps(tape, tape.Constant(f)), ContractError);
}

TEST(ContextTest, MaskedCenterTapsStayZero) {
  Model m(WithVariant("masked"), 6);
  const Tensor& w = m.parameter("context.0.weight").value;
  for (int64_t o = 0; o < 8; ++o)
    for (int64_t i = 0; i < 8; ++i) EXPECT_EQ(w.at(o, i, 1, 1), 0.0);
  m.parameter("context.0.weight").value.Fill(1.0);
  m.EnforceConstraints();
  for (int64_t o = 0; o < 8; ++o)
    for (int64_t i = 0; i < 8; ++i) EXPECT_EQ(w.at(o, i, 1, 1), 0.0);
}

TEST(ContextTest, EveryVariantRuns) {
  for (const std::string& name : VariantNames()) {
    Model m(WithVariant(name), 6);
    Tape tape;
    Rng rng(5);
    Var f = m.Backbone(tape, tape.Constant(ImageBatch(1, 16, 12)));
    ContextOutput out = m.Context(tape, f, rng, Mode::kTrain);
    EXPECT_EQ(out.x.shape(), f.shape()) << name;
    EXPECT_TRUE(out.x.value().AllFinite()) << name;
    EXPECT_EQ(VariantName(m.config().variant), name);
  }
  EXPECT_THROW(VariantFromName("bogus"), ConfigError);
}

TEST(LatentTest, Contracts) {
  Tape tape(GroupMask::None());
  Rng rng(6);
  const Tensor mu = RandomTensor({1, 3, 2, 2}, 13);
  Var m = tape.Constant(mu);
  EXPECT_THROW(sample_latent(m, tape.Constant(Tensor({1, 3, 2, 2}, 0.0)), rng, false), ContractError);
  const Tensor z = sample_latent(m, tape.Constant(Tensor({1, 3, 2, 2}, 1e-300)), rng, false).value();
  for (int64_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z[i], mu[i], 1e-290);
  Rng a(7), b(7);
  EXPECT_TRUE(BitIdentical(sample_latent(m, tape.Constant(Tensor({1, 3, 2, 2}, 1.0)), a, false).value(),
                           sample_latent(m, tape.Constant(Tensor({1, 3, 2, 2}, 1.0)), b, false).value()));
}

TEST(LatentTest, MomentsOfStandardDraws) {
  Tape tape(GroupMask::None());
  Rng rng(8);
  const Shape shape{1, 1, 250, 400};
  const Tensor z = sample_latent(tape.Constant(Tensor(shape)), tape.Constant(Tensor(shape, 1.0)), rng, false).value();
  double s = 0, s2 = 0;
  for (double v : z.data()) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / z.size(), var = s2 / z.size() - mean * mean;
  EXPECT_GE(mean, -0.02);
  EXPECT_LE(mean, 0.02);
  EXPECT_GE(var, 0.97);
  EXPECT_LE(var, 1.03);
}

TEST(LatentTest, NoiseIsSharedAcrossChannelsUnlessPerChannel) {
  Tape tape(GroupMask::None());
  Rng rng(9);
  const Shape shape{1, 4, 3, 3};
  Var mu = tape.Constant(Tensor(shape)), sigma = tape.Constant(Tensor(shape, 1.0));
  const Tensor shared = sample_latent(mu, sigma, rng, false).value();
  const Tensor separate = sample_latent(mu, sigma, rng, true).value();
  for (int64_t p = 0; p < 9; ++p) {
    for (int64_t k = 1; k < 4; ++k) EXPECT_EQ(shared[k * 9 + p], shared[p]);
    EXPECT_NE(separate[9 + p], separate[p]);
  }
}

TEST(GeneratorTest, ShapeAndPixelPurity) {
  Model m(TinyModelConfig(), 10);
  Tape tape(GroupMask::None());
  Rng rng(1);
  Tensor z = RandomTensor({1, 8, 3, 3}, 14), w = RandomTensor({1, 32, 3, 3}, 15);
  // Pixel 4 duplicates pixel 0.
  for (int64_t k = 0; k < 8; ++k) z[k * 9 + 4] = z[k * 9];
  for (int64_t k = 0; k < 32; ++k) w[k * 9 + 4] = w[k * 9];
  const Tensor out = m.Generate(tape, tape.Constant(z), tape.Constant(w), rng, false).value();
  ASSERT_EQ(out.shape(), (Shape{1, 8, 3, 3}));
  for (int64_t k = 0; k < 8; ++k) EXPECT_EQ(out[k * 9 + 4], out[k * 9]);

  // Changing every other pixel leaves pixel 0 alone.
  Tensor z2 = RandomTensor({1, 8, 3, 3}, 16), w2 = RandomTensor({1, 32, 3, 3}, 17);
  for (int64_t k = 0; k < 8; ++k) z2[k * 9] = z[k * 9];
  for (int64_t k = 0; k < 32; ++k) w2[k * 9] = w[k * 9];
  const Tensor out2 = m.Generate(tape, tape.Constant(z2), tape.Constant(w2), rng, false).value();
  for (int64_t k = 0; k < 8; ++k) EXPECT_EQ(out2[k * 9], out[k * 9]);
  double diff = 0;
  for (int64_t i = 0; i < out.size(); ++i) diff = std::max(diff, std::abs(out2[i] - out[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(GeneratorTest, DefaultShape) {
  Model m(ModelConfig{}, 10);
  Tape tape(GroupMask::None());
  Rng rng(1);
  EXPECT_EQ(m.Generate(tape, tape.Constant(RandomTensor({1, 64, 16, 16}, 1)),
                       tape.Constant(RandomTensor({1, 32, 16, 16}, 2)), rng, true)
                .shape(),
            (Shape{1, 64, 16, 16}));
}

TEST(GeneratorTest, LatentChangesOutput) {
  Model m(TinyModelConfig(), 10);
  Tape tape(GroupMask::None());
  Rng rng(1);
  Var w = tape.Constant(RandomTensor({1, 32, 2, 2}, 18));
  const Tensor a = m.Generate(tape, tape.Constant(RandomTensor({1, 8, 2, 2}, 19)), w, rng, false).value();
  const Tensor b = m.Generate(tape, tape.Constant(RandomTensor({1, 8, 2, 2}, 20)), w, rng, false).value();
  double diff = 0;
  for (int64_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(GeneratorTest, DimensionMismatch) {
  Model m(TinyModelConfig(), 10);
  Tape tape(GroupMask::None());
  Rng rng(1);
  EXPECT_THROW(m.Generate(tape, tape.Constant(Tensor({1, 7, 2, 2})), tape.Constant(Tensor({1, 32, 2, 2})), rng, false),
               DimensionError);
  EXPECT_THROW(m.Generate(tape, tape.Constant(Tensor({1, 8, 2, 2})), tape.Constant(Tensor({1, 31, 2, 2})), rng, false),
               DimensionError);
}

TEST(HeadTest, DiscriminatorScoresInOpenInterval) {
  Model m(TinyModelConfig(), 11);
  Tape tape(GroupMask::None());
  const Tensor d = m.Discriminate(tape, tape.Constant(RandomTensor({2, 8, 4, 4}, 21, -5, 5))).value();
  ASSERT_EQ(d.shape(), (Shape{2, 1, 4, 4}));
  for (double v : d.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(HeadTest, SharedLayerFeedsBothHeads) {
  Model m(TinyModelConfig(), 11);
  const Tensor x = RandomTensor({1, 8, 3, 3}, 22);
  auto eval = [&] {
    Tape tape(GroupMask::None());
    return std::pair{m.ClassifierLogits(tape, tape.Constant(x)).value(), m.Discriminate(tape, tape.Constant(x)).value()};
  };
  const auto before = eval();
  m.parameter("head.shared.weight").value[0] += 0.5;
  const auto after = eval();
  EXPECT_NE(before.first, after.first);
  EXPECT_NE(before.second, after.second);
}

TEST(HeadTest, FixedDiscriminatorMatchesAndPassesGradientOnlyToInput) {
  Model m(TinyModelConfig(), 11);
  const Tensor x = RandomTensor({1, 8, 3, 3}, 23);
  Tape tape;
  Var in = tape.Leaf(x);
  Var d = m.DiscriminateFixed(tape, in);
  Tape plain(GroupMask::None());
  EXPECT_TRUE(BitIdentical(d.value(), m.Discriminate(plain, plain.Constant(x)).value()));
  tape.Backward(sum(d));
  for (Parameter* p : m.ParameterPtrs()) EXPECT_EQ(p->grad, Tensor(p->value.shape())) << p->name;
  double g = 0;
  for (double v : in.grad().data()) g += std::abs(v);
  EXPECT_GT(g, 0.0);
}

TEST(SegmentTest, ArgmaxOfLogitsMatchesProbabilitiesAndIsDeterministic) {
  Model m(TinyModelConfig(), 12);
  const Tensor images = ImageBatch(2, 16, 24);
  const std::vector<LabelMap> a = m.Segment(images);
  const std::vector<LabelMap> b = m.Segment(images);
  EXPECT_EQ(a, b);
  const Tensor probs = m.Probabilities(images);
  ASSERT_EQ(probs.shape(), (Shape{2, 16, 4, 4}));
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 16; ++p) {
      int best = 0;
      for (int k = 1; k < 16; ++k)
        if (probs[(n * 16 + k) * 16 + p] > probs[(n * 16 + best) * 16 + p]) best = k;
      EXPECT_EQ(a[static_cast<size_t>(n)].values[static_cast<size_t>(p)], best);
    }
  const std::vector<LabelMap> full = m.SegmentFull(images);
  EXPECT_EQ(full[0].height, 16);
  EXPECT_EQ(DownsampleLabels(full[1], 4), a[1]);
}

TEST(CheckpointTest, RoundTripIsExact) {
  for (const std::string& name : {"full", "parallel", "no_cm", "global_selector"}) {
    Model m(WithVariant(name), 13);
    m.parameters()[2].frozen = true;
    const std::string bytes = EncodeCheckpoint(m);
    const Model back = DecodeCheckpoint(bytes);
    EXPECT_TRUE(back == m) << name;
    EXPECT_EQ(back.config(), m.config());
    EXPECT_EQ(EncodeCheckpoint(back), bytes);
  }
}

TEST(CheckpointTest, FileRoundTripAndCorruption) {
  testing::TempDir dir;
  Model m(TinyModelConfig(), 14);
  SaveCheckpoint(m, dir.path() / "m.bin");
  EXPECT_TRUE(LoadCheckpoint(dir.path() / "m.bin") == m);
  const std::string bytes = EncodeCheckpoint(m);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, bytes.size() / 2)), ParseError);
  EXPECT_THROW(DecodeCheckpoint("NOTACKPT" + bytes.substr(8)), ParseError);
}

TEST(ModelTest, SameSeedSameParameters) {
  Model a(TinyModelConfig(), 15), b(TinyModelConfig(), 15), c(TinyModelConfig(), 16);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(a.GroupChecksum(ParamGroup::kBackbone), b.GroupChecksum(ParamGroup::kBackbone));
  std::set<std::string> names;
  for (const Parameter& p : a.parameters()) EXPECT_TRUE(names.insert(p.name).second);
  EXPECT_THROW(Model(ModelConfig{.num_classes = 1}, 1), ConfigError);
}

}  // namespace
}  // namespace ctxgen
