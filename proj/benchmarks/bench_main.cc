#include <benchmark/benchmark.h>

#include "ctxgen/datagen.h"
#include "ctxgen/ops.h"
#include "ctxgen/trainer.h"

namespace ctxgen {
namespace {

Tensor Filled(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.data()) v = rng.Uniform() - 0.5;
  return t;
}

// Forward and backward of one 3x3 layer at the context-module resolution.
void BM_Conv2d(benchmark::State& state) {
  const int dilation = static_cast<int>(state.range(0));
  const int64_t c = state.range(1);
  const Tensor x = Filled({2, c, 16, 16}, 1), k = Filled({c, c, 3, 3}, 2), b = Filled({c}, 3);
  for (auto _ : state) {
    Tape tape;
    Var out = conv2d(tape.Leaf(x), tape.Leaf(k), tape.Leaf(b), {.dilation = dilation, .padding = dilation});
    tape.Backward(sum(out));
    benchmark::DoNotOptimize(out.value().raw());
  }
}
BENCHMARK(BM_Conv2d)->Args({1, 32})->Args({5, 32})->Args({1, 64})->Unit(benchmark::kMicrosecond);

const Corpus& BenchCorpus() {
  static const Corpus corpus = [] {
    DatasetConfig c;
    c.num_train = 8;
    c.num_test = 2;
    return GenerateCorpus(c, DefaultCategories());
  }();
  return corpus;
}

TrainConfig DeskConfig() {
  TrainConfig c;
  c.base_lr = 0.05;
  c.grad_clip = 5.0;
  return c;
}

void BM_TrainingStep(benchmark::State& state) {
  Trainer trainer(BenchCorpus(), DeskConfig());
  for (auto _ : state) benchmark::DoNotOptimize(trainer.TrainingStep(trainer.NextBatch()).total);
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_FinetuningStep(benchmark::State& state) {
  Trainer trainer(BenchCorpus(), DeskConfig());
  for (auto _ : state) benchmark::DoNotOptimize(trainer.FinetuningStep().total);
}
BENCHMARK(BM_FinetuningStep)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  Trainer trainer(BenchCorpus(), DeskConfig());
  for (auto _ : state) benchmark::DoNotOptimize(EvaluateReport(trainer.model(), BenchCorpus(), BenchCorpus().test).hiou);
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ctxgen

BENCHMARK_MAIN();
