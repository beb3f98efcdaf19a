#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ctxgen/autograd.h"

namespace ctxgen {

// Per-pixel masks are indexed n * h * w + y * w + x; nonzero means the pixel
// participates.
using PixelMask = std::span<const uint8_t>;

// Mean over masked pixels of ||x - x_gen||^2. Throws ContractError on an
// empty mask.
Var rec_loss(Var x, Var x_gen, PixelMask mask);

// Mean over non-IGNORE pixels of -log softmax(logits)[label]. `labels` has
// one entry per pixel. Throws ContractError when every pixel is IGNORE.
Var cls_loss(Var logits, std::span<const int> labels);

// Least-squares adversarial terms over masked pixels of [N,1,h,w] scores.
// The discriminator objective (to be maximized) is mean[D_real^2 +
// (1 - D_fake)^2]; pass an invalid Var for d_real to drop the real term.
// Scores outside [0,1] raise ContractError.
Var adv_objective_d(Var d_real, Var d_fake, PixelMask mask);
// Generator term mean[(1 - D_fake)^2].
Var adv_objective_g(Var d_fake, PixelMask mask);

// Mean over pixels of 1/2 sum_c (mu^2 + sigma^2 - ln sigma^2 - 1).
Var kl_loss(Var mu, Var sigma);

struct LossWeights {
  double lambda1 = 10.0;
  double lambda2 = 100.0;
  bool use_kl = true;
  bool use_adv = true;
  bool use_rec = true;
};

struct LossReport {
  double cls = 0.0;
  double adv_d = 0.0;
  double adv_g = 0.0;
  double rec = 0.0;
  double kl = 0.0;
  double total = 0.0;
  int64_t pixel_count = 0;
};

// cls + adv_g + lambda1 * rec + lambda2 * kl, honoring the removal switches.
double TrainObjective(const LossReport& r, const LossWeights& w);
// cls + adv_g; rec and kl do not participate.
double FinetuneObjective(const LossReport& r, const LossWeights& w);

// One CSV row `step,phase,cls,adv_d,adv_g,rec,kl,total`.
inline constexpr const char* kLossCsvHeader = "step,phase,cls,adv_d,adv_g,rec,kl,total";
std::string LossCsvRow(int64_t step, const std::string& phase, const LossReport& r);

}  // namespace ctxgen
