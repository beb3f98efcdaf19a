#include "ctxgen/losses.h"

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "ctxgen/datagen.h"
#include "ctxgen/errors.h"

namespace ctxgen {
namespace {

int64_t PixelCount(const Var& v) { return v.dim(0) * v.dim(2) * v.dim(3); }

void RequireMask(const Var& v, PixelMask mask, const char* op) {
  if (v.value().rank() != 4) throw DimensionError(std::string(op) + ": expected NCHW input");
  if (static_cast<int64_t>(mask.size()) != PixelCount(v)) {
    throw DimensionError(std::string(op) + ": mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(PixelCount(v)) + " pixels");
  }
}

int64_t CountMask(PixelMask mask) {
  int64_t n = 0;
  for (uint8_t m : mask) n += m != 0;
  return n;
}

void RequireScores(const Var& d, const char* op) {
  if (d.value().rank() != 4 || d.dim(1) != 1) throw DimensionError(std::string(op) + ": scores must be [N,1,h,w]");
  for (double s : d.value().data()) {
    if (!(s >= 0.0 && s <= 1.0)) throw ContractError(std::string(op) + ": score outside [0,1]");
  }
}

}  // namespace

Var rec_loss(Var x, Var x_gen, PixelMask mask) {
  if (x.shape() != x_gen.shape()) throw DimensionError("rec_loss: shape mismatch");
  RequireMask(x, mask, "rec_loss");
  const int64_t count = CountMask(mask);
  if (count == 0) throw ContractError("rec_loss: empty mask");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Tensor& a = x.value();
  const Tensor& b = x_gen.value();
  auto diff = std::make_shared<Tensor>(a.shape());
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      if (!mask[static_cast<size_t>(i * hw + p)]) continue;
      for (int64_t k = 0; k < c; ++k) {
        const int64_t idx = (i * c + k) * hw + p;
        const double d = a[idx] - b[idx];
        (*diff)[idx] = d;
        total += d * d;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  return x.tape()->Record("rec_loss", Tensor::Scalar(total * inv), {x, x_gen},
                          [diff, inv](const Tensor& g, std::span<Tensor* const> d) {
                            const double s = 2.0 * g[0] * inv;
                            for (int64_t i = 0; i < diff->size(); ++i) {
                              if (d[0]) (*d[0])[i] += s * (*diff)[i];
                              if (d[1]) (*d[1])[i] -= s * (*diff)[i];
                            }
                          });
}

Var cls_loss(Var logits, std::span<const int> labels) {
  if (logits.value().rank() != 4) throw DimensionError("cls_loss: expected NCHW logits");
  const int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (static_cast<int64_t>(labels.size()) != n * hw) throw DimensionError("cls_loss: label count mismatch");
  const Tensor& z = logits.value();
  auto grad = std::make_shared<Tensor>(z.shape());
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      const int y = labels[static_cast<size_t>(i * hw + p)];
      if (y == kIgnore) continue;
      if (y < 0 || y >= k) throw ContractError("cls_loss: label " + std::to_string(y) + " out of range");
      double mx = z[(i * k) * hw + p];
      for (int64_t c = 1; c < k; ++c) mx = std::max(mx, z[(i * k + c) * hw + p]);
      double denom = 0.0;
      for (int64_t c = 0; c < k; ++c) denom += std::exp(z[(i * k + c) * hw + p] - mx);
      const double log_denom = std::log(denom);
      total += -(z[(i * k + y) * hw + p] - mx - log_denom);
      for (int64_t c = 0; c < k; ++c) {
        const int64_t idx = (i * k + c) * hw + p;
        (*grad)[idx] = std::exp(z[idx] - mx - log_denom) - (c == y ? 1.0 : 0.0);
      }
      ++count;
    }
  }
  if (count == 0) throw ContractError("cls_loss: every pixel is IGNORE");
  const double inv = 1.0 / static_cast<double>(count);
  return logits.tape()->Record("cls_loss", Tensor::Scalar(total * inv), {logits},
                               [grad, inv](const Tensor& g, std::span<Tensor* const> d) {
                                 const double s = g[0] * inv;
                                 for (int64_t i = 0; i < grad->size(); ++i) (*d[0])[i] += s * (*grad)[i];
                               });
}

Var adv_objective_d(Var d_real, Var d_fake, PixelMask mask) {
  RequireScores(d_fake, "adv_objective_d");
  RequireMask(d_fake, mask, "adv_objective_d");
  const bool has_real = d_real.valid();
  if (has_real) {
    RequireScores(d_real, "adv_objective_d");
    if (d_real.shape() != d_fake.shape()) throw DimensionError("adv_objective_d: real/fake shape mismatch");
  }
  const int64_t count = CountMask(mask);
  if (count == 0) throw ContractError("adv_objective_d: empty mask");
  const double inv = 1.0 / static_cast<double>(count);
  const Tensor& f = d_fake.value();
  double total = 0.0;
  for (int64_t i = 0; i < f.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const double r = has_real ? d_real.value()[i] : 0.0;
    total += r * r + (1.0 - f[i]) * (1.0 - f[i]);
  }
  std::vector<Var> inputs = {d_fake};
  if (has_real) inputs.push_back(d_real);
  const Tensor* fv = &f;
  const Tensor* rv = has_real ? &d_real.value() : nullptr;
  std::vector<uint8_t> m(mask.begin(), mask.end());
  return d_fake.tape()->Record("adv_objective_d", Tensor::Scalar(total * inv), std::move(inputs),
                               [fv, rv, inv, m = std::move(m)](const Tensor& g, std::span<Tensor* const> d) {
                                 const double s = g[0] * inv;
                                 for (size_t i = 0; i < m.size(); ++i) {
                                   if (!m[i]) continue;
                                   const auto idx = static_cast<int64_t>(i);
                                   if (d[0]) (*d[0])[idx] += s * -2.0 * (1.0 - (*fv)[idx]);
                                   if (rv && d[1]) (*d[1])[idx] += s * 2.0 * (*rv)[idx];
                                 }
                               });
}

Var adv_objective_g(Var d_fake, PixelMask mask) {
  RequireScores(d_fake, "adv_objective_g");
  RequireMask(d_fake, mask, "adv_objective_g");
  const int64_t count = CountMask(mask);
  if (count == 0) throw ContractError("adv_objective_g: empty mask");
  const double inv = 1.0 / static_cast<double>(count);
  const Tensor& f = d_fake.value();
  double total = 0.0;
  for (int64_t i = 0; i < f.size(); ++i) {
    if (mask[static_cast<size_t>(i)]) total += (1.0 - f[i]) * (1.0 - f[i]);
  }
  const Tensor* fv = &f;
  std::vector<uint8_t> m(mask.begin(), mask.end());
  return d_fake.tape()->Record("adv_objective_g", Tensor::Scalar(total * inv), {d_fake},
                               [fv, inv, m = std::move(m)](const Tensor& g, std::span<Tensor* const> d) {
                                 const double s = g[0] * inv;
                                 for (size_t i = 0; i < m.size(); ++i) {
                                   if (m[i]) (*d[0])[static_cast<int64_t>(i)] += s * -2.0 * (1.0 - (*fv)[static_cast<int64_t>(i)]);
                                 }
                               });
}

Var kl_loss(Var mu, Var sigma) {
  if (mu.shape() != sigma.shape() || mu.value().rank() != 4) throw DimensionError("kl_loss: mu/sigma shape mismatch");
  for (double s : sigma.value().data()) {
    if (!(s > 0.0)) throw ContractError("kl_loss: sigma must be positive");
  }
  const int64_t pixels = PixelCount(mu);
  const Tensor& m = mu.value();
  const Tensor& s = sigma.value();
  double total = 0.0;
  for (int64_t i = 0; i < m.size(); ++i) total += m[i] * m[i] + s[i] * s[i] - std::log(s[i] * s[i]) - 1.0;
  const double inv = 1.0 / static_cast<double>(pixels);
  const Tensor* mv = &m;
  const Tensor* sv = &s;
  return mu.tape()->Record("kl_loss", Tensor::Scalar(0.5 * total * inv), {mu, sigma},
                           [mv, sv, inv](const Tensor& g, std::span<Tensor* const> d) {
                             const double k = g[0] * inv;
                             for (int64_t i = 0; i < mv->size(); ++i) {
                               if (d[0]) (*d[0])[i] += k * (*mv)[i];
                               if (d[1]) (*d[1])[i] += k * ((*sv)[i] - 1.0 / (*sv)[i]);
                             }
                           });
}

double TrainObjective(const LossReport& r, const LossWeights& w) {
  double total = r.cls;
  if (w.use_adv) total += r.adv_g;
  if (w.use_rec) total += w.lambda1 * r.rec;
  if (w.use_kl) total += w.lambda2 * r.kl;
  return total;
}

double FinetuneObjective(const LossReport& r, const LossWeights& w) { return r.cls + (w.use_adv ? r.adv_g : 0.0); }

std::string LossCsvRow(int64_t step, const std::string& phase, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(step),
                phase.c_str(), r.cls, r.adv_d, r.adv_g, r.rec, r.kl, r.total);
  return buf;
}

}  // namespace ctxgen
