#include "ctxgen/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "ctxgen/errors.h"

namespace ctxgen {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

void RequireRank(const Var& v, int rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         ShapeString(v.shape()));
  }
}

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + ShapeString(a.shape()) + " vs " +
                         ShapeString(b.shape()));
  }
}

template <typename F, typename G>
Var Unary(const char* op, Var x, F forward, G derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (int64_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  if (!x.requires_grad()) return x.tape()->Record(op, std::move(out), {x}, nullptr);
  auto slope = std::make_shared<AlignedVector>(static_cast<size_t>(in.size()));
  for (int64_t i = 0; i < in.size(); ++i) (*slope)[static_cast<size_t>(i)] = derivative(in[i], out[i]);
  return x.tape()->Record(op, std::move(out), {x}, [slope](const Tensor& g, std::span<Tensor* const> dx) {
    Tensor& d = *dx[0];
    for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*slope)[static_cast<size_t>(i)];
  });
}

// Builds the [Cin*k*k, Ho*Wo] patch matrix for one image.
void Im2Col(const double* img, int64_t cin, int64_t h, int64_t w, int64_t k, const Conv2dOptions& o,
            int64_t ho, int64_t wo, double* cols) {
  for (int64_t c = 0; c < cin; ++c) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
        const int64_t dy = ky * o.dilation - o.padding;
        const int64_t dx = kx * o.dilation - o.padding;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t iy = y * o.stride + dy;
          double* dst = row + y * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = img + (c * h + iy) * w;
          for (int64_t x = 0; x < wo; ++x) {
            const int64_t ix = x * o.stride + dx;
            dst[x] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void Col2ImAdd(const double* cols, int64_t cin, int64_t h, int64_t w, int64_t k, const Conv2dOptions& o,
               int64_t ho, int64_t wo, double* img) {
  for (int64_t c = 0; c < cin; ++c) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
        const int64_t dy = ky * o.dilation - o.padding;
        const int64_t dx = kx * o.dilation - o.padding;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t iy = y * o.stride + dy;
          if (iy < 0 || iy >= h) continue;
          double* dst = img + (c * h + iy) * w;
          const double* src = row + y * wo;
          for (int64_t x = 0; x < wo; ++x) {
            const int64_t ix = x * o.stride + dx;
            if (ix >= 0 && ix < w) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, Conv2dOptions opts) {
  RequireRank(input, 4, "conv2d");
  RequireRank(kernel, 4, "conv2d");
  const Tensor& x = input.value();
  const Tensor& wt = kernel.value();
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = wt.dim(0), k = wt.dim(2);
  if (wt.dim(1) != cin) {
    throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                         std::to_string(wt.dim(1)));
  }
  if (wt.dim(3) != k || k % 2 == 0) throw DimensionError("conv2d: kernel must be square with odd size");
  if (bias.shape() != Shape{cout}) throw DimensionError("conv2d: bias must have shape [Cout]");
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0) {
    throw ConfigError("conv2d: stride and dilation must be positive, padding non-negative");
  }
  const int64_t span = opts.dilation * (k - 1) + 1;
  const int64_t ho = (h + 2 * opts.padding - span) / opts.stride + 1;
  const int64_t wo = (w + 2 * opts.padding - span) / opts.stride + 1;
  if (h + 2 * opts.padding < span || w + 2 * opts.padding < span || ho <= 0 || wo <= 0) {
    throw ConfigError("conv2d: zero-size spatial output");
  }
  const int64_t patch = cin * k * k;
  const int64_t npix = ho * wo;
  const bool pointwise = (k == 1 && opts.stride == 1 && opts.padding == 0);

  // Patch matrices are kept for the kernel gradient.
  auto cols = std::make_shared<AlignedVector>(pointwise ? 0 : static_cast<size_t>(n * patch * npix));
  Tensor out({n, cout, ho, wo});
  ConstMapMat wmat(wt.raw(), cout, patch);
  ConstMapVec b(bias.value().raw(), cout);
  for (int64_t i = 0; i < n; ++i) {
    const double* col_ptr;
    if (pointwise) {
      col_ptr = x.raw() + i * cin * h * w;
    } else {
      double* c = cols->data() + i * patch * npix;
      Im2Col(x.raw() + i * cin * h * w, cin, h, w, k, opts, ho, wo, c);
      col_ptr = c;
    }
    MapMat o(out.raw() + i * cout * npix, cout, npix);
    o.noalias() = wmat * ConstMapMat(col_ptr, patch, npix);
    o.colwise() += b;
  }

  const Tensor* x_ptr = &x;
  const Tensor* w_ptr = &wt;
  return input.tape()->Record(
      "conv2d", std::move(out), {input, kernel, bias},
      [=](const Tensor& g, std::span<Tensor* const> d) {
        ConstMapMat wm(w_ptr->raw(), cout, patch);
        AlignedVector dcol(d[0] ? static_cast<size_t>(patch * npix) : 0);
        for (int64_t i = 0; i < n; ++i) {
          ConstMapMat go(g.raw() + i * cout * npix, cout, npix);
          const double* col_ptr = pointwise ? x_ptr->raw() + i * cin * h * w : cols->data() + i * patch * npix;
          if (d[1]) {
            MapMat dw(d[1]->raw(), cout, patch);
            dw.noalias() += go * ConstMapMat(col_ptr, patch, npix).transpose();
          }
          if (d[2]) MapVec(d[2]->raw(), cout) += go.rowwise().sum();
          if (d[0]) {
            if (pointwise) {
              MapMat dx(d[0]->raw() + i * cin * h * w, cin, npix);
              dx.noalias() += wm.transpose() * go;
            } else {
              MapMat dc(dcol.data(), patch, npix);
              dc.noalias() = wm.transpose() * go;
              Col2ImAdd(dcol.data(), cin, h, w, k, opts, ho, wo, d[0]->raw() + i * cin * h * w);
            }
          }
        }
      });
}

Var affine(Var input, Var weight, Var bias) {
  RequireRank(input, 2, "affine");
  RequireRank(weight, 2, "affine");
  const int64_t m = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw DimensionError("affine: input width " + std::to_string(din) + " vs weight " +
                         ShapeString(weight.shape()));
  }
  if (bias.shape() != Shape{dout}) throw DimensionError("affine: bias must have shape [Dout]");
  Tensor out({m, dout});
  ConstMapMat x(input.value().raw(), m, din);
  ConstMapMat wm(weight.value().raw(), dout, din);
  MapMat o(out.raw(), m, dout);
  o.noalias() = x * wm.transpose();
  o.rowwise() += ConstMapVec(bias.value().raw(), dout).transpose();
  const Tensor* x_ptr = &input.value();
  const Tensor* w_ptr = &weight.value();
  return input.tape()->Record(
      "affine", std::move(out), {input, weight, bias},
      [=](const Tensor& g, std::span<Tensor* const> d) {
        ConstMapMat go(g.raw(), m, dout);
        if (d[0]) MapMat(d[0]->raw(), m, din).noalias() += go * ConstMapMat(w_ptr->raw(), dout, din);
        if (d[1]) MapMat(d[1]->raw(), dout, din).noalias() += go.transpose() * ConstMapMat(x_ptr->raw(), m, din);
        if (d[2]) MapVec(d[2]->raw(), dout) += go.colwise().sum().transpose();
      });
}

Var leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu: slope must be in (0,1)");
  return Unary(
      "leaky_relu", x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var x) {
  return Unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return Unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw ContractError("log: non-positive input");
  }
  return Unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return Unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp_min(Var x, double floor) {
  return Unary(
      "clamp_min", x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Var scale(Var x, double s) {
  return Unary(
      "scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  return Unary(
      "add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var softmax_channels(Var x) {
  RequireRank(x, 4, "softmax_channels");
  const Tensor& in = x.value();
  const int64_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
  Tensor out(in.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double* src = in.raw() + i * c * hw;
    double* dst = out.raw() + i * c * hw;
    for (int64_t p = 0; p < hw; ++p) {
      double mx = src[p];
      for (int64_t k = 1; k < c; ++k) mx = std::max(mx, src[k * hw + p]);
      double total = 0.0;
      for (int64_t k = 0; k < c; ++k) {
        dst[k * hw + p] = std::exp(src[k * hw + p] - mx);
        total += dst[k * hw + p];
      }
      for (int64_t k = 0; k < c; ++k) dst[k * hw + p] /= total;
    }
  }
  if (!x.requires_grad()) return x.tape()->Record("softmax_channels", std::move(out), {x}, nullptr);
  auto y_saved = std::make_shared<Tensor>(out);
  return x.tape()->Record(
      "softmax_channels", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
        const Tensor& y = *y_saved;
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t p = 0; p < hw; ++p) {
            double dot = 0.0;
            for (int64_t k = 0; k < c; ++k) dot += g[(i * c + k) * hw + p] * y[(i * c + k) * hw + p];
            for (int64_t k = 0; k < c; ++k) {
              const int64_t idx = (i * c + k) * hw + p;
              (*d[0])[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const Tensor& in = x.value();
  auto mask = std::make_shared<AlignedVector>(static_cast<size_t>(in.size()));
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out(in.shape());
  for (int64_t i = 0; i < in.size(); ++i) {
    const double m = rng.Uniform() < rate ? 0.0 : keep_scale;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] = in[i] * m;
  }
  return x.tape()->Record("dropout", std::move(out), {x}, [mask](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < g.size(); ++i) (*d[0])[i] += g[i] * (*mask)[static_cast<size_t>(i)];
  });
}

Var add(Var a, Var b) {
  RequireSameShape(a, b, "add");
  Tensor out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape()->Record("add", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> d) {
    for (int k = 0; k < 2; ++k) {
      if (!d[k]) continue;
      for (int64_t i = 0; i < g.size(); ++i) (*d[k])[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  RequireSameShape(a, b, "sub");
  Tensor out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape()->Record("sub", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> d) {
    if (d[0]) {
      for (int64_t i = 0; i < g.size(); ++i) (*d[0])[i] += g[i];
    }
    if (d[1]) {
      for (int64_t i = 0; i < g.size(); ++i) (*d[1])[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  RequireSameShape(a, b, "mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  return a.tape()->Record("mul", std::move(out), {a, b}, [=](const Tensor& g, std::span<Tensor* const> d) {
    if (d[0]) {
      for (int64_t i = 0; i < g.size(); ++i) (*d[0])[i] += g[i] * (*bv)[i];
    }
    if (d[1]) {
      for (int64_t i = 0; i < g.size(); ++i) (*d[1])[i] += g[i] * (*av)[i];
    }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape()->Record("sum", Tensor::Scalar(total), {x}, [](const Tensor& g, std::span<Tensor* const> d) {
    const double s = g[0];
    for (double& v : d[0]->data()) v += s;
  });
}

Var mean(Var x) {
  const double inv = 1.0 / static_cast<double>(x.value().size());
  return scale(sum(x), inv);
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 4) throw DimensionError("concat_channels: expected NCHW inputs");
  int64_t total_c = 0;
  std::vector<int64_t> channels;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw DimensionError("concat_channels: incompatible shape " + ShapeString(s));
    }
    channels.push_back(s[1]);
    total_c += s[1];
  }
  const int64_t n = s0[0], hw = s0[2] * s0[3];
  Tensor out({n, total_c, s0[2], s0[3]});
  int64_t offset = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (int64_t i = 0; i < n; ++i) {
      std::copy_n(v.raw() + i * channels[k] * hw, channels[k] * hw, out.raw() + (i * total_c + offset) * hw);
    }
    offset += channels[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->Record(
      "concat_channels", std::move(out), std::move(inputs), [=](const Tensor& g, std::span<Tensor* const> d) {
        int64_t off = 0;
        for (size_t k = 0; k < d.size(); ++k) {
          if (d[k]) {
            for (int64_t i = 0; i < n; ++i) {
              const double* src = g.raw() + (i * total_c + off) * hw;
              double* dst = d[k]->raw() + i * channels[k] * hw;
              for (int64_t j = 0; j < channels[k] * hw; ++j) dst[j] += src[j];
            }
          }
          off += channels[k];
        }
      });
}

Var slice_channels(Var x, int64_t begin, int64_t count) {
  RequireRank(x, 4, "slice_channels");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin < 0 || count <= 0 || begin + count > c) throw DimensionError("slice_channels: range out of bounds");
  Tensor out({n, count, x.dim(2), x.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(x.value().raw() + (i * c + begin) * hw, count * hw, out.raw() + i * count * hw);
  }
  return x.tape()->Record("slice_channels", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < n; ++i) {
      const double* src = g.raw() + i * count * hw;
      double* dst = d[0]->raw() + (i * c + begin) * hw;
      for (int64_t j = 0; j < count * hw; ++j) dst[j] += src[j];
    }
  });
}

Var broadcast_channels(Var x, int64_t channels) {
  RequireRank(x, 4, "broadcast_channels");
  if (x.dim(1) != 1) throw DimensionError("broadcast_channels: input must have one channel");
  const int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor out({n, channels, x.dim(2), x.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < channels; ++c) std::copy_n(x.value().raw() + i * hw, hw, out.raw() + (i * channels + c) * hw);
  }
  return x.tape()->Record("broadcast_channels", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t c = 0; c < channels; ++c) {
        for (int64_t p = 0; p < hw; ++p) (*d[0])[i * hw + p] += g[(i * channels + c) * hw + p];
      }
    }
  });
}

Var spatial_mean(Var x) {
  RequireRank(x, 4, "spatial_mean");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n, c, 1, 1});
  for (int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (int64_t p = 0; p < hw; ++p) s += x.value()[i * hw + p];
    out[i] = s / static_cast<double>(hw);
  }
  return x.tape()->Record("spatial_mean", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < n * c; ++i) {
      const double v = g[i] / static_cast<double>(hw);
      for (int64_t p = 0; p < hw; ++p) (*d[0])[i * hw + p] += v;
    }
  });
}

Var broadcast_spatial(Var x, int64_t height, int64_t width) {
  RequireRank(x, 4, "broadcast_spatial");
  if (x.dim(2) != 1 || x.dim(3) != 1) throw DimensionError("broadcast_spatial: input must be [N,C,1,1]");
  const int64_t nc = x.dim(0) * x.dim(1), hw = height * width;
  Tensor out({x.dim(0), x.dim(1), height, width});
  for (int64_t i = 0; i < nc; ++i) std::fill_n(out.raw() + i * hw, hw, x.value()[i]);
  return x.tape()->Record("broadcast_spatial", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < nc; ++i) {
      double s = 0.0;
      for (int64_t p = 0; p < hw; ++p) s += g[i * hw + p];
      (*d[0])[i] += s;
    }
  });
}

Var to_pixel_rows(Var x) {
  RequireRank(x, 4, "to_pixel_rows");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n * hw, c});
  for (int64_t i = 0; i < n; ++i) {
    ConstMapMat src(x.value().raw() + i * c * hw, c, hw);
    MapMat(out.raw() + i * hw * c, hw, c) = src.transpose();
  }
  return x.tape()->Record("to_pixel_rows", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < n; ++i) {
      MapMat(d[0]->raw() + i * c * hw, c, hw) += ConstMapMat(g.raw() + i * hw * c, hw, c).transpose();
    }
  });
}

Var from_pixel_rows(Var rows, int64_t n, int64_t height, int64_t width) {
  RequireRank(rows, 2, "from_pixel_rows");
  const int64_t hw = height * width, c = rows.dim(1);
  if (rows.dim(0) != n * hw) throw DimensionError("from_pixel_rows: row count does not match N*H*W");
  Tensor out({n, c, height, width});
  for (int64_t i = 0; i < n; ++i) {
    MapMat(out.raw() + i * c * hw, c, hw) = ConstMapMat(rows.value().raw() + i * hw * c, hw, c).transpose();
  }
  return rows.tape()->Record("from_pixel_rows", std::move(out), {rows}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (int64_t i = 0; i < n; ++i) {
      MapMat(d[0]->raw() + i * hw * c, hw, c) += ConstMapMat(g.raw() + i * c * hw, c, hw).transpose();
    }
  });
}

Var concat_columns(Var a, Var b) {
  RequireRank(a, 2, "concat_columns");
  RequireRank(b, 2, "concat_columns");
  if (a.dim(0) != b.dim(0)) throw DimensionError("concat_columns: row counts differ");
  const int64_t m = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out({m, ca + cb});
  MapMat o(out.raw(), m, ca + cb);
  o.leftCols(ca) = ConstMapMat(a.value().raw(), m, ca);
  o.rightCols(cb) = ConstMapMat(b.value().raw(), m, cb);
  return a.tape()->Record("concat_columns", std::move(out), {a, b}, [=](const Tensor& g, std::span<Tensor* const> d) {
    ConstMapMat go(g.raw(), m, ca + cb);
    if (d[0]) MapMat(d[0]->raw(), m, ca) += go.leftCols(ca);
    if (d[1]) MapMat(d[1]->raw(), m, cb) += go.rightCols(cb);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  RequireRank(table, 2, "gather_rows");
  const int64_t rows = table.dim(0), width = table.dim(1);
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  Tensor out({static_cast<int64_t>(idx->size()), width});
  for (size_t i = 0; i < idx->size(); ++i) {
    const int r = (*idx)[i];
    if (r < 0 || r >= rows) throw DimensionError("gather_rows: index " + std::to_string(r) + " out of range");
    std::copy_n(table.value().raw() + r * width, width, out.raw() + static_cast<int64_t>(i) * width);
  }
  return table.tape()->Record("gather_rows", std::move(out), {table}, [=](const Tensor& g, std::span<Tensor* const> d) {
    for (size_t i = 0; i < idx->size(); ++i) {
      double* dst = d[0]->raw() + (*idx)[i] * width;
      const double* src = g.raw() + static_cast<int64_t>(i) * width;
      for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

}  // namespace ctxgen
