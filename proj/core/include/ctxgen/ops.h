#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctxgen/autograd.h"
#include "ctxgen/rng.h"
#include "ctxgen/tensor.h"

namespace ctxgen {

struct Conv2dOptions {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

// Padding that keeps H and W unchanged at stride 1.
constexpr int SamePadding(int kernel, int dilation) { return dilation * (kernel - 1) / 2; }

// Dilated cross-correlation. input [N,Cin,H,W], kernel [Cout,Cin,k,k],
// bias [Cout] -> [N,Cout,H',W'].
Var conv2d(Var input, Var kernel, Var bias, Conv2dOptions opts = {});

// Row-wise weight . x + bias. input [M,Din], weight [Dout,Din], bias [Dout].
Var affine(Var input, Var weight, Var bias);

Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
// max(x, floor); gradient passes only where x > floor.
Var clamp_min(Var x, double floor);

// Per-pixel softmax over the channel axis of an [N,C,H,W] tensor.
Var softmax_channels(Var x);

// Inverted dropout. In training each element is kept with probability
// 1 - rate and scaled by 1 / (1 - rate); otherwise identity.
Var dropout(Var x, double rate, Rng& rng, bool training);

Var add(Var a, Var b);
Var sub(Var a, Var b);
// Hadamard product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);

Var sum(Var x);
Var mean(Var x);

// NCHW channel manipulation.
Var concat_channels(std::span<const Var> parts);
Var slice_channels(Var x, int64_t begin, int64_t count);
// [N,1,H,W] -> [N,C,H,W] by repeating the single channel.
Var broadcast_channels(Var x, int64_t channels);
// [N,C,H,W] -> [N,C,1,1]
Var spatial_mean(Var x);
// [N,C,1,1] -> [N,C,H,W]
Var broadcast_spatial(Var x, int64_t height, int64_t width);

// [N,C,H,W] <-> [N*H*W, C], pixel-major rows.
Var to_pixel_rows(Var x);
Var from_pixel_rows(Var rows, int64_t n, int64_t height, int64_t width);
// [M,C] -> [M,C1+C2]
Var concat_columns(Var a, Var b);

// out[i,:] = table[ids[i],:]; gradient scatters back into the table.
Var gather_rows(Var table, std::span<const int> ids);

}  // namespace ctxgen
