#pragma once

#include <vector>

#include "magniflow/nn/tensor.hpp"

namespace magniflow::nn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
Tensor add_scalar(const Tensor& a, Real value);
Tensor square(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_abs(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& shape);

// x: [N, C, H, W], bias: [N, C] broadcast over space.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// x: [N, in], weight: [out, in], bias: [out] (optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation. x: [N, Cin, H, W], weight: [Cout, Cin, k, k], bias:
// [Cout] or undefined. Zero padding. Output extent floor((in + 2p - k)/s) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1, int padding = 0);

// Per-group standardisation over (channels in group x space), then affine.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& shift, Real eps = Real(1e-5));

enum class Resample { kUp, kDown };
// Up: bilinear x2 with half-pixel centers. Down: 2x2 average (even extents).
Tensor resample2x(const Tensor& x, Resample direction);
// Bilinear resize to an arbitrary extent, half-pixel centers, edge clamp.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, int start, int count);

// Numerically stable softmax along `axis`.
Tensor softmax_axis(const Tensor& x, int axis);

// Backward warp: out(p) = bilinear sample of x at p + flow(p), clamped to
// the border. flow: [N, 2, H, W] (u, v), treated as a constant.
Tensor warp_bilinear(const Tensor& x, const Tensor& flow);

// G[n, i, j] = <F_i, F_j> over vectorised channel maps. x: [N, C, H, W].
Tensor gram(const Tensor& x);

}  // namespace magniflow::nn
