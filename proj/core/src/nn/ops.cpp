#include "magniflow/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "blas.hpp"
#include "magniflow/errors.hpp"

namespace magniflow::nn {

namespace {

// Runs fn(grad) on the parent's gradient buffer if it wants one.
template <typename Fn>
void accumulate(const NodePtr& parent, Fn&& fn) {
  if (parent && parent->requires_grad) fn(parent->grad_buffer());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

void require_rank4(const Tensor& x, const char* op) {
  require(x.rank() == 4, std::string(op) + ": expected NCHW tensor, got " + to_string(x.shape()));
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd dfdx) {
  std::vector<Real> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  auto pa = a.node();
  return make_result(a.shape(), std::move(out), {a}, [pa, dfdx](Node& o) {
    accumulate(pa, [&](std::vector<Real>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * dfdx(pa->value[i], o.value[i]);
    });
  });
}

Real logistic(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](Node& o) {
    accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
    accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](Node& o) {
    accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
    accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i]; });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](Node& o) {
    accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb->value[i]; });
    accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa->value[i]; });
  });
}

Tensor scale(const Tensor& a, Real factor) {
  return unary(a, [factor](Real x) { return x * factor; }, [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& a, Real value) {
  return unary(a, [value](Real x) { return x + value; }, [](Real, Real) { return Real(1); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](Real x) { return x * x; }, [](Real x, Real) { return Real(2) * x; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](Real x) { return x * logistic(x); },
      [](Real x, Real) {
        const Real s = logistic(x);
        return s * (Real(1) + x * (Real(1) - s));
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, logistic, [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor sum(const Tensor& a) {
  Real total = 0;
  for (Real x : a.data()) total += x;
  auto pa = a.node();
  return make_result({1}, {total}, {a}, [pa](Node& o) {
    accumulate(pa, [&](auto& g) { for (auto& x : g) x += o.grad[0]; });
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Real(1) / static_cast<Real>(a.numel())); }

Tensor mean_abs(const Tensor& a) {
  Real total = 0;
  for (Real x : a.data()) total += std::abs(x);
  const Real inv = Real(1) / static_cast<Real>(a.numel());
  auto pa = a.node();
  return make_result({1}, {total * inv}, {a}, [pa, inv](Node& o) {
    accumulate(pa, [&](auto& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real x = pa->value[i];
        g[i] += o.grad[0] * inv * static_cast<Real>((x > 0) - (x < 0));
      }
    });
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  require(numel(shape) == a.numel(), "reshape: element count mismatch");
  auto pa = a.node();
  return make_result(shape, std::vector<Real>(a.data().begin(), a.data().end()), {a}, [pa](Node& o) {
    accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank4(x, "add_channel_bias");
  const int n = x.dim(0), c = x.dim(1);
  require(bias.shape() == Shape{n, c}, "add_channel_bias: bias must be [N, C]");
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (int i = 0; i < n * c; ++i) {
    const Real b = bias.data()[i];
    for (std::size_t p = 0; p < hw; ++p) out[i * hw + p] += b;
  }
  auto px = x.node(), pb = bias.node();
  return make_result(x.shape(), std::move(out), {x, bias}, [px, pb, n, c, hw](Node& o) {
    accumulate(px, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
    accumulate(pb, [&](auto& g) {
      for (int i = 0; i < n * c; ++i) {
        Real s = 0;
        for (std::size_t p = 0; p < hw; ++p) s += o.grad[i * hw + p];
        g[i] += s;
      }
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(1), "linear: shape mismatch");
  const int n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias.defined()) require(bias.shape() == Shape{out_dim}, "linear: bias shape mismatch");
  std::vector<Real> out(static_cast<std::size_t>(n) * out_dim, Real(0));
  detail::gemm(false, true, n, out_dim, in, 1, x.data().data(), in, weight.data().data(), in, 0, out.data(), out_dim);
  if (bias.defined()) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < out_dim; ++j) out[static_cast<std::size_t>(i) * out_dim + j] += bias.data()[j];
    }
  }
  auto px = x.node(), pw = weight.node(), pb = bias.defined() ? bias.node() : NodePtr{};
  return make_result({n, out_dim}, std::move(out), {x, weight, bias}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      detail::gemm(false, false, n, in, out_dim, 1, o.grad.data(), out_dim, pw->value.data(), in, 1, g.data(), in);
    });
    accumulate(pw, [&](auto& g) {
      detail::gemm(true, false, out_dim, in, n, 1, o.grad.data(), out_dim, px->value.data(), in, 1, g.data(), in);
    });
    accumulate(pb, [&](auto& g) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_dim; ++j) g[j] += o.grad[static_cast<std::size_t>(i) * out_dim + j];
      }
    });
  });
}

namespace {

struct ConvGeometry {
  int cin, h, w, k, stride, pad, ho, wo;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const Real* x, Real* cols) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Real* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          Real* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, Real(0));
            continue;
          }
          const Real* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : Real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const Real* cols, Real* x) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Real* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          Real* dst = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const Real* src = row + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank4(x, "conv2d");
  require(weight.rank() == 4 && weight.dim(2) == weight.dim(3), "conv2d: weight must be [Cout, Cin, k, k]");
  require(weight.dim(1) == x.dim(1), "conv2d: channel mismatch " + to_string(x.shape()) + " vs weight " +
                                         to_string(weight.shape()));
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  const int n = x.dim(0), cout = weight.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), stride, padding, 0, 0};
  require(g.h + 2 * padding >= g.k && g.w + 2 * padding >= g.k, "conv2d: kernel larger than padded input");
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  if (bias.defined()) require(bias.shape() == Shape{cout}, "conv2d: bias shape mismatch");

  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * g.cols();
  const int kdim = static_cast<int>(g.rows()), pdim = static_cast<int>(g.cols());
  std::vector<Real> out(static_cast<std::size_t>(n) * out_stride);
  std::vector<Real> cols(g.pointwise() ? 0 : g.rows() * g.cols());
  for (int b = 0; b < n; ++b) {
    const Real* xb = x.data().data() + b * in_stride;
    const Real* src = xb;
    if (!g.pointwise()) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    Real* ob = out.data() + b * out_stride;
    detail::gemm(false, false, cout, pdim, kdim, 1, weight.data().data(), kdim, src, pdim, 0, ob, pdim);
    if (bias.defined()) {
      for (int c = 0; c < cout; ++c) {
        const Real bc = bias.data()[c];
        for (int p = 0; p < pdim; ++p) ob[static_cast<std::size_t>(c) * pdim + p] += bc;
      }
    }
  }

  auto px = x.node(), pw = weight.node(), pb = bias.defined() ? bias.node() : NodePtr{};
  return make_result({n, cout, g.ho, g.wo}, std::move(out), {x, weight, bias}, [=](Node& o) {
    std::vector<Real> buf(g.pointwise() ? 0 : g.rows() * g.cols());
    for (int b = 0; b < n; ++b) {
      const Real* gout = o.grad.data() + b * out_stride;
      const Real* xb = px->value.data() + b * in_stride;
      accumulate(pw, [&](auto& gw) {
        const Real* src = xb;
        if (!g.pointwise()) {
          im2col(g, xb, buf.data());
          src = buf.data();
        }
        detail::gemm(false, true, cout, kdim, pdim, 1, gout, pdim, src, pdim, 1, gw.data(), kdim);
      });
      accumulate(pb, [&](auto& gb) {
        for (int c = 0; c < cout; ++c) {
          Real s = 0;
          for (int p = 0; p < pdim; ++p) s += gout[static_cast<std::size_t>(c) * pdim + p];
          gb[c] += s;
        }
      });
      accumulate(px, [&](auto& gx) {
        Real* dxb = gx.data() + b * in_stride;
        if (g.pointwise()) {
          detail::gemm(true, false, kdim, pdim, cout, 1, pw->value.data(), kdim, gout, pdim, 1, dxb, pdim);
        } else {
          detail::gemm(true, false, kdim, pdim, cout, 1, pw->value.data(), kdim, gout, pdim, 0, buf.data(), pdim);
          col2im_add(g, buf.data(), dxb);
        }
      });
    }
  });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& shift, Real eps) {
  require_rank4(x, "group_norm");
  const int n = x.dim(0), c = x.dim(1);
  require(groups >= 1 && c % groups == 0, "group_norm: channels not divisible by groups");
  require(eps > 0, "group_norm: eps must be positive");
  require(gain.shape() == Shape{c} && shift.shape() == Shape{c}, "group_norm: affine parameters must be [C]");
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const int cg = c / groups;
  const std::size_t m = cg * hw;
  std::vector<Real> xhat(x.numel()), out(x.numel()), inv_std(static_cast<std::size_t>(n) * groups);
  for (int b = 0; b < n; ++b) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + gi * cg) * hw;
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += x.data()[base + i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = x.data()[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(b) * groups + gi] = static_cast<Real>(is);
      for (std::size_t i = 0; i < m; ++i) {
        const int ch = gi * cg + static_cast<int>(i / hw);
        const Real xh = static_cast<Real>((x.data()[base + i] - mu) * is);
        xhat[base + i] = xh;
        out[base + i] = xh * gain.data()[ch] + shift.data()[ch];
      }
    }
  }
  auto px = x.node(), pg = gain.node(), ps = shift.node();
  return make_result(x.shape(), std::move(out), {x, gain, shift},
                     [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
    accumulate(pg, [&](auto& gg) {
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * hw;
          Real s = 0;
          for (std::size_t p = 0; p < hw; ++p) s += o.grad[base + p] * xhat[base + p];
          gg[ch] += s;
        }
      }
    });
    accumulate(ps, [&](auto& gs) {
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * hw;
          Real s = 0;
          for (std::size_t p = 0; p < hw; ++p) s += o.grad[base + p];
          gs[ch] += s;
        }
      }
    });
    accumulate(px, [&](auto& gx) {
      for (int b = 0; b < n; ++b) {
        for (int gi = 0; gi < groups; ++gi) {
          const std::size_t base = (static_cast<std::size_t>(b) * c + gi * cg) * hw;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const int ch = gi * cg + static_cast<int>(i / hw);
            const double d = static_cast<double>(o.grad[base + i]) * pg->value[ch];
            mean_d += d;
            mean_dx += d * xhat[base + i];
          }
          mean_d /= static_cast<double>(m);
          mean_dx /= static_cast<double>(m);
          const double is = inv_std[static_cast<std::size_t>(b) * groups + gi];
          for (std::size_t i = 0; i < m; ++i) {
            const int ch = gi * cg + static_cast<int>(i / hw);
            const double d = static_cast<double>(o.grad[base + i]) * pg->value[ch];
            gx[base + i] += static_cast<Real>(is * (d - mean_d - xhat[base + i] * mean_dx));
          }
        }
      }
    });
  });
}

namespace {

struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<Real> f;
};

AxisTaps bilinear_taps(int in, int out) {
  AxisTaps t{std::vector<int>(out), std::vector<int>(out), std::vector<Real>(out)};
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::clamp((o + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
    t.i0[o] = static_cast<int>(std::floor(src));
    t.i1[o] = std::min(t.i0[o] + 1, in - 1);
    t.f[o] = static_cast<Real>(src - t.i0[o]);
  }
  return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_rank4(x, "resize_bilinear");
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: empty output");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = bilinear_taps(h, out_h), tx = bilinear_taps(w, out_w);
  const std::size_t in_hw = static_cast<std::size_t>(h) * w, out_hw = static_cast<std::size_t>(out_h) * out_w;
  std::vector<Real> out(planes * out_hw);
  for (int p = 0; p < planes; ++p) {
    const Real* src = x.data().data() + p * in_hw;
    Real* dst = out.data() + p * out_hw;
    for (int oy = 0; oy < out_h; ++oy) {
      const Real* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * w;
      const Real* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * w;
      const Real fy = ty.f[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const Real fx = tx.f[ox];
        const Real top = r0[tx.i0[ox]] * (1 - fx) + r0[tx.i1[ox]] * fx;
        const Real bot = r1[tx.i0[ox]] * (1 - fx) + r1[tx.i1[ox]] * fx;
        dst[static_cast<std::size_t>(oy) * out_w + ox] = top * (1 - fy) + bot * fy;
      }
    }
  }
  auto px = x.node();
  return make_result({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      for (int p = 0; p < planes; ++p) {
        Real* dst = g.data() + p * in_hw;
        const Real* go = o.grad.data() + p * out_hw;
        for (int oy = 0; oy < out_h; ++oy) {
          const Real fy = ty.f[oy];
          Real* r0 = dst + static_cast<std::size_t>(ty.i0[oy]) * w;
          Real* r1 = dst + static_cast<std::size_t>(ty.i1[oy]) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const Real gv = go[static_cast<std::size_t>(oy) * out_w + ox];
            const Real fx = tx.f[ox];
            r0[tx.i0[ox]] += gv * (1 - fy) * (1 - fx);
            r0[tx.i1[ox]] += gv * (1 - fy) * fx;
            r1[tx.i0[ox]] += gv * fy * (1 - fx);
            r1[tx.i1[ox]] += gv * fy * fx;
          }
        }
      }
    });
  });
}

Tensor resample2x(const Tensor& x, Resample direction) {
  require_rank4(x, "resample2x");
  const int h = x.dim(2), w = x.dim(3);
  require(h >= 1 && w >= 1, "resample2x: empty input");
  if (direction == Resample::kUp) return resize_bilinear(x, 2 * h, 2 * w);

  require(h % 2 == 0 && w % 2 == 0, "resample2x: down-sampling needs even extents");
  const int planes = x.dim(0) * x.dim(1), oh = h / 2, ow = w / 2;
  std::vector<Real> out(static_cast<std::size_t>(planes) * oh * ow);
  for (int p = 0; p < planes; ++p) {
    const Real* src = x.data().data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const Real* a = src + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        out[(static_cast<std::size_t>(p) * oh + y) * ow + xx] = Real(0.25) * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  auto px = x.node();
  return make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      for (int p = 0; p < planes; ++p) {
        Real* dst = g.data() + static_cast<std::size_t>(p) * h * w;
        for (int y = 0; y < oh; ++y) {
          for (int xx = 0; xx < ow; ++xx) {
            const Real gv = Real(0.25) * o.grad[(static_cast<std::size_t>(p) * oh + y) * ow + xx];
            Real* a = dst + static_cast<std::size_t>(2 * y) * w + 2 * xx;
            a[0] += gv;
            a[1] += gv;
            a[w] += gv;
            a[w + 1] += gv;
          }
        }
      }
    });
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int total = 0;
  for (const auto& t : parts) {
    require(t.rank() == 4 && t.dim(0) == n && t.dim(2) == h && t.dim(3) == w, "concat_channels: shape mismatch");
    total += t.dim(1);
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<Real> out(static_cast<std::size_t>(n) * total * hw);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    const std::size_t block = t.dim(1) * hw;
    for (int b = 0; b < n; ++b) {
      std::copy_n(t.data().data() + b * block, block, out.data() + (static_cast<std::size_t>(b) * total + off) * hw);
    }
    off += t.dim(1);
  }
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  for (const auto& t : parts) {
    nodes.push_back(t.node());
    widths.push_back(t.dim(1));
  }
  return make_result({n, total, h, w}, std::move(out), parts, [=](Node& o) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      accumulate(nodes[k], [&](auto& g) {
        const std::size_t block = widths[k] * hw;
        for (int b = 0; b < n; ++b) {
          const Real* src = o.grad.data() + (static_cast<std::size_t>(b) * total + offsets[k]) * hw;
          Real* dst = g.data() + b * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      });
    }
  });
}

Tensor slice_channels(const Tensor& x, int start, int count) {
  require_rank4(x, "slice_channels");
  const int n = x.dim(0), c = x.dim(1);
  require(start >= 0 && count >= 1 && start + count <= c, "slice_channels: range out of bounds");
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<Real> out(static_cast<std::size_t>(n) * count * hw);
  for (int b = 0; b < n; ++b) {
    std::copy_n(x.data().data() + (static_cast<std::size_t>(b) * c + start) * hw, count * hw,
                out.data() + static_cast<std::size_t>(b) * count * hw);
  }
  auto px = x.node();
  return make_result({n, count, x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      for (int b = 0; b < n; ++b) {
        Real* dst = g.data() + (static_cast<std::size_t>(b) * c + start) * hw;
        const Real* src = o.grad.data() + static_cast<std::size_t>(b) * count * hw;
        for (std::size_t i = 0; i < count * hw; ++i) dst[i] += src[i];
      }
    });
  });
}

Tensor softmax_axis(const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.rank(), "softmax_axis: invalid axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int len = x.dim(axis);
  std::vector<Real> out(x.numel());
  const Real* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = src[base];
      for (int k = 1; k < len; ++k) mx = std::max(mx, src[base + k * inner]);
      Real total = 0;
      for (int k = 0; k < len; ++k) {
        const Real e = std::exp(src[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (int k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  auto px = x.node();
  return make_result(x.shape(), std::move(out), {x}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = ou * len * inner + in;
          Real dot = 0;
          for (int k = 0; k < len; ++k) dot += o.grad[base + k * inner] * o.value[base + k * inner];
          for (int k = 0; k < len; ++k) {
            const std::size_t i = base + k * inner;
            g[i] += o.value[i] * (o.grad[i] - dot);
          }
        }
      }
    });
  });
}

Tensor warp_bilinear(const Tensor& x, const Tensor& flow) {
  require_rank4(x, "warp_bilinear");
  require(flow.rank() == 4 && flow.dim(0) == x.dim(0) && flow.dim(1) == 2 && flow.dim(2) == x.dim(2) &&
              flow.dim(3) == x.dim(3),
          "warp_bilinear: flow must be [N, 2, H, W] matching the input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  struct Tap {
    int x0, x1, y0, y1;
    Real fx, fy;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(n) * hw);
  for (int b = 0; b < n; ++b) {
    const Real* fu = flow.data().data() + static_cast<std::size_t>(b) * 2 * hw;
    const Real* fv = fu + hw;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t i = static_cast<std::size_t>(y) * w + xx;
        const Real sx = std::clamp(static_cast<Real>(xx) + fu[i], Real(0), static_cast<Real>(w - 1));
        const Real sy = std::clamp(static_cast<Real>(y) + fv[i], Real(0), static_cast<Real>(h - 1));
        Tap t;
        t.x0 = static_cast<int>(sx);
        t.y0 = static_cast<int>(sy);
        t.x1 = std::min(t.x0 + 1, w - 1);
        t.y1 = std::min(t.y0 + 1, h - 1);
        t.fx = sx - t.x0;
        t.fy = sy - t.y0;
        taps[static_cast<std::size_t>(b) * hw + i] = t;
      }
    }
  }
  std::vector<Real> out(x.numel());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = x.data().data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      Real* dst = out.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const Tap& t = taps[static_cast<std::size_t>(b) * hw + i];
        const Real top = src[static_cast<std::size_t>(t.y0) * w + t.x0] * (1 - t.fx) +
                         src[static_cast<std::size_t>(t.y0) * w + t.x1] * t.fx;
        const Real bot = src[static_cast<std::size_t>(t.y1) * w + t.x0] * (1 - t.fx) +
                         src[static_cast<std::size_t>(t.y1) * w + t.x1] * t.fx;
        dst[i] = top * (1 - t.fy) + bot * t.fy;
      }
    }
  }
  auto px = x.node();
  return make_result(x.shape(), std::move(out), {x}, [=, taps = std::move(taps)](Node& o) {
    accumulate(px, [&](auto& g) {
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          Real* dst = g.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
          const Real* go = o.grad.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const Tap& t = taps[static_cast<std::size_t>(b) * hw + i];
            const Real gv = go[i];
            dst[static_cast<std::size_t>(t.y0) * w + t.x0] += gv * (1 - t.fx) * (1 - t.fy);
            dst[static_cast<std::size_t>(t.y0) * w + t.x1] += gv * t.fx * (1 - t.fy);
            dst[static_cast<std::size_t>(t.y1) * w + t.x0] += gv * (1 - t.fx) * t.fy;
            dst[static_cast<std::size_t>(t.y1) * w + t.x1] += gv * t.fx * t.fy;
          }
        }
      }
    });
  });
}

Tensor gram(const Tensor& x) {
  require_rank4(x, "gram");
  const int n = x.dim(0), c = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  std::vector<Real> out(static_cast<std::size_t>(n) * c * c);
  for (int b = 0; b < n; ++b) {
    const Real* f = x.data().data() + static_cast<std::size_t>(b) * c * hw;
    detail::gemm(false, true, c, c, hw, 1, f, hw, f, hw, 0, out.data() + static_cast<std::size_t>(b) * c * c, c);
  }
  auto px = x.node();
  return make_result({n, c, c}, std::move(out), {x}, [=](Node& o) {
    accumulate(px, [&](auto& g) {
      std::vector<Real> sym(static_cast<std::size_t>(c) * c);
      for (int b = 0; b < n; ++b) {
        const Real* go = o.grad.data() + static_cast<std::size_t>(b) * c * c;
        for (int i = 0; i < c; ++i) {
          for (int j = 0; j < c; ++j) sym[static_cast<std::size_t>(i) * c + j] = go[i * c + j] + go[j * c + i];
        }
        const Real* f = px->value.data() + static_cast<std::size_t>(b) * c * hw;
        detail::gemm(false, false, c, hw, c, 1, sym.data(), c, f, hw, 1, g.data() + static_cast<std::size_t>(b) * c * hw, hw);
      }
    });
  });
}

}  // namespace magniflow::nn
