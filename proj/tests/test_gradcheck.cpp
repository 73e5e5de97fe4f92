// Central-difference gradient checks. Built against the float64 library.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <iostream>
#include <random>

#include "magniflow/dmm/convex_upsample.hpp"
#include "magniflow/dmm/model.hpp"
#include "magniflow/nn/ops.hpp"

static_assert(sizeof(magniflow::nn::Real) == 8, "gradient checks need the float64 build");

using namespace magniflow;
using namespace magniflow::nn;

namespace {

constexpr double kStep = 1e-5;
constexpr double kPrimitiveTol = 1e-4;
constexpr double kModelTol = 1e-3;

// Values in +-[0.1, 1] so that |x| and similar stay away from their kinks.
std::vector<Real> random_values(std::size_t n, std::mt19937_64& rng, double lo = 0.1, double hi = 1.0) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<Real> v(n);
  for (auto& x : v) x = (sign(rng) ? 1 : -1) * mag(rng);
  return v;
}

Tensor param(const Shape& s, std::mt19937_64& rng) { return Tensor::parameter(s, random_values(numel(s), rng)); }

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, floor) for
// one input. The floor covers inputs the output does not depend on, where
// both sides are rounding noise.
double relative_error(std::span<const Real> a, const std::vector<double>& n) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double ai = a.empty() ? 0.0 : a[i];
    diff += (ai - n[i]) * (ai - n[i]);
    na += ai * ai;
    nn += n[i] * n[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-4});
  return std::sqrt(diff) / denom;
}

// The scalar is <f(inputs), R> for a fixed random R, so every output entry
// contributes with a distinct weight.
double worst_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor probe;
  {
    NoGradGuard g;
    const Tensor out = f(inputs);
    probe = Tensor::from(out.shape(), random_values(out.numel(), rng, 0.5, 1.5));
  }
  auto objective = [&]() { return sum(mul(f(inputs), probe)); };
  for (auto& t : inputs) t.zero_grad();
  backward(objective());
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> num(t.numel());
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      NoGradGuard g;
      const Real keep = d[i];
      d[i] = keep + kStep;
      const double up = objective().item();
      d[i] = keep - kStep;
      const double down = objective().item();
      d[i] = keep;
      num[i] = (up - down) / (2 * kStep);
    }
    worst = std::max(worst, relative_error(t.grad(), num));
  }
  return worst;
}

Shape random_nchw(std::mt19937_64& rng, int cmin = 1, int cmax = 4) {
  return {pick(rng, 1, 2), pick(rng, cmin, cmax), pick(rng, 2, 5), pick(rng, 2, 5)};
}

using Case = std::function<double(std::mt19937_64&, std::uint64_t)>;

void run_cases(const char* name, const Case& c) {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    std::mt19937_64 rng(1000 + k);
    const double e = c(rng, 2000 + k);
    worst = std::max(worst, e);
    EXPECT_LE(e, kPrimitiveTol) << name << " case " << k;
  }
  std::cout << "gradcheck " << name << " worst relative error " << worst << '\n';
}

}  // namespace

TEST(GradCheck, Elementwise) {
  run_cases("add", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    return worst_error([](const auto& in) { return add(in[0], in[1]); }, {param(sh, rng), param(sh, rng)}, s);
  });
  run_cases("sub", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    return worst_error([](const auto& in) { return sub(in[0], in[1]); }, {param(sh, rng), param(sh, rng)}, s);
  });
  run_cases("mul", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    return worst_error([](const auto& in) { return mul(in[0], in[1]); }, {param(sh, rng), param(sh, rng)}, s);
  });
  run_cases("scale", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return scale(in[0], -1.7); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("add_scalar", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return add_scalar(in[0], 0.3); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("square", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return square(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("silu", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return silu(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("sigmoid", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return sigmoid(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
}

TEST(GradCheck, Reductions) {
  run_cases("sum", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return sum(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("mean", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return mean(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("mean_abs", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return mean_abs(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
  run_cases("reshape", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    const Shape flat{static_cast<int>(numel(sh))};
    return worst_error([flat](const auto& in) { return reshape(in[0], flat); }, {param(sh, rng)}, s);
  });
}

TEST(GradCheck, LinearMaps) {
  run_cases("add_channel_bias", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    return worst_error([](const auto& in) { return add_channel_bias(in[0], in[1]); },
                       {param(sh, rng), param({sh[0], sh[1]}, rng)}, s);
  });
  run_cases("linear", [](auto& rng, auto s) {
    const int n = pick(rng, 1, 3), i = pick(rng, 1, 6), o = pick(rng, 1, 6);
    return worst_error([](const auto& in) { return linear(in[0], in[1], in[2]); },
                       {param({n, i}, rng), param({o, i}, rng), param({o}, rng)}, s);
  });
  run_cases("conv2d", [](auto& rng, auto s) {
    const int k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
    const Shape x{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, k + 1, 6), pick(rng, k + 1, 6)};
    const int cout = pick(rng, 1, 3);
    return worst_error([=](const auto& in) { return conv2d(in[0], in[1], in[2], stride, pad); },
                       {param(x, rng), param({cout, x[1], k, k}, rng), param({cout}, rng)}, s);
  });
  run_cases("gram", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return gram(in[0]); }, {param(random_nchw(rng), rng)}, s);
  });
}

TEST(GradCheck, Normalization) {
  run_cases("group_norm", [](auto& rng, auto s) {
    const int groups = pick(rng, 1, 2), per = pick(rng, 1, 3);
    const Shape x{pick(rng, 1, 2), groups * per, pick(rng, 2, 4), pick(rng, 2, 4)};
    return worst_error([groups](const auto& in) { return group_norm(in[0], groups, in[1], in[2]); },
                       {param(x, rng), param({x[1]}, rng), param({x[1]}, rng)}, s);
  });
  run_cases("softmax_axis", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng, 2, 4);
    const int axis = pick(rng, 1, 3);
    return worst_error([axis](const auto& in) { return softmax_axis(in[0], axis); }, {param(sh, rng)}, s);
  });
}

TEST(GradCheck, Resampling) {
  run_cases("resample2x_up", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return resample2x(in[0], Resample::kUp); },
                       {param(random_nchw(rng), rng)}, s);
  });
  run_cases("resample2x_down", [](auto& rng, auto s) {
    const Shape sh{pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3)};
    return worst_error([](const auto& in) { return resample2x(in[0], Resample::kDown); }, {param(sh, rng)}, s);
  });
  run_cases("resize_bilinear", [](auto& rng, auto s) {
    const int oh = pick(rng, 1, 7), ow = pick(rng, 1, 7);
    return worst_error([=](const auto& in) { return resize_bilinear(in[0], oh, ow); },
                       {param(random_nchw(rng), rng)}, s);
  });
  run_cases("warp_bilinear", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng);
    // Flow is a constant input; keep sample points off the integer grid.
    std::vector<Real> fl(static_cast<std::size_t>(sh[0]) * 2 * sh[2] * sh[3]);
    std::uniform_real_distribution<double> frac(0.2, 0.8);
    for (auto& v : fl) v = pick(rng, -2, 1) + frac(rng);
    const auto flow = Tensor::from({sh[0], 2, sh[2], sh[3]}, fl);
    return worst_error([flow](const auto& in) { return warp_bilinear(in[0], flow); }, {param(sh, rng)}, s);
  });
  run_cases("concat_channels", [](auto& rng, auto s) {
    const auto a = random_nchw(rng);
    Shape b = a;
    b[1] = pick(rng, 1, 3);
    return worst_error([](const auto& in) { return concat_channels({in[0], in[1]}); },
                       {param(a, rng), param(b, rng)}, s);
  });
  run_cases("slice_channels", [](auto& rng, auto s) {
    const auto sh = random_nchw(rng, 2, 5);
    const int start = pick(rng, 0, sh[1] - 1), count = pick(rng, 1, sh[1] - start);
    return worst_error([=](const auto& in) { return slice_channels(in[0], start, count); }, {param(sh, rng)}, s);
  });
}

TEST(GradCheck, ConvexUpsample) {
  run_cases("normalize_mask", [](auto& rng, auto s) {
    return worst_error([](const auto& in) { return dmm::normalize_mask(in[0]); },
                       {param({1, dmm::kMaskChannels, 1, pick(rng, 1, 2)}, rng)}, s);
  });
  run_cases("convex_upsample", [](auto& rng, auto s) {
    const int h = pick(rng, 1, 2), w = pick(rng, 1, 2);
    return worst_error(
        [](const auto& in) { return dmm::convex_upsample(in[0], dmm::normalize_mask(in[1])); },
        {param({1, 2, h, w}, rng), param({1, dmm::kMaskChannels, h, w}, rng)}, s);
  });
}

namespace {

double denoiser_error(int size) {
  dmm::DmmConfig cfg;
  cfg.widths = {4, 4, 8};
  cfg.embed_dim = 8;
  cfg.time_features = 8;
  cfg.T = 20;
  cfg.sample_steps = 5;
  dmm::MagnifierModel model(cfg, 5);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 0.3);
  // Replace the initialization so that no parameter sits at zero.
  for (auto& p : model.params().params) {
    for (auto& v : p.mutable_data()) v = nd(rng);
  }
  std::vector<Real> xv(static_cast<std::size_t>(2 * 2 * size * size)), cv(xv.size());
  for (auto& v : xv) v = nd(rng);
  for (auto& v : cv) v = nd(rng);
  const auto x = Tensor::from({2, 2, size, size}, xv), cond = Tensor::from({2, 2, size, size}, cv);
  const std::vector<double> alpha{7.0, 40.0};
  const std::vector<int> t{3, 15};

  Tensor probe;
  {
    NoGradGuard g;
    const auto out = model.forward(x, cond, alpha, t);
    probe = Tensor::from(out.shape(), random_values(out.numel(), rng, 0.5, 1.5));
  }
  auto objective = [&]() { return sum(mul(model.forward(x, cond, alpha, t), probe)); };
  model.params().zero_grad();
  backward(objective());

  double worst = 0.0;
  auto& ps = model.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto d = ps.params[k].mutable_data();
    std::vector<double> num(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      NoGradGuard g;
      const Real keep = d[i];
      d[i] = keep + kStep;
      const double up = objective().item();
      d[i] = keep - kStep;
      const double down = objective().item();
      d[i] = keep;
      num[i] = (up - down) / (2 * kStep);
    }
    const double e = relative_error(ps.params[k].grad(), num);
    EXPECT_LE(e, kModelTol) << ps.names[k] << " at " << size << "x" << size;
    worst = std::max(worst, e);
  }
  std::cout << "gradcheck denoiser " << size << "x" << size << " worst relative error " << worst << " over "
            << ps.size() << " tensors\n";
  return worst;
}

}  // namespace

TEST(GradCheck, TinyDenoiserEndToEnd) { denoiser_error(8); }

// At 8x8 the latent is a single cell and the upsampling mask has no effect;
// 16x16 exercises the mask path too.
TEST(GradCheck, DenoiserWithMaskPath) { denoiser_error(16); }
