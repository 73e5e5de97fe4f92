#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "magniflow/dmm/convex_upsample.hpp"
#include "magniflow/dmm/hhme.hpp"
#include "magniflow/dmm/model.hpp"
#include "magniflow/dmm/schedule.hpp"
#include "magniflow/dmm/training.hpp"
#include "magniflow/errors.hpp"
#include "magniflow/nn/ops.hpp"

using namespace magniflow;
using namespace magniflow::dmm;
using nn::Real;
using nn::Shape;
using nn::Tensor;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(nn::numel(shape));
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return Tensor::from(shape, std::move(v));
}

// Direct gather over the replicate-padded 3x3 coarse neighborhood.
double gather(const Tensor& coarse, const Tensor& w, int n, int c, int Y, int X) {
  const int h = coarse.dim(2), wd = coarse.dim(3);
  const int y = Y / 8, x = X / 8, sy = Y % 8, sx = X % 8;
  double acc = 0.0;
  for (int k = 0; k < 9; ++k) {
    const int ny = std::clamp(y + k / 3 - 1, 0, h - 1), nx = std::clamp(x + k % 3 - 1, 0, wd - 1);
    const int ch = (c * 9 + k) * 64 + sy * 8 + sx;
    const double weight = w.data()[((static_cast<std::size_t>(n) * 1152 + ch) * h + y) * wd + x];
    acc += weight * coarse.data()[((static_cast<std::size_t>(n) * 2 + c) * h + ny) * wd + nx];
  }
  return acc;
}

double fine_at(const Tensor& t, int n, int c, int Y, int X) {
  return t.data()[((static_cast<std::size_t>(n) * 2 + c) * t.dim(2) + Y) * t.dim(3) + X];
}

DmmConfig tiny_config() {
  DmmConfig c;
  c.widths = {8, 8, 16};
  c.embed_dim = 16;
  c.time_features = 8;
  c.T = 20;
  c.sample_steps = 5;
  return c;
}

}  // namespace

TEST(Hhme, ClosedFormValues) {
  const std::vector<double> zero{0, 1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> full{1, 1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> quarter{0.25, -1, 1, 1, 1, 0, 0, 0, 0};
  const auto check = [](const std::vector<double>& got, const std::vector<double>& want) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6) << i;
  };
  check(hhme_features(0.0), zero);
  check(hhme_features(100.0), full);
  check(hhme_features(25.0), quarter);
}

TEST(Hhme, ClampsOutOfRange) {
  EXPECT_EQ(hhme_features(250.0), hhme_features(100.0));
  EXPECT_EQ(hhme_features(-3.0), hhme_features(0.0));
}

TEST(Hhme, MatchesExtendedPrecision) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(0.0, 100.0);
  for (int i = 0; i < 100; ++i) {
    const double a = d(rng);
    const auto f = hhme_features(a, 4, 100.0);
    const long double n = static_cast<long double>(a) / 100.0L;
    const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
    EXPECT_NEAR(f[0], static_cast<double>(n), 1e-12);
    for (int k = 1; k <= 4; ++k) {
      EXPECT_NEAR(f[k], static_cast<double>(std::cos(two_pi * std::ldexp(1.0L, k) * n)), 1e-6);
      EXPECT_NEAR(f[4 + k], static_cast<double>(std::sin(two_pi * std::ldexp(1.0L, k) * n)), 1e-6);
    }
  }
}

TEST(Schedule, Shape) {
  const auto s = make_schedule(200, "cosine", 32.0);
  EXPECT_LT(s.noise(1), 0.1);
  EXPECT_LT(s.alpha_bar[200], 0.01);
  for (int t = 1; t <= 200; ++t) {
    EXPECT_GT(s.beta[t], 0.0);
    EXPECT_LT(s.beta[t], 1.0);
    EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    if (t > 1) EXPECT_GE(s.beta[t], s.beta[t - 1]);
  }
  EXPECT_THROW(make_schedule(200, "linear"), ContractError);
}

TEST(Schedule, QSampleMoments) {
  const auto s = make_schedule(200);
  const int t = 100;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  const std::vector<Real> x0{0.6f};
  double m = 0, v = 0;
  const int n = 100000;
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) {
    const std::vector<Real> noise{static_cast<Real>(nd(rng))};
    xs.push_back(q_sample(x0, t, noise, s)[0]);
    m += xs.back();
  }
  m /= n;
  for (double x : xs) v += (x - s.signal(t) * 0.6) * (x - s.signal(t) * 0.6);
  v /= n;
  EXPECT_NEAR(m, s.signal(t) * 0.6, 0.02 * s.signal(t) * 0.6);
  EXPECT_NEAR(v, 1 - s.alpha_bar[t], 0.02 * (1 - s.alpha_bar[t]) + 3 * std::sqrt(2.0 / n) * (1 - s.alpha_bar[t]));
}

TEST(Schedule, InversionRecoversX0) {
  const auto s = make_schedule(200);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<Real> x0(64), noise(64);
  for (auto& x : x0) x = static_cast<Real>(0.5 * nd(rng));
  for (auto& x : noise) x = static_cast<Real>(nd(rng));
  for (int t : {1, 50, 150, 200}) {
    const auto xt = q_sample(x0, t, noise, s);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      EXPECT_NEAR((xt[i] - s.noise(t) * noise[i]) / s.signal(t), x0[i], 1e-5 / s.signal(t));
    }
  }
  EXPECT_THROW(q_sample(x0, 0, noise, s), ContractError);
  EXPECT_THROW(q_sample(x0, 201, noise, s), ContractError);
}

TEST(Schedule, DdimTimesteps) {
  const auto ts = ddim_timesteps(200, 50);
  ASSERT_EQ(ts.size(), 50u);
  EXPECT_EQ(ts.front(), 200);
  EXPECT_EQ(ts.back(), 4);
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  EXPECT_THROW(ddim_timesteps(10, 11), ContractError);
}

TEST(ConvexUpsample, UniformWeightsKeepConstant) {
  const auto coarse = Tensor::full({1, 2, 2, 3}, 0.4f);
  const auto w = Tensor::full({1, 1152, 2, 3}, 1.0f / 9);
  const auto y = convex_upsample(coarse, w);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 16, 24}));
  for (Real e : y.data()) EXPECT_NEAR(e, 0.4f, 1e-6);
}

TEST(ConvexUpsample, OneHotCenterReplicates) {
  const auto coarse = random_tensor({2, 2, 3, 2}, 1);
  std::vector<Real> w(2 * 1152 * 6, 0);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int s = 0; s < 64; ++s)
        for (int p = 0; p < 6; ++p) w[(static_cast<std::size_t>(n) * 1152 + (c * 9 + 4) * 64 + s) * 6 + p] = 1;
  const auto y = convex_upsample(coarse, Tensor::from({2, 1152, 3, 2}, w));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int Y = 0; Y < 24; ++Y)
        for (int X = 0; X < 16; ++X) {
          EXPECT_EQ(fine_at(y, n, c, Y, X), coarse.data()[((n * 2 + c) * 3 + Y / 8) * 2 + X / 8]);
        }
}

TEST(ConvexUpsample, MatchesGatherOracle) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto coarse = random_tensor({1, 2, 2, 2}, 10 + s, -3, 3);
    const auto w = normalize_mask(random_tensor({1, 1152, 2, 2}, 20 + s, -4, 4));
    const auto y = convex_upsample(coarse, w);
    for (int c = 0; c < 2; ++c)
      for (int Y = 0; Y < 16; ++Y)
        for (int X = 0; X < 16; ++X) EXPECT_NEAR(fine_at(y, 0, c, Y, X), gather(coarse, w, 0, c, Y, X), 1e-6);
  }
}

TEST(ConvexUpsample, ConvexityBound) {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto coarse = random_tensor({1, 2, 2, 2}, 1000 + s, -5, 5);
    const auto w = normalize_mask(random_tensor({1, 1152, 2, 2}, 3000 + s, -6, 6));
    const auto y = convex_upsample(coarse, w);
    for (int c = 0; c < 2; ++c)
      for (int Y = 0; Y < 16; ++Y)
        for (int X = 0; X < 16; ++X) {
          double lo = 1e30, hi = -1e30;
          for (int k = 0; k < 9; ++k) {
            const int ny = std::clamp(Y / 8 + k / 3 - 1, 0, 1), nx = std::clamp(X / 8 + k % 3 - 1, 0, 1);
            const double v = coarse.data()[(c * 2 + ny) * 2 + nx];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
          const double f = fine_at(y, 0, c, Y, X);
          ASSERT_GE(f, lo - 1e-5);
          ASSERT_LE(f, hi + 1e-5);
        }
  }
}

TEST(ConvexUpsample, UnnormalizedWeightsRejected) {
  const auto coarse = Tensor::full({1, 2, 1, 1}, 1.0f);
  EXPECT_THROW(convex_upsample(coarse, Tensor::full({1, 1152, 1, 1}, 0.2f)), ContractError);
}

TEST(Sampler, OracleDenoiserFixedPoint) {
  const auto s = make_schedule(200);
  const auto g = random_tensor({1, 2, 8, 8}, 5);
  const Denoiser oracle = [&](const Tensor&, int) { return g; };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = ddim_sample(oracle, g.shape(), s, 50, {seed});
    for (std::size_t i = 0; i < g.numel(); ++i) EXPECT_NEAR(out.data()[i], g.data()[i], 1e-5);
  }
}

TEST(Sampler, SameSeedIsBitIdentical) {
  const auto cfg = tiny_config();
  MagnifierModel model(cfg, 3);
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  const auto cond = nofa::generate_sample(nofa::NofaConfig{}, 1).conditional;
  const auto a = sample_magnified_flow(model, cond, 20.0, s, 5, 9);
  const auto b = sample_magnified_flow(model, cond, 20.0, s, 5, 9);
  EXPECT_EQ(a, b);
  const auto c = sample_magnified_flow(model, cond, 20.0, s, 5, 10);
  EXPECT_NE(a, c);
}

TEST(Denoiser, ShapeContract) {
  const auto cfg = tiny_config();
  MagnifierModel model(cfg, 1);
  for (auto [h, w] : {std::pair{32, 32}, {64, 64}, {64, 96}}) {
    const auto x = random_tensor({1, 2, h, w}, 2), c = random_tensor({1, 2, h, w}, 3);
    const auto y = denoiser_forward(model, x, c, {10.0}, {5});
    EXPECT_EQ(y.shape(), (Shape{1, 2, h, w}));
  }
  EXPECT_THROW(denoiser_forward(model, random_tensor({1, 2, 30, 32}, 2), random_tensor({1, 2, 30, 32}, 3), {1.0}, {1}),
               ContractError);
}

TEST(Denoiser, AlphaReachesOutput) {
  const auto cfg = tiny_config();
  MagnifierModel model(cfg, 1);
  const auto x = random_tensor({1, 2, 16, 16}, 4), c = random_tensor({1, 2, 16, 16}, 5);
  const auto a = denoiser_forward(model, x, c, {10.0}, {5});
  const auto b = denoiser_forward(model, x, c, {90.0}, {5});
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(double(a.data()[i]) - b.data()[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(Denoiser, SeededConstructionIsDeterministic) {
  const auto cfg = tiny_config();
  MagnifierModel m1(cfg, 11), m2(cfg, 11);
  const auto x = random_tensor({2, 2, 16, 16}, 4), c = random_tensor({2, 2, 16, 16}, 5);
  const auto a = denoiser_forward(m1, x, c, {10.0, 50.0}, {5, 17});
  const auto b = denoiser_forward(m2, x, c, {10.0, 50.0}, {5, 17});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Denoiser, ConfigJsonRoundtrip) {
  const auto cfg = tiny_config();
  const auto back = DmmConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.widths, cfg.widths);
  EXPECT_EQ(back.T, cfg.T);
  EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(TrainStep, ZeroTargetConverges) {
  DmmConfig cfg;
  MagnifierModel model(cfg, 21);
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  const nofa::NofaConfig nc;
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    Rng rng(derive_seed(4, step));
    DmmBatch b;
    for (int k = 0; k < 4; ++k) {
      const auto smp = nofa::generate_sample(nc, derive_seed(5, step * 4 + k));
      b.conditional.push_back(smp.conditional);
      b.target.push_back(FlowField(nc.width, nc.height));
      b.alpha.push_back(smp.alpha);
    }
    losses.push_back(dmm_train_step(model, b, s, nn::AdamWOptions{}, rng).loss);
  }
  // Window-50 means must fall from window to window.
  std::vector<double> smooth;
  for (int w = 0; w < 10; ++w) {
    double m = 0;
    for (int i = 0; i < 50; ++i) m += losses[w * 50 + i];
    smooth.push_back(m / 50);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LT(smooth[i], smooth[i - 1]) << "window " << i;
  EXPECT_LT(smooth.back(), 0.25 * losses.front());
}

TEST(TrainStep, OverfitsOneBatch) {
  DmmConfig cfg;
  MagnifierModel model(cfg, 22);
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  DmmBatch b;
  for (int k = 0; k < 4; ++k) {
    const auto smp = nofa::generate_sample(nofa::NofaConfig{}, k);
    b.conditional.push_back(smp.conditional);
    b.target.push_back(smp.target);
    b.alpha.push_back(smp.alpha);
  }
  // Fixed noise and timesteps make the batch truly identical across steps.
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    Rng rng(7);
    losses.push_back(dmm_train_step(model, b, s, nn::AdamWOptions{}, rng).loss);
  }
  EXPECT_LT(losses.back(), losses.front());
}

TEST(TrainStep, GradientReachesEveryParameter) {
  DmmConfig cfg;
  MagnifierModel model(cfg, 23);
  std::vector<std::vector<Real>> before;
  for (const auto& p : model.params().params) before.emplace_back(p.data().begin(), p.data().end());
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  DmmBatch b;
  for (int k = 0; k < 4; ++k) {
    const auto smp = nofa::generate_sample(nofa::NofaConfig{}, 100 + k);
    b.conditional.push_back(smp.conditional);
    b.target.push_back(smp.target);
    b.alpha.push_back(smp.alpha);
  }
  Rng rng(1);
  dmm_train_step(model, b, s, nn::AdamWOptions{}, rng);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto now = model.params().params[i].data();
    EXPECT_FALSE(std::equal(now.begin(), now.end(), before[i].begin())) << model.params().names[i];
  }
}

TEST(TrainStep, NonFiniteLossAborts) {
  const auto cfg = tiny_config();
  MagnifierModel model(cfg, 2);
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  DmmBatch b;
  b.conditional.push_back(FlowField(16, 16));
  b.target.push_back(FlowField(16, 16));
  b.alpha.push_back(1.0);
  model.params().params[0].mutable_data()[0] = std::numeric_limits<Real>::quiet_NaN();
  Rng rng(1);
  EXPECT_THROW(dmm_train_step(model, b, s, nn::AdamWOptions{}, rng), NonFiniteLossError);
}

TEST(Training, ResumeContinuesIdentically) {
  const auto cfg = tiny_config();
  nofa::NofaConfig nc;
  nc.width = nc.height = 16;
  const auto corpus = synthetic_corpus(12, nc, 3);
  const auto s = make_schedule(cfg.T, "cosine", cfg.f_max);
  DmmTrainOptions o;
  o.steps = 6;
  o.batch = 2;
  o.seed = 5;
  MagnifierModel full(cfg, 1);
  train_dmm(full, corpus, s, o);

  MagnifierModel part(cfg, 1);
  o.steps = 3;
  train_dmm(part, corpus, s, o);
  o.steps = 6;
  train_dmm(part, corpus, s, o);
  ASSERT_EQ(part.params().step, 6);
  for (std::size_t i = 0; i < full.params().size(); ++i) {
    const auto a = full.params().params[i].data(), b = part.params().params[i].data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << full.params().names[i];
  }
}

TEST(Training, LearningRateSchedule) {
  DmmTrainOptions o;
  o.steps = 100;
  o.cosine_decay = true;
  EXPECT_DOUBLE_EQ(learning_rate_at(o, 0), o.adam.lr);
  EXPECT_NEAR(learning_rate_at(o, 100), o.adam.lr * o.lr_floor, 1e-12);
  o.cosine_decay = false;
  EXPECT_DOUBLE_EQ(learning_rate_at(o, 77), o.adam.lr);
}

TEST(Flows, TensorRoundtrip) {
  const auto f = nofa::generate_sample(nofa::NofaConfig{}, 3).target;
  const auto t = flows_to_tensor({f, f}, 32.0);
  EXPECT_EQ(t.shape(), (Shape{2, 2, 32, 32}));
  const auto back = tensor_to_flow(t, 1, 32.0);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(back.u()[i], f.u()[i], 1e-5);
}
