#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "magniflow/errors.hpp"
#include "magniflow/flow/io.hpp"
#include "magniflow/flow/metrics.hpp"
#include "magniflow/flow/pyrlk.hpp"
#include "magniflow/nofa/nofa.hpp"
#include "magniflow/nofa/scene.hpp"
#include "support.hpp"

using namespace magniflow;
using namespace magniflow::nofa;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

RegionSpec disc(double cx, double cy, double r) {
  RegionSpec s;
  s.cx = cx;
  s.cy = cy;
  s.scale = r;
  return s;
}

double total_variation(const FlowField& f) {
  double tv = 0.0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x + 1 < f.width(); ++x) {
      tv += std::abs(f.at(x + 1, y).u - f.at(x, y).u) + std::abs(f.at(x + 1, y).v - f.at(x, y).v);
    }
  for (int y = 0; y + 1 < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      tv += std::abs(f.at(x, y + 1).u - f.at(x, y).u) + std::abs(f.at(x, y + 1).v - f.at(x, y).v);
    }
  return tv;
}

}  // namespace

TEST(Masks, EllipseWithEqualAxesIsDisc) {
  const double r = 6.0;
  const auto m = generate_mask(disc(15.3, 14.6, r), 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double d = std::hypot(x - 15.3, y - 14.6);
      if (d < r - 0.5) EXPECT_TRUE(m.at(x, y)) << x << "," << y;
      if (d > r + 0.5) EXPECT_FALSE(m.at(x, y)) << x << "," << y;
    }
}

TEST(Masks, SpotRadiusOne) {
  RegionSpec s = disc(10.4, 9.7, 1.0);
  s.shape = ShapeKind::kSpot;
  const auto m = generate_mask(s, 20, 20);
  EXPECT_LE(m.area(), 9u);
  EXPECT_TRUE(m.at(10, 10));
}

TEST(Masks, AxisAlignedSquarePolygon) {
  for (int side : {16, 20, 24}) {
    RegionSpec s = disc(31.5, 31.5, side / std::sqrt(2.0));
    s.shape = ShapeKind::kPolygon;
    s.vertices = 4;
    s.smoothness = 0.0;
    s.orientation = std::numbers::pi / 4;
    const auto m = generate_mask(s, 64, 64);
    // Point-in-square oracle over pixel centers.
    std::size_t inside = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) inside += std::abs(x - 31.5) <= side / 2.0 && std::abs(y - 31.5) <= side / 2.0;
    EXPECT_NEAR(static_cast<double>(m.area()), side * side, 0.05 * side * side);
    EXPECT_NEAR(static_cast<double>(m.area()), static_cast<double>(inside), 0.05 * side * side);
  }
}

TEST(Masks, RandomShapesAreConnectedAndContainCenter) {
  Rng rng(5);
  for (int i = 0; i < 400; ++i) {
    RegionSpec s;
    s.shape = static_cast<ShapeKind>(i % 4);
    s.cx = uniform(rng, 0, 31);
    s.cy = uniform(rng, 0, 31);
    s.scale = uniform(rng, 1, 12);
    s.aspect = uniform(rng, 0.3, 1.0);
    s.orientation = uniform(rng, 0, std::numbers::pi);
    s.vertices = uniform_int(rng, 3, 8);
    s.smoothness = uniform(rng, 0, 0.15);
    s.shape_seed = rng();
    const auto m = generate_mask(s, 32, 32);
    EXPECT_GT(m.area(), 0u);
    EXPECT_TRUE(is_four_connected(m));
    EXPECT_TRUE(m.at(static_cast<int>(std::lround(s.cx)), static_cast<int>(std::lround(s.cy))));
  }
}

TEST(Masks, CenterOutsideFieldIsEmptyMaskError) {
  EXPECT_THROW(generate_mask(disc(-5, 4, 2), 16, 16), EmptyMaskError);
}

TEST(Directions, ExhaustiveDraw) {
  const auto th = sample_directions(4, 4, 9);
  std::set<int> seg;
  for (double t : th) seg.insert(static_cast<int>(std::floor(t * 4 / kTwoPi)));
  EXPECT_EQ(seg, (std::set<int>{0, 1, 2, 3}));
}

TEST(Directions, DistinctSegmentsAndRange) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto th = sample_directions(5, 36, s);
    std::set<int> seg;
    for (double t : th) {
      EXPECT_GE(t, 0.0);
      EXPECT_LT(t, kTwoPi);
      seg.insert(static_cast<int>(std::floor(t * 36 / kTwoPi)));
    }
    EXPECT_EQ(seg.size(), 5u);
  }
}

TEST(Directions, Determinism) {
  EXPECT_EQ(sample_directions(5, 36, 42), sample_directions(5, 36, 42));
  int differing = 0;
  for (std::uint64_t s = 0; s < 100; ++s) differing += sample_directions(5, 36, s) != sample_directions(5, 36, s + 1000);
  EXPECT_EQ(differing, 100);
  EXPECT_THROW(sample_directions(6, 5, 1), ContractError);
}

TEST(Compose, FullFieldMask) {
  RegionSpec r = disc(8, 8, 100);
  r.magnitude = 0.2;
  r.direction = 0.0;
  auto c = compose_conditional_flow({r}, 16, 16);
  for (std::size_t i = 0; i < c.flow.size(); ++i) {
    EXPECT_EQ(c.flow.u()[i], 0.2f);
    EXPECT_EQ(c.flow.v()[i], 0.0f);
  }
  r.direction = std::numbers::pi / 2;
  c = compose_conditional_flow({r}, 16, 16);
  EXPECT_NEAR(c.flow.at(3, 3).u, 0.0f, 1e-8);
  EXPECT_EQ(c.flow.at(3, 3).v, 0.2f);
}

TEST(Compose, LastRegionWinsOnOverlap) {
  RegionSpec a = disc(10, 10, 5), b = disc(14, 10, 5);
  a.magnitude = 0.1;
  b.magnitude = 0.25;
  b.direction = std::numbers::pi;
  const auto c = compose_conditional_flow({a, b}, 24, 20);
  const auto ma = generate_mask(a, 24, 20), mb = generate_mask(b, 24, 20);
  int overlap = 0;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) {
      const auto f = c.flow.at(x, y);
      if (mb.at(x, y)) {
        overlap += ma.at(x, y);
        EXPECT_EQ(f.u, static_cast<float>(0.25 * std::cos(std::numbers::pi)));
      } else if (ma.at(x, y)) {
        EXPECT_EQ(f.u, 0.1f);
      } else {
        EXPECT_EQ(f.u, 0.0f);
        EXPECT_FALSE(c.union_mask.at(x, y));
      }
    }
  EXPECT_GT(overlap, 0);
}

TEST(TargetFlow, ScalesInsideMaskOnly) {
  FlowField cond(4, 1);
  for (int x = 0; x < 4; ++x) cond.set(x, 0, {0.2f, 0.01f * x});
  Mask m{4, 1, {1, 0, 1, 0}};
  auto t = make_target_flow(cond, m, 10.0);
  EXPECT_FLOAT_EQ(t.at(0, 0).u, 2.0f);
  EXPECT_EQ(t.at(1, 0).u, 0.0f);
  EXPECT_EQ(t.at(1, 0).v, 0.0f);
  t = make_target_flow(cond, m, 0.0);
  for (float x : t.u()) EXPECT_EQ(x, 0.0f);
  t = make_target_flow(cond, m, 1.0);
  EXPECT_EQ(t.at(2, 0).u, cond.at(2, 0).u);
  EXPECT_EQ(t.at(2, 0).v, cond.at(2, 0).v);
  EXPECT_EQ(t.at(3, 0).v, 0.0f);
}

TEST(Noise, MagnitudesRefitToModel) {
  Rng rng(17);
  const auto mags = sample_noise_magnitudes(100000, NoiseModel{}, rng);
  const auto fit = fit_lognormal_mle(mags);
  EXPECT_NEAR(fit.mu, -4.303, 0.02);
  EXPECT_NEAR(fit.sigma, 0.527, 0.02);
}

TEST(Noise, UnblurredFieldHasUniformDirections) {
  NoiseModel m;
  m.blur_sigma = 0.0;
  const auto f = generate_noise_flow(256, 256, m, 23);
  std::vector<long> bins(36, 0);
  std::vector<double> mags;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double a = std::atan2(f.v()[i], f.u()[i]);
    if (a < 0) a += kTwoPi;
    ++bins[std::min(35, static_cast<int>(a * 36 / kTwoPi))];
    mags.push_back(std::hypot(f.u()[i], f.v()[i]));
  }
  EXPECT_GT(testing_support::chi_square_p(bins), 0.01);
  const auto fit = fit_lognormal_mle(mags);
  EXPECT_NEAR(fit.mu, -4.303, 0.02);
  EXPECT_NEAR(fit.sigma, 0.527, 0.02);
}

TEST(Noise, BlurReducesTotalVariation) {
  NoiseModel raw;
  raw.blur_sigma = 0.0;
  const auto a = generate_noise_flow(48, 48, raw, 3);
  const auto b = generate_noise_flow(48, 48, NoiseModel{}, 3);
  EXPECT_LT(total_variation(b), total_variation(a));
}

TEST(LogNormalFit, ClosedForms) {
  auto f = fit_lognormal_mle(std::vector<double>(10, std::exp(-4.303)));
  EXPECT_NEAR(f.mu, -4.303, 1e-12);
  EXPECT_NEAR(f.sigma, 0.0, 1e-7);
  f = fit_lognormal_mle({1.0, std::exp(2.0)});
  EXPECT_NEAR(f.mu, 1.0, 1e-12);
  EXPECT_NEAR(f.sigma, 1.0, 1e-12);
  EXPECT_THROW(fit_lognormal_mle({1.0, 0.0}), ContractError);
  EXPECT_THROW(fit_lognormal_mle({1.0, -2.0}), ContractError);
}

TEST(LogNormalFit, MillionDraws) {
  Rng rng(99);
  std::lognormal_distribution<double> d(-4.303, 0.527);
  std::vector<double> xs(1000000);
  for (auto& x : xs) x = d(rng);
  const auto f = fit_lognormal_mle(xs);
  EXPECT_NEAR(f.mu, -4.303, 0.01);
  EXPECT_NEAR(f.sigma, 0.527, 0.01);
}

TEST(PhotonNoise, ZeroImageAndZeroStrength) {
  const auto zero = ImageBuffer(8, 8, 3);
  EXPECT_EQ(simulate_photon_noise(zero, 1.0, 1), zero);
  const auto img = testing_support::random_image(8, 8, 3, 4);
  EXPECT_EQ(simulate_photon_noise(img, 0.0, 1), img);
}

TEST(PhotonNoise, VarianceMatchesIntensity) {
  // The clamp to [0,1] cuts both tails, so sigma is read from the 60%-90%
  // quantile spread, which lies strictly between the clamp points.
  const auto img = ImageBuffer::filled(1000, 100, 1, 0.25f);
  const auto out = simulate_photon_noise(img, 1.0, 8);
  std::vector<float> xs(out.data().begin(), out.data().end());
  std::sort(xs.begin(), xs.end());
  const double q60 = xs[static_cast<std::size_t>(0.6 * xs.size())];
  const double q90 = xs[static_cast<std::size_t>(0.9 * xs.size())];
  boost::math::normal z;
  const double sigma = (q90 - q60) / (boost::math::quantile(z, 0.9) - boost::math::quantile(z, 0.6));
  EXPECT_NEAR(sigma * sigma, 0.25, 0.05 * 0.25);
}

TEST(Samples, TargetIsExactlyMaskedScaledConditional) {
  const NofaConfig cfg;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto smp = generate_sample(cfg, s);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const auto c = smp.conditional.at(x, y), t = smp.target.at(x, y);
        if (smp.union_mask.at(x, y)) {
          EXPECT_EQ(t.u, static_cast<float>(smp.alpha) * c.u);
          EXPECT_EQ(t.v, static_cast<float>(smp.alpha) * c.v);
        } else {
          EXPECT_EQ(t.u, 0.0f);
          EXPECT_EQ(t.v, 0.0f);
        }
      }
    for (const auto& r : smp.regions) {
      EXPECT_GE(r.magnitude, 0.0);
      EXPECT_LE(r.magnitude, 0.3);
    }
  }
}

TEST(Samples, CoverageStaysWithinBound) {
  const NofaConfig cfg;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const double c = generate_sample(cfg, derive_seed(5, s)).coverage();
    ASSERT_GT(c, 0.0);
    ASSERT_LE(c, 0.5);
  }
}

TEST(Samples, AlphaIsUniform) {
  const NofaConfig cfg;
  std::vector<double> alphas;
  for (std::uint64_t s = 0; s < 10000; ++s) alphas.push_back(generate_sample(cfg, derive_seed(6, s)).alpha);
  EXPECT_GT(testing_support::ks_uniform_p(alphas, 0.0, 100.0), 0.01);
}

TEST(Dataset, DeterministicAndWorkerIndependent) {
  testing_support::TempDir a("ds_a"), b("ds_b");
  NofaConfig cfg;
  const auto ma = generate_dataset(10, cfg, 77, a.path(), 1);
  const auto mb = generate_dataset(10, cfg, 77, b.path(), 3);
  ASSERT_EQ(ma.entries.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(read_file(a.path() / ma.entries[i].conditional), read_file(b.path() / mb.entries[i].conditional));
    EXPECT_EQ(read_file(a.path() / ma.entries[i].target), read_file(b.path() / mb.entries[i].target));
    const auto smp = generate_sample(cfg, ma.entries[i].seed);
    EXPECT_EQ(read_flo(a.path() / ma.entries[i].target), smp.target);
  }
  EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));

  const auto back = read_manifest(a / "manifest.json");
  EXPECT_EQ(back.master_seed, 77u);
  ASSERT_EQ(back.entries.size(), 10u);
  EXPECT_EQ(back.entries[3].alpha, ma.entries[3].alpha);
  EXPECT_EQ(back.entries[3].regions.size(), 5u);
}

TEST(Dataset, UnwritableDirectoryIsIoError) {
  testing_support::TempDir a("ds_bad");
  write_file(a / "file", std::vector<unsigned char>{1});
  EXPECT_THROW(generate_dataset(1, NofaConfig{}, 1, a / "file" / "sub"), IoError);
}

TEST(Video, ZeroAmplitudeFramesAreIdentical) {
  SceneConfig c;
  c.amplitude = 0.0;
  c.frames = 4;
  const auto v = render_synthetic_video(c);
  for (const auto& f : v.frames) EXPECT_EQ(f, v.frames[0]);
}

TEST(Video, GroundTruthFlowIsAnalytic) {
  SceneConfig c;
  c.frames = 8;
  const auto v = render_synthetic_video(c);
  for (int t = 0; t < c.frames; ++t) {
    const float expect = static_cast<float>(0.3 * std::sin(kTwoPi * t / c.period));
    int inside = 0;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        const auto f = v.flows[t].at(x, y);
        if (v.scene.sprite.coverage(x, y) >= 0.5) {
          ++inside;
          EXPECT_EQ(f.u, expect);
          EXPECT_EQ(f.v, 0.0f);
        } else {
          EXPECT_EQ(f.u, 0.0f);
        }
      }
    EXPECT_GT(inside, 50);
  }
}

TEST(Video, PyrLkRecoversSpriteMotion) {
  SceneConfig c;
  c.amplitude = 2.0;
  c.frames = 6;
  c.direction = 0.6;
  const auto v = render_synthetic_video(c);
  const auto& sp = v.scene.sprite;
  for (int t = 0; t + 1 < c.frames; ++t) {
    const auto f = estimate_flow_pyrlk(v.frames[t], v.frames[t + 1]);
    const double s0 = 2.0 * std::sin(kTwoPi * t / c.period), s1 = 2.0 * std::sin(kTwoPi * (t + 1) / c.period);
    const double du = (s1 - s0) * std::cos(0.6), dv = (s1 - s0) * std::sin(0.6);
    const double ox = s0 * std::cos(0.6), oy = s0 * std::sin(0.6);
    double err = 0.0;
    int n = 0;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        // Interior: at least 4 px inside the displaced ellipse.
        const double ex = (x - sp.cx - ox) / (sp.rx - 4), ey = (y - sp.cy - oy) / (sp.ry - 4);
        if (ex * ex + ey * ey > 1.0) continue;
        err += std::hypot(f.at(x, y).u - du, f.at(x, y).v - dv);
        ++n;
      }
    ASSERT_GT(n, 20);
    EXPECT_LT(err / n, 0.3) << "frame " << t;
  }
}

TEST(Video, TranslationPairFlowMatchesRender) {
  const auto p = make_translation_pair(64, 64, 5, 3.0);
  EXPECT_EQ(p.reference.width(), 64);
  double mx = 0.0;
  for (std::size_t i = 0; i < p.flow.size(); ++i) mx = std::max<double>(mx, std::hypot(p.flow.u()[i], p.flow.v()[i]));
  EXPECT_LE(mx, 3.0 + 1e-6);
}

TEST(Video, RealSamplesAppendToManifest) {
  testing_support::TempDir d("real");
  NofaConfig cfg;
  auto m = generate_dataset(2, cfg, 3, d.path());
  append_real_samples(m, 2, 4, d.path());
  ASSERT_EQ(m.entries.size(), 4u);
  EXPECT_EQ(m.entries[3].source, "real");
  const auto back = read_manifest(d / "manifest.json");
  EXPECT_EQ(back.entries.size(), 4u);
  const auto t = read_flo(d.path() / back.entries[2].target);
  EXPECT_EQ(t.width(), cfg.width);
}
