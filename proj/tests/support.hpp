#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"

namespace testing_support {

using magniflow::FlowField;
using magniflow::ImageBuffer;

inline FlowField random_flow(int w, int h, std::uint64_t seed, double scale = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<float> u(static_cast<std::size_t>(w) * h), v(u.size());
  for (auto& x : u) x = static_cast<float>(d(rng));
  for (auto& x : v) x = static_cast<float>(d(rng));
  return FlowField(w, h, std::move(u), std::move(v));
}

inline ImageBuffer random_image(int w, int h, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<float> px(static_cast<std::size_t>(w) * h * channels);
  for (auto& x : px) x = static_cast<float>(d(rng));
  return ImageBuffer(w, h, channels, std::move(px));
}

// Smooth deterministic texture with values inside (0, 1).
inline ImageBuffer smooth_texture(int w, int h, double ox = 0.0, double oy = 0.0) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double X = x - ox, Y = y - oy;
      img.set(x, y, 0, static_cast<float>(0.5 + 0.2 * std::sin(0.45 * X) + 0.15 * std::cos(0.31 * Y + 0.4)));
      img.set(x, y, 1, static_cast<float>(0.5 + 0.2 * std::sin(0.27 * X + 0.37 * Y)));
      img.set(x, y, 2, static_cast<float>(0.5 + 0.15 * std::cos(0.52 * Y - 0.21 * X)));
    }
  }
  return img;
}

// Upper tail of the chi-square distribution.
inline double chi_square_p(const std::vector<long>& counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  const double expected = n / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// One-sample Kolmogorov-Smirnov test against U(lo, hi), asymptotic p-value
// with the Stephens small-sample correction.
inline double ks_uniform_p(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(q, 0.0, 1.0);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "test") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("magniflow_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
