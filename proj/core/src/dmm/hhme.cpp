#include "magniflow/dmm/hhme.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "magniflow/errors.hpp"

namespace magniflow::dmm {

std::vector<double> hhme_features(double alpha, int K, double alpha_max) {
  require(K >= 1, "hhme: K must be >= 1");
  require(alpha_max > 0 && std::isfinite(alpha), "hhme: invalid alpha or alpha_max");
  if (alpha < 0 || alpha > alpha_max) {
    std::clog << "warning: alpha " << alpha << " outside [0, " << alpha_max << "], clamped\n";
  }
  const double n = std::clamp(alpha / alpha_max, 0.0, 1.0);
  std::vector<double> f(2 * static_cast<std::size_t>(K) + 1);
  f[0] = n;
  for (int k = 1; k <= K; ++k) {
    // Reduce the phase to [0, 1) turns first so that exact turn counts give
    // exact cos = 1, sin = 0.
    const double turns = std::ldexp(n, k);
    const double frac = turns - std::floor(turns);
    const double phase = 2.0 * std::numbers::pi * frac;
    double c = std::cos(phase), s = std::sin(phase);
    if (frac == 0.0) c = 1.0, s = 0.0;
    if (frac == 0.5) c = -1.0, s = 0.0;
    f[k] = c;
    f[K + k] = s;
  }
  return f;
}

std::vector<double> timestep_features(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "timestep_features: dim must be even");
  const int half = dim / 2;
  std::vector<double> f(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    f[i] = std::sin(t * freq);
    f[half + i] = std::cos(t * freq);
  }
  return f;
}

}  // namespace magniflow::dmm
