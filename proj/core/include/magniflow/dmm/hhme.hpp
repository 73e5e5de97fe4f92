#pragma once

#include <vector>

namespace magniflow::dmm {

// Pre-fusion harmonic features of the magnification factor:
// [n, cos(2*pi*2^k*n) for k = 1..K, sin(2*pi*2^k*n) for k = 1..K] with
// n = alpha / alpha_max. Alphas outside [0, alpha_max] are clamped and a
// warning is logged.
std::vector<double> hhme_features(double alpha, int K = 4, double alpha_max = 100.0);

// Sinusoidal timestep features of even width `dim`.
std::vector<double> timestep_features(int t, int dim);

}  // namespace magniflow::dmm
