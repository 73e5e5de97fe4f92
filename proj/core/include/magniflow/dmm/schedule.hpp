#pragma once

#include <span>
#include <string>
#include <vector>

#include "magniflow/nn/tensor.hpp"

namespace magniflow::dmm {

struct DiffusionSchedule {
  int T = 0;
  double f_max = 32.0;        // pixels per normalized unit
  std::vector<double> beta;       // index 1..T, beta[0] unused
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1

  double signal(int t) const;  // sqrt(alpha_bar_t)
  double noise(int t) const;   // sqrt(1 - alpha_bar_t)
};

// Only the cosine schedule (offset 0.008, betas clipped at 0.999) is provided.
DiffusionSchedule make_schedule(int T, const std::string& kind = "cosine", double f_max = 32.0);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
std::vector<nn::Real> q_sample(std::span<const nn::Real> x0, int t, std::span<const nn::Real> noise,
                               const DiffusionSchedule& schedule);

// Strided descending subset {T, ..., t_1} of `steps` timesteps; the sampler
// steps from each entry to the next and finally to t = 0.
std::vector<int> ddim_timesteps(int T, int steps);

}  // namespace magniflow::dmm
