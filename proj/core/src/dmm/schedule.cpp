#include "magniflow/dmm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "magniflow/errors.hpp"

namespace magniflow::dmm {

double DiffusionSchedule::signal(int t) const {
  require(t >= 0 && t <= T, "schedule: timestep out of range");
  return std::sqrt(alpha_bar[t]);
}

double DiffusionSchedule::noise(int t) const {
  require(t >= 0 && t <= T, "schedule: timestep out of range");
  return std::sqrt(1.0 - alpha_bar[t]);
}

DiffusionSchedule make_schedule(int T, const std::string& kind, double f_max) {
  require(T >= 2, "make_schedule: T must be >= 2");
  require(f_max > 0, "make_schedule: F_max must be positive");
  require(kind == "cosine", "make_schedule: unknown schedule kind " + kind);
  constexpr double s = 0.008;
  auto f = [&](double t) {
    const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  DiffusionSchedule sched;
  sched.T = T;
  sched.f_max = f_max;
  sched.beta.assign(T + 1, 0.0);
  sched.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    sched.beta[t] = beta;
    sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - beta);
  }
  return sched;
}

std::vector<nn::Real> q_sample(std::span<const nn::Real> x0, int t, std::span<const nn::Real> noise,
                               const DiffusionSchedule& schedule) {
  require(t >= 1 && t <= schedule.T, "q_sample: t out of range [1, T]");
  require(x0.size() == noise.size(), "q_sample: noise size mismatch");
  const double a = schedule.signal(t), b = schedule.noise(t);
  std::vector<nn::Real> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<nn::Real>(a * x0[i] + b * noise[i]);
  return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
  require(steps >= 1 && steps <= T, "ddim_timesteps: steps must lie in [1, T]");
  std::vector<int> ts;
  for (int k = steps; k >= 1; --k) ts.push_back(static_cast<int>(static_cast<long long>(k) * T / steps));
  return ts;
}

}  // namespace magniflow::dmm
