#include "magniflow/nn/optim.hpp"

#include <cmath>

#include "magniflow/errors.hpp"

namespace magniflow::nn {

void adamw_step(ParameterSet& params, const AdamWOptions& o) {
  require(o.lr >= 0 && o.eps > 0 && o.weight_decay >= 0, "adamw_step: invalid hyper-parameters");
  require(o.beta1 >= 0 && o.beta1 < 1 && o.beta2 >= 0 && o.beta2 < 1, "adamw_step: betas must lie in [0, 1)");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params.params[i].has_grad(), "adamw_step: parameter " + params.names[i] + " has no gradient");
  }
  const auto t = static_cast<double>(params.step + 1);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  const Real decay = static_cast<Real>(1.0 - o.lr * o.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.params[i].mutable_data();
    auto g = params.params[i].grad();
    auto& m = params.first_moment[i];
    auto& v = params.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      const double gj = g[j];
      m[j] = static_cast<Real>(o.beta1 * m[j] + (1.0 - o.beta1) * gj);
      v[j] = static_cast<Real>(o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = static_cast<Real>(p[j] - o.lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
  ++params.step;
}

}  // namespace magniflow::nn
