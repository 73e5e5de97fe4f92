#pragma once

#include "magniflow/nn/layers.hpp"

namespace magniflow::nn {

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay, then the bias-corrected Adam update. Every
// parameter must carry a gradient.
void adamw_step(ParameterSet& params, const AdamWOptions& options = {});

}  // namespace magniflow::nn
