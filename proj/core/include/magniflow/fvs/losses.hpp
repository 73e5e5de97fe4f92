#pragma once

#include <cstdint>
#include <vector>

#include "magniflow/nn/layers.hpp"

namespace magniflow::fvs {

// G[n] = F F^T for features [N, C, H, W].
nn::Tensor gram_matrix(const nn::Tensor& features);

// Frozen feature pyramid: each stage is conv followed (optionally) by SiLU;
// every stage output is one style level.
struct StyleExtractor {
  struct Stage {
    nn::Conv2d conv;
    bool activation = true;
  };
  std::vector<Stage> stages;

  std::vector<nn::Tensor> features(const nn::Tensor& image) const;

  // Seeded random 3-level pyramid (3 -> 8 -> 16 -> 32 channels, stride 1, 2, 2).
  static StyleExtractor random(std::uint64_t seed);
};

// sum_l w_l / (4 H_l^2 W_l^2 N_l^2) * sum_ij (G_ij - A_ij)^2, averaged over
// the batch. `weights` defaults to 1/q per level.
nn::Tensor style_loss(const nn::Tensor& synthesized, const nn::Tensor& reference, const StyleExtractor& extractor,
                      std::vector<double> weights = {});

}  // namespace magniflow::fvs
