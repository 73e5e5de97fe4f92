#pragma once

#include "magniflow/nn/tensor.hpp"

namespace magniflow::dmm {

inline constexpr int kUpFactor = 8;
inline constexpr int kMaskChannels = 2 * 9 * kUpFactor * kUpFactor;

// coarse: [N, 2, h, w]. weights: [N, 1152, h, w] laid out as
// [component 2][neighbor 9 (row-major 3x3)][sub-y 8][sub-x 8], already
// normalized over the neighbor axis. Output [N, 2, 8h, 8w]; each fine pixel
// is the weighted sum of the replicate-padded 3x3 coarse neighborhood.
nn::Tensor convex_upsample(const nn::Tensor& coarse, const nn::Tensor& weights);

// Softmax over the neighbor axis of raw [N, 1152, h, w] logits.
nn::Tensor normalize_mask(const nn::Tensor& logits);

}  // namespace magniflow::dmm
