#include "magniflow/dmm/convex_upsample.hpp"

#include <algorithm>
#include <cmath>

#include "magniflow/errors.hpp"
#include "magniflow/nn/ops.hpp"

namespace magniflow::dmm {

using nn::Real;
using nn::Tensor;

namespace {

constexpr int kSub = kUpFactor * kUpFactor;

}  // namespace

Tensor normalize_mask(const Tensor& logits) {
  require(logits.rank() == 4 && logits.dim(1) == kMaskChannels, "normalize_mask: expected [N, 1152, h, w]");
  const int n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  auto grouped = nn::reshape(logits, {n, 2, 9, kSub * h * w});
  return nn::reshape(nn::softmax_axis(grouped, 2), logits.shape());
}

Tensor convex_upsample(const Tensor& coarse, const Tensor& weights) {
  require(coarse.rank() == 4 && coarse.dim(1) == 2, "convex_upsample: coarse flow must be [N, 2, h, w]");
  const int n = coarse.dim(0), h = coarse.dim(2), w = coarse.dim(3);
  require(weights.shape() == nn::Shape{n, kMaskChannels, h, w}, "convex_upsample: weights must be [N, 1152, h, w]");
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const auto wd = weights.data();
  auto widx = [hw](int b, int c, int k, int s, std::size_t p) {
    return ((((static_cast<std::size_t>(b) * 2 + c) * 9 + k) * kSub + s) * hw) + p;
  };
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 2; ++c) {
      for (int s = 0; s < kSub; ++s) {
        for (std::size_t p = 0; p < hw; ++p) {
          double total = 0.0;
          for (int k = 0; k < 9; ++k) total += wd[widx(b, c, k, s, p)];
          if (std::abs(total - 1.0) > 1e-4) {
            throw ContractError("convex_upsample: weights not normalized over the neighbor axis (sum " +
                                std::to_string(total) + ")");
          }
        }
      }
    }
  }
  // Coarse source index per (pixel, neighbor), replicate padding.
  std::vector<std::size_t> src(hw * 9);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < 9; ++k) {
        const int yy = std::clamp(y + k / 3 - 1, 0, h - 1), xx = std::clamp(x + k % 3 - 1, 0, w - 1);
        src[(static_cast<std::size_t>(y) * w + x) * 9 + k] = static_cast<std::size_t>(yy) * w + xx;
      }
    }
  }
  const int fh = h * kUpFactor, fw = w * kUpFactor;
  const std::size_t fhw = static_cast<std::size_t>(fh) * fw;
  std::vector<Real> out(static_cast<std::size_t>(n) * 2 * fhw);
  const auto cd = coarse.data();
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 2; ++c) {
      const Real* plane = cd.data() + (static_cast<std::size_t>(b) * 2 + c) * hw;
      Real* dst = out.data() + (static_cast<std::size_t>(b) * 2 + c) * fhw;
      for (std::size_t p = 0; p < hw; ++p) {
        const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
        for (int s = 0; s < kSub; ++s) {
          Real acc = 0;
          for (int k = 0; k < 9; ++k) acc += wd[widx(b, c, k, s, p)] * plane[src[p * 9 + k]];
          dst[static_cast<std::size_t>(y * kUpFactor + s / kUpFactor) * fw + x * kUpFactor + s % kUpFactor] = acc;
        }
      }
    }
  }
  auto pc = coarse.node(), pw = weights.node();
  return nn::make_result({n, 2, fh, fw}, std::move(out), {coarse, weights},
                         [=, src = std::move(src)](nn::Node& o) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < 2; ++c) {
        const Real* go = o.grad.data() + (static_cast<std::size_t>(b) * 2 + c) * fhw;
        const Real* plane = pc->value.data() + (static_cast<std::size_t>(b) * 2 + c) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
          for (int s = 0; s < kSub; ++s) {
            const Real g =
                go[static_cast<std::size_t>(y * kUpFactor + s / kUpFactor) * fw + x * kUpFactor + s % kUpFactor];
            for (int k = 0; k < 9; ++k) {
              const std::size_t wi = widx(b, c, k, s, p);
              if (pw->requires_grad) pw->grad_buffer()[wi] += g * plane[src[p * 9 + k]];
              if (pc->requires_grad) {
                pc->grad_buffer()[(static_cast<std::size_t>(b) * 2 + c) * hw + src[p * 9 + k]] += g * pw->value[wi];
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace magniflow::dmm
