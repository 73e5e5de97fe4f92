#include "magniflow/fvs/losses.hpp"

#include "magniflow/errors.hpp"
#include "magniflow/nn/ops.hpp"

namespace magniflow::fvs {

using nn::Real;
using nn::Tensor;

Tensor gram_matrix(const Tensor& features) { return nn::gram(features); }

std::vector<Tensor> StyleExtractor::features(const Tensor& image) const {
  std::vector<Tensor> out;
  Tensor x = image;
  for (const auto& s : stages) {
    x = s.conv(x);
    if (s.activation) x = nn::silu(x);
    out.push_back(x);
  }
  return out;
}

StyleExtractor StyleExtractor::random(std::uint64_t seed) {
  // Built in a throwaway ParameterSet, then detached so the weights stay frozen.
  nn::ParameterSet scratch;
  nn::LayerBuilder b(scratch, seed);
  const int widths[] = {3, 8, 16, 32};
  StyleExtractor e;
  for (int i = 0; i < 3; ++i) {
    auto conv = b.conv("style." + std::to_string(i), widths[i], widths[i + 1], 3, i == 0 ? 1 : 2);
    conv.weight = conv.weight.detach();
    conv.bias = conv.bias.detach();
    e.stages.push_back({conv, true});
  }
  return e;
}

Tensor style_loss(const Tensor& synthesized, const Tensor& reference, const StyleExtractor& extractor,
                  std::vector<double> weights) {
  require(synthesized.shape() == reference.shape(), "style_loss: image shapes differ");
  require(!extractor.stages.empty(), "style_loss: extractor has no stages");
  const std::size_t q = extractor.stages.size();
  if (weights.empty()) weights.assign(q, 1.0 / static_cast<double>(q));
  require(weights.size() == q, "style_loss: one weight per feature level required");
  const auto fm = extractor.features(synthesized);
  const auto fa = extractor.features(reference);
  Tensor total;
  for (std::size_t l = 0; l < q; ++l) {
    const double h = fm[l].dim(2), w = fm[l].dim(3), c = fm[l].dim(1);
    const double norm = 4.0 * h * h * w * w * c * c * fm[l].dim(0);
    const Tensor d = nn::sum(nn::square(nn::sub(gram_matrix(fm[l]), gram_matrix(fa[l]))));
    const Tensor term = nn::scale(d, static_cast<Real>(weights[l] / norm));
    total = total.defined() ? nn::add(total, term) : term;
  }
  return total;
}

}  // namespace magniflow::fvs
