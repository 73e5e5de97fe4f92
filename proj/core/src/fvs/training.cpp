#include "magniflow/fvs/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "magniflow/errors.hpp"
#include "magniflow/nn/checkpoint.hpp"
#include "magniflow/nofa/scene.hpp"

namespace magniflow::fvs {

using nn::Tensor;

namespace {

struct LossGraph {
  Tensor l1, style, total;
};

LossGraph build_losses(const SynthesisModel& model, const FvsBatch& batch, const StyleExtractor& extractor,
                       const LossWeights& weights) {
  require(!batch.reference.empty() && batch.reference.size() == batch.target.size() &&
              batch.reference.size() == batch.flow.size(),
          "fvs: ragged batch");
  const Tensor x = model.forward(batch.reference, batch.flow);
  const Tensor gt = images_to_tensor(batch.target);
  LossGraph g;
  g.l1 = nn::mean_abs(nn::sub(x, gt));
  g.total = nn::scale(g.l1, static_cast<nn::Real>(weights.l1));
  if (weights.style != 0.0) {
    g.style = style_loss(x, gt, extractor);
    g.total = nn::add(g.total, nn::scale(g.style, static_cast<nn::Real>(weights.style)));
  } else {
    nn::NoGradGuard guard;
    g.style = style_loss(x, gt, extractor);
  }
  return g;
}

FvsLosses values(const LossGraph& g) { return {g.l1.item(), g.style.item(), g.total.item()}; }

}  // namespace

FvsLosses fvs_losses(const SynthesisModel& model, const FvsBatch& batch, const StyleExtractor& extractor,
                     const LossWeights& weights) {
  nn::NoGradGuard guard;
  return values(build_losses(model, batch, extractor, weights));
}

FvsLosses fvs_train_step(SynthesisModel& model, const FvsBatch& batch, const StyleExtractor& extractor,
                         const LossWeights& weights, const nn::AdamWOptions& options) {
  model.params().zero_grad();
  const auto g = build_losses(model, batch, extractor, weights);
  const auto v = values(g);
  if (!std::isfinite(v.total)) {
    std::ostringstream os;
    os << "fvs: non-finite loss at optimizer step " << model.params().step << " (L1 " << v.l1 << ", style "
       << v.style << ")";
    throw NonFiniteLossError(os.str());
  }
  nn::backward(g.total);
  nn::adamw_step(model.params(), options);
  return v;
}

FvsBatch make_fvs_batch(const FvsTrainOptions& o, std::int64_t step) {
  FvsBatch b;
  for (int i = 0; i < o.batch; ++i) {
    const auto seed = derive_seed(o.seed, static_cast<std::uint64_t>(step) * o.batch + i);
    auto pair = nofa::make_translation_pair(o.width, o.height, seed, o.max_displacement);
    b.reference.push_back(std::move(pair.reference));
    b.target.push_back(std::move(pair.target));
    b.flow.push_back(std::move(pair.flow));
  }
  return b;
}

void train_fvs(SynthesisModel& model, const FvsTrainOptions& o) {
  require(o.batch >= 1, "train_fvs: batch must be >= 1");
  const auto extractor = StyleExtractor::random(derive_seed(o.seed, 0, 7));
  std::ofstream csv;
  if (!o.loss_csv.empty()) {
    const bool fresh = model.params().step == 0 || !std::filesystem::exists(o.loss_csv);
    csv.open(o.loss_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write " + o.loss_csv.string());
    csv.precision(9);
    if (fresh) csv << "step,loss,l1,style\n";
  }
  auto save = [&] {
    if (o.checkpoint.empty()) return;
    nn::save_checkpoint(o.checkpoint, model.params(), {o.seed, "fvs", model.config().to_json()});
  };
  for (std::int64_t s = model.params().step; s < o.steps; ++s) {
    const auto v = fvs_train_step(model, make_fvs_batch(o, s), extractor, o.loss, o.adam);
    if (csv.is_open()) csv << (s + 1) << ',' << v.total << ',' << v.l1 << ',' << v.style << '\n';
    if (o.on_step) o.on_step(static_cast<int>(s + 1), v);
    if (o.checkpoint_every > 0 && (s + 1) % o.checkpoint_every == 0) {
      csv.flush();
      save();
    }
  }
  csv.flush();
  save();
}

}  // namespace magniflow::fvs
