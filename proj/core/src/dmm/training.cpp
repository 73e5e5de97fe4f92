#include "magniflow/dmm/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "magniflow/errors.hpp"
#include "magniflow/flow/io.hpp"
#include "magniflow/nn/checkpoint.hpp"

namespace magniflow::dmm {

using nn::Real;
using nn::Tensor;

DmmStepResult dmm_train_step(MagnifierModel& model, const DmmBatch& batch, const DiffusionSchedule& schedule,
                             const nn::AdamWOptions& options, Rng& rng) {
  const std::size_t n = batch.alpha.size();
  require(n > 0 && batch.conditional.size() == n && batch.target.size() == n, "dmm_train_step: ragged batch");
  require(schedule.T == model.config().T, "dmm_train_step: schedule T differs from model T");
  const double f_max = schedule.f_max;
  const Tensor x0 = flows_to_tensor(batch.target, f_max);
  const Tensor cond = flows_to_tensor(batch.conditional, model.config().cond_scale());

  DmmStepResult result;
  const std::size_t per = x0.numel() / n;
  std::vector<Real> xt(x0.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const int t = uniform_int(rng, 1, schedule.T);
    result.t.push_back(t);
    std::vector<Real> noise(per);
    for (auto& e : noise) e = static_cast<Real>(normal(rng));
    const auto noisy = q_sample(x0.data().subspan(i * per, per), t, noise, schedule);
    std::copy(noisy.begin(), noisy.end(), xt.begin() + static_cast<std::ptrdiff_t>(i * per));
  }

  model.params().zero_grad();
  const Tensor pred = model.forward(Tensor::from(x0.shape(), std::move(xt)), cond, batch.alpha, result.t);
  const Tensor loss = nn::mean_abs(nn::sub(pred, x0));
  result.loss = loss.item();
  if (!std::isfinite(result.loss)) {
    std::ostringstream os;
    os << "dmm: non-finite loss at optimizer step " << model.params().step << "; t =";
    for (int t : result.t) os << ' ' << t;
    double norm = 0.0;
    for (Real v : x0.data()) norm += static_cast<double>(v) * v;
    os << "; |x0| = " << std::sqrt(norm);
    throw NonFiniteLossError(os.str());
  }
  nn::backward(loss);
  nn::adamw_step(model.params(), options);
  return result;
}

Tensor ddim_sample(const Denoiser& denoiser, const nn::Shape& shape, const DiffusionSchedule& schedule, int steps,
                   const std::vector<std::uint64_t>& seeds) {
  require(shape.size() == 4 && static_cast<std::size_t>(shape[0]) == seeds.size(),
          "ddim_sample: one seed per batch sample required");
  const std::size_t per = nn::numel(shape) / seeds.size();
  std::vector<Real> x(nn::numel(shape));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    Rng rng(seeds[i]);
    for (std::size_t j = 0; j < per; ++j) x[i * per + j] = static_cast<Real>(normal(rng));
  }
  nn::NoGradGuard guard;
  const auto ts = ddim_timesteps(schedule.T, steps);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_next = k + 1 < ts.size() ? ts[k + 1] : 0;
    const Tensor x0 = denoiser(Tensor::from(shape, x), t);
    require(x0.shape() == shape, "ddim_sample: denoiser changed the shape");
    const double a = schedule.signal(t), b = schedule.noise(t);
    const double an = schedule.signal(t_next), bn = schedule.noise(t_next);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double eps = (x[j] - a * x0.data()[j]) / b;
      x[j] = static_cast<Real>(an * x0.data()[j] + bn * eps);
    }
  }
  return Tensor::from(shape, std::move(x));
}

std::vector<FlowField> sample_magnified_flows(const MagnifierModel& model, const std::vector<FlowField>& conditional,
                                              const std::vector<double>& alpha, const DiffusionSchedule& schedule,
                                              int steps, std::uint64_t seed) {
  require(conditional.size() == alpha.size() && !alpha.empty(), "sample_magnified_flows: ragged inputs");
  const Tensor cond = flows_to_tensor(conditional, model.config().cond_scale());
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < alpha.size(); ++i) seeds.push_back(derive_seed(seed, i));
  const Denoiser den = [&](const Tensor& x, int t) {
    return model.forward(x, cond, alpha, std::vector<int>(alpha.size(), t));
  };
  const Tensor x0 = ddim_sample(den, cond.shape(), schedule, steps, seeds);
  std::vector<FlowField> out;
  for (int i = 0; i < x0.dim(0); ++i) out.push_back(tensor_to_flow(x0, i, schedule.f_max));
  return out;
}

FlowField sample_magnified_flow(const MagnifierModel& model, const FlowField& conditional, double alpha,
                                const DiffusionSchedule& schedule, int steps, std::uint64_t seed) {
  const Tensor cond = flows_to_tensor({conditional}, model.config().cond_scale());
  const Denoiser den = [&](const Tensor& x, int t) { return model.forward(x, cond, {alpha}, {t}); };
  return tensor_to_flow(ddim_sample(den, cond.shape(), schedule, steps, {seed}), 0, schedule.f_max);
}

DmmCorpus load_corpus(const nofa::Manifest& manifest) {
  DmmCorpus c;
  for (const auto& e : manifest.entries) {
    c.conditional.push_back(read_flo(manifest.root / e.conditional));
    c.target.push_back(read_flo(manifest.root / e.target));
    c.alpha.push_back(e.alpha);
    c.source.push_back(e.source);
  }
  return c;
}

DmmCorpus synthetic_corpus(int count, const nofa::NofaConfig& config, std::uint64_t seed) {
  DmmCorpus c;
  for (int i = 0; i < count; ++i) {
    auto s = nofa::generate_sample(config, derive_seed(seed, static_cast<std::uint64_t>(i)));
    c.conditional.push_back(std::move(s.conditional));
    c.target.push_back(std::move(s.target));
    c.alpha.push_back(s.alpha);
    c.source.emplace_back("synthetic");
  }
  return c;
}

double learning_rate_at(const DmmTrainOptions& o, std::int64_t step) {
  if (!o.cosine_decay || o.steps <= 0) return o.adam.lr;
  const double p = std::min(1.0, static_cast<double>(step) / o.steps);
  return o.adam.lr * (o.lr_floor + (1.0 - o.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p)));
}

void train_dmm(MagnifierModel& model, const DmmCorpus& corpus, const DiffusionSchedule& schedule,
               const DmmTrainOptions& o) {
  require(corpus.size() > 0, "train_dmm: empty corpus");
  require(o.batch >= 1, "train_dmm: batch must be >= 1");
  std::vector<std::size_t> synthetic, real;
  for (std::size_t i = 0; i < corpus.size(); ++i) (corpus.source[i] == "real" ? real : synthetic).push_back(i);
  const bool alternate = !synthetic.empty() && !real.empty();

  std::ofstream csv;
  if (!o.loss_csv.empty()) {
    const bool fresh = model.params().step == 0 || !std::filesystem::exists(o.loss_csv);
    csv.open(o.loss_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write " + o.loss_csv.string());
    csv.precision(9);
    if (fresh) csv << "step,loss,source\n";
  }
  auto save = [&] {
    if (o.checkpoint.empty()) return;
    nn::save_checkpoint(o.checkpoint, model.params(), {o.seed, "dmm", model.config().to_json()});
  };

  for (std::int64_t s = model.params().step; s < o.steps; ++s) {
    Rng rng(derive_seed(o.seed, static_cast<std::uint64_t>(s)));
    const auto& pool = alternate ? (s % 2 == 0 ? synthetic : real) : (synthetic.empty() ? real : synthetic);
    DmmBatch batch;
    for (int b = 0; b < o.batch; ++b) {
      const std::size_t idx = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
      batch.conditional.push_back(corpus.conditional[idx]);
      batch.target.push_back(corpus.target[idx]);
      batch.alpha.push_back(corpus.alpha[idx]);
    }
    auto adam = o.adam;
    adam.lr = learning_rate_at(o, s);
    const auto r = dmm_train_step(model, batch, schedule, adam, rng);
    if (csv.is_open()) csv << (s + 1) << ',' << r.loss << ',' << corpus.source[pool[0]] << '\n';
    if (o.on_step) o.on_step(static_cast<int>(s + 1), r.loss);
    if (o.checkpoint_every > 0 && (s + 1) % o.checkpoint_every == 0) {
      csv.flush();
      save();
    }
  }
  csv.flush();
  save();
}

}  // namespace magniflow::dmm
