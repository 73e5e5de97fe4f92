#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "magniflow/dmm/model.hpp"
#include "magniflow/dmm/schedule.hpp"
#include "magniflow/nn/optim.hpp"
#include "magniflow/nofa/nofa.hpp"

namespace magniflow::dmm {

struct DmmBatch {
  std::vector<FlowField> conditional;  // pixels
  std::vector<FlowField> target;       // pixels
  std::vector<double> alpha;
};

struct DmmStepResult {
  double loss = 0.0;
  std::vector<int> t;
};

// One x0-prediction step: t ~ U{1..T} and fresh standard-normal noise per
// sample drawn from `rng`; loss = mean |x0_hat - target / F_max| over the
// full-resolution field; one AdamW update. Throws NonFiniteLossError.
DmmStepResult dmm_train_step(MagnifierModel& model, const DmmBatch& batch, const DiffusionSchedule& schedule,
                             const nn::AdamWOptions& options, Rng& rng);

// Normalized x0 prediction for a noisy normalized state at timestep t.
using Denoiser = std::function<nn::Tensor(const nn::Tensor& x_t, int t)>;

// Deterministic DDIM (eta = 0) over ddim_timesteps(T, steps), starting
// from x_T ~ N(0, I). Sample i of the batch draws its start noise from
// seeds[i]. Returns the final normalized x0 estimate.
nn::Tensor ddim_sample(const Denoiser& denoiser, const nn::Shape& shape, const DiffusionSchedule& schedule,
                       int steps, const std::vector<std::uint64_t>& seeds);

// Magnified flow in pixels for one conditional flow.
FlowField sample_magnified_flow(const MagnifierModel& model, const FlowField& conditional, double alpha,
                                const DiffusionSchedule& schedule, int steps, std::uint64_t seed);

// Batched variant; sample i uses derive_seed(seed, i).
std::vector<FlowField> sample_magnified_flows(const MagnifierModel& model, const std::vector<FlowField>& conditional,
                                              const std::vector<double>& alpha, const DiffusionSchedule& schedule,
                                              int steps, std::uint64_t seed);

struct DmmCorpus {
  std::vector<FlowField> conditional;
  std::vector<FlowField> target;
  std::vector<double> alpha;
  std::vector<std::string> source;  // "synthetic" | "real"
  std::size_t size() const { return alpha.size(); }
};

DmmCorpus load_corpus(const nofa::Manifest& manifest);
// In-memory corpus straight from the NOFA generator (sample i uses derive_seed(seed, i)).
DmmCorpus synthetic_corpus(int count, const nofa::NofaConfig& config, std::uint64_t seed);

struct DmmTrainOptions {
  int steps = 1000;
  int batch = 4;
  nn::AdamWOptions adam;
  // Cosine decay of the learning rate to lr * lr_floor over `steps`.
  bool cosine_decay = false;
  double lr_floor = 0.05;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;          // 0: only at the end
  std::filesystem::path checkpoint;  // empty: no checkpoints
  std::filesystem::path loss_csv;    // empty: no CSV
  std::function<void(int step, double loss)> on_step;
};

// Runs from params().step to options.steps. Batches for step s are drawn
// from derive_seed(seed, s), so a resumed run continues identically. With
// both sources present, even steps draw synthetic and odd steps real batches.
void train_dmm(MagnifierModel& model, const DmmCorpus& corpus, const DiffusionSchedule& schedule,
               const DmmTrainOptions& options);

double learning_rate_at(const DmmTrainOptions& options, std::int64_t step);

}  // namespace magniflow::dmm
