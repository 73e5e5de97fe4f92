#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "magniflow/fvs/losses.hpp"
#include "magniflow/fvs/model.hpp"
#include "magniflow/nn/optim.hpp"

namespace magniflow::fvs {

struct FvsBatch {
  std::vector<ImageBuffer> reference;
  std::vector<ImageBuffer> target;
  std::vector<FlowField> flow;  // reference -> target
};

struct FvsLosses {
  double l1 = 0.0;
  double style = 0.0;
  double total = 0.0;
};

struct LossWeights {
  double l1 = 1.0;
  double style = 40.0;
};

// L_s = l1 * mean|x - I_GT| + style * L_G on the unclamped output, then one
// AdamW step. Throws NonFiniteLossError.
FvsLosses fvs_train_step(SynthesisModel& model, const FvsBatch& batch, const StyleExtractor& extractor,
                         const LossWeights& weights, const nn::AdamWOptions& options);

// Losses without an update.
FvsLosses fvs_losses(const SynthesisModel& model, const FvsBatch& batch, const StyleExtractor& extractor,
                     const LossWeights& weights);

struct FvsTrainOptions {
  int steps = 1000;
  int batch = 4;
  int width = 128;
  int height = 128;
  double max_displacement = 3.0;
  nn::AdamWOptions adam;
  LossWeights loss;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::function<void(int step, const FvsLosses&)> on_step;
};

// Translating-texture pairs; pair b of step s uses derive_seed(seed, s * batch + b).
FvsBatch make_fvs_batch(const FvsTrainOptions& options, std::int64_t step);

void train_fvs(SynthesisModel& model, const FvsTrainOptions& options);

}  // namespace magniflow::fvs
