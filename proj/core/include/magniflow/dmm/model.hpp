#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/nn/layers.hpp"

namespace magniflow::dmm {

struct DmmConfig {
  std::array<int, 3> widths{32, 32, 64};  // latent U-Net stages; widths[0] is the trunk width
  int harmonics = 4;                      // K
  double alpha_max = 100.0;
  int T = 200;
  double f_max = 32.0;
  int embed_dim = 64;
  int time_features = 32;
  int sample_steps = 50;
  // Init gain of the flow and mask output convs.
  double head_gain = 0.1;

  // Conditional flows enter the network divided by this, so that the
  // normalized target equals n_alpha times the normalized input.
  double cond_scale() const { return f_max / alpha_max; }
  void validate() const;
  std::string to_json() const;
  static DmmConfig from_json(const std::string& json);
};

// Conditional denoiser: shared stride-2 downsampler D on both inputs, 1x1
// fusion F_r, an embedding-conditioned residual block (r, r'), a latent
// U-Net E producing a 2-channel coarse flow, and the mask block F_w -> W
// feeding convex upsampling back to full resolution.
class MagnifierModel {
 public:
  MagnifierModel(const DmmConfig& config, std::uint64_t seed);
  MagnifierModel(const MagnifierModel&) = delete;
  MagnifierModel& operator=(const MagnifierModel&) = delete;

  // x_t, cond: [N, 2, H, W] in normalized units (x_t / F_max, cond /
  // cond_scale). Returns predicted x0 in the same shape.
  nn::Tensor forward(const nn::Tensor& x_t, const nn::Tensor& cond, const std::vector<double>& alpha,
                     const std::vector<int>& t) const;

  // Fused embedding h_alpha + timestep embedding, [N, embed_dim].
  nn::Tensor embedding(const std::vector<double>& alpha, const std::vector<int>& t) const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const DmmConfig& config() const { return config_; }

 private:
  struct CondBlock {
    nn::GroupNorm norm1, norm2;
    nn::Conv2d conv1, conv2;
    nn::Linear emb;
    nn::Conv2d skip;  // undefined weight when widths match
  };
  CondBlock make_block(nn::LayerBuilder& b, const std::string& name, int cin, int cout);
  // Returns (skip(x) + h, h).
  std::pair<nn::Tensor, nn::Tensor> apply(const CondBlock& blk, const nn::Tensor& x, const nn::Tensor& emb) const;
  nn::Tensor downsample(const nn::Tensor& x) const;

  DmmConfig config_;
  nn::ParameterSet params_;
  std::array<nn::Conv2d, 3> down_;
  nn::Conv2d fuse_;
  nn::Linear embed_alpha_, embed_time_;
  CondBlock residual_;
  std::array<CondBlock, 3> enc_;
  std::array<CondBlock, 2> dec_;
  nn::GroupNorm out_norm_;
  nn::Conv2d out_flow_;
  nn::Conv2d mask_context_;
  nn::Linear mask_emb_;
  nn::Conv2d mask_out_;
};

nn::Tensor denoiser_forward(const MagnifierModel& model, const nn::Tensor& x_t, const nn::Tensor& cond,
                            const std::vector<double>& alpha, const std::vector<int>& t);

// Stacks flows into [N, 2, H, W], dividing by `scale`.
nn::Tensor flows_to_tensor(const std::vector<FlowField>& flows, double scale);
// Sample `index` of an [N, 2, H, W] tensor, multiplied by `scale`.
FlowField tensor_to_flow(const nn::Tensor& t, int index, double scale);

}  // namespace magniflow::dmm
