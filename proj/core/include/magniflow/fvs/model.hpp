#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"
#include "magniflow/nn/layers.hpp"

namespace magniflow::fvs {

// L = ceil(log2(min(H, W) / r_min)) + 1; falls back to 1 (with a warning)
// when min(H, W) < r_min.
int num_scales(int height, int width, int r_min = 64);

struct FvsConfig {
  int r_min = 64;
  int encoder_width = 8;
  std::array<int, 2> widths{16, 32};  // fusion U-Net stages
  double flow_scale = 8.0;            // flows enter the fusion net divided by this
  double blend_bias = 3.0;            // initial blend logit
  void validate() const;
  std::string to_json() const;
  static FvsConfig from_json(const std::string& json);
};

// Replaces the decoder output with constants (tests and diagnostics).
struct DecoderOverride {
  double residual = 0.0;
  double blend_logit = 30.0;
};

struct PyramidLevel {
  int level = 0;
  double scale = 1.0;  // 1 / 2^level
  nn::Tensor image;    // [N, 3, h, w]
  nn::Tensor flow;     // [N, 2, h, w], pixels at this level
  nn::Tensor features;
  nn::Tensor warped_image;
  nn::Tensor warped_features;
};

// x = I_warp * sigmoid(w) + R, unclamped. I_warp, R: [N, 3, h, w]; w: [N, 1, h, w].
nn::Tensor blend_scale(const nn::Tensor& warped, const nn::Tensor& residual, const nn::Tensor& logits);

class SynthesisModel {
 public:
  SynthesisModel(const FvsConfig& config, std::uint64_t seed);
  SynthesisModel(const SynthesisModel&) = delete;
  SynthesisModel& operator=(const SynthesisModel&) = delete;

  // Levels ordered coarsest first. Flows map reference -> target, so images
  // and features are backward-warped by the negated flow.
  std::vector<PyramidLevel> build_pyramid(const std::vector<ImageBuffer>& references,
                                          const std::vector<FlowField>& flows, int levels) const;

  // Unclamped finest-level output [N, 3, H, W].
  nn::Tensor forward(const std::vector<ImageBuffer>& references, const std::vector<FlowField>& flows) const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const FvsConfig& config() const { return config_; }

  void set_decoder_override(std::optional<DecoderOverride> o) { override_ = o; }

 private:
  struct ConvNorm {
    nn::Conv2d conv;
    nn::GroupNorm norm;
    nn::Tensor operator()(const nn::Tensor& x) const;
  };
  nn::Tensor encode(const nn::Tensor& image) const;
  nn::Tensor fuse(const nn::Tensor& x) const;

  FvsConfig config_;
  nn::ParameterSet params_;
  nn::Conv2d enc1_, enc2_;
  std::array<ConvNorm, 2> b_enc0_, b_enc1_;
  ConvNorm b_dec0_;
  nn::Conv2d decoder_;
  std::optional<DecoderOverride> override_;
};

// Clamped output frame for one (reference, flow) pair.
ImageBuffer synthesize_frame(const SynthesisModel& model, const ImageBuffer& reference, const FlowField& flow);

nn::Tensor images_to_tensor(const std::vector<ImageBuffer>& images);
// Sample `index` of [N, 3, H, W], clamped to [0, 1].
ImageBuffer tensor_to_image(const nn::Tensor& t, int index);

}  // namespace magniflow::fvs
