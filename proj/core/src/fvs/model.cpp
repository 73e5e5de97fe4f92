#include "magniflow/fvs/model.hpp"

#include <iostream>
#include <json.hpp>

#include "magniflow/errors.hpp"
#include "magniflow/flow/ops.hpp"

namespace magniflow::fvs {

using nn::Real;
using nn::Tensor;

int num_scales(int height, int width, int r_min) {
  require(height >= 1 && width >= 1 && r_min >= 1, "num_scales: invalid extents");
  const long long m = std::min(height, width);
  if (m < r_min) {
    std::clog << "warning: frame " << width << "x" << height << " is below the minimum resolution " << r_min
              << "; using a single scale\n";
    return 1;
  }
  // Smallest k with r_min * 2^k >= m, i.e. ceil(log2(m / r_min)).
  int k = 0;
  while (static_cast<long long>(r_min) << k < m) ++k;
  return k + 1;
}

void FvsConfig::validate() const {
  require(r_min >= 1, "fvs: r_min must be positive");
  require(encoder_width >= 1 && widths[0] >= 1 && widths[1] >= 1, "fvs: widths must be positive");
  require(flow_scale > 0, "fvs: flow_scale must be positive");
}

std::string FvsConfig::to_json() const {
  nlohmann::json j;
  j["r_min"] = r_min;
  j["encoder_width"] = encoder_width;
  j["widths"] = widths;
  j["flow_scale"] = flow_scale;
  j["blend_bias"] = blend_bias;
  return j.dump();
}

FvsConfig FvsConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FvsConfig c;
  c.r_min = j.at("r_min");
  c.encoder_width = j.at("encoder_width");
  c.widths = j.at("widths").get<std::array<int, 2>>();
  c.flow_scale = j.at("flow_scale");
  c.blend_bias = j.at("blend_bias");
  c.validate();
  return c;
}

Tensor blend_scale(const Tensor& warped, const Tensor& residual, const Tensor& logits) {
  require(warped.rank() == 4 && warped.dim(1) == 3 && residual.shape() == warped.shape(),
          "blend_scale: image and residual must be [N, 3, h, w]");
  require(logits.rank() == 4 && logits.dim(1) == 1 && logits.dim(0) == warped.dim(0) &&
              logits.dim(2) == warped.dim(2) && logits.dim(3) == warped.dim(3),
          "blend_scale: logits must be [N, 1, h, w]");
  const Tensor s = nn::sigmoid(logits);
  return nn::add(nn::mul(warped, nn::concat_channels({s, s, s})), residual);
}

namespace {

int groups_for(int c) { return nn::group_count(c, std::max(1, std::min(8, c / 4))); }

Tensor flows_tensor(const std::vector<FlowField>& flows, double factor) {
  const int w = flows[0].width(), h = flows[0].height();
  std::vector<Real> data;
  for (const auto& f : flows) {
    require(f.width() == w && f.height() == h, "fvs: flows differ in size");
    for (float x : f.u()) data.push_back(static_cast<Real>(x * factor));
    for (float x : f.v()) data.push_back(static_cast<Real>(x * factor));
  }
  return Tensor::from({static_cast<int>(flows.size()), 2, h, w}, std::move(data));
}

}  // namespace

Tensor images_to_tensor(const std::vector<ImageBuffer>& images) {
  require(!images.empty(), "images_to_tensor: empty batch");
  const int w = images[0].width(), h = images[0].height();
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  std::vector<Real> data(images.size() * 3 * hw);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& im = images[n];
    require(im.width() == w && im.height() == h && im.channels() == 3, "images_to_tensor: expected equal RGB frames");
    const auto src = im.data();
    for (std::size_t p = 0; p < hw; ++p) {
      for (int c = 0; c < 3; ++c) data[(n * 3 + c) * hw + p] = src[p * 3 + c];
    }
  }
  return Tensor::from({static_cast<int>(images.size()), 3, h, w}, std::move(data));
}

ImageBuffer tensor_to_image(const Tensor& t, int index) {
  require(t.rank() == 4 && t.dim(1) == 3 && index >= 0 && index < t.dim(0), "tensor_to_image: bad tensor/index");
  const int h = t.dim(2), w = t.dim(3);
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  const Real* base = t.data().data() + static_cast<std::size_t>(index) * 3 * hw;
  std::vector<float> data(hw * 3);
  for (std::size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < 3; ++c) data[p * 3 + c] = static_cast<float>(base[c * hw + p]);
  }
  return ImageBuffer(w, h, 3, std::move(data));
}

Tensor SynthesisModel::ConvNorm::operator()(const Tensor& x) const { return nn::silu(norm(conv(x))); }

SynthesisModel::SynthesisModel(const FvsConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::LayerBuilder b(params_, seed);
  const int ew = config_.encoder_width, w0 = config_.widths[0], w1 = config_.widths[1];
  enc1_ = b.conv("encoder.0", 3, ew, 3);
  enc2_ = b.conv("encoder.1", ew, ew, 3);
  auto conv_norm = [&](const std::string& name, int cin, int cout) {
    return ConvNorm{b.conv(name + ".conv", cin, cout, 3), b.group_norm(name + ".norm", cout, groups_for(cout))};
  };
  b_enc0_ = {conv_norm("fusion.enc0a", 3 + ew + 2, w0), conv_norm("fusion.enc0b", w0, w0)};
  b_enc1_ = {conv_norm("fusion.enc1a", w0, w1), conv_norm("fusion.enc1b", w1, w1)};
  b_dec0_ = conv_norm("fusion.dec0", w1 + w0, w0);
  // Zero weights with a positive blend bias: training starts from x close
  // to the warped frame rather than from a random image.
  decoder_ = b.zero_conv("decoder", w0, 4, 3);
  decoder_.bias.mutable_data()[3] = static_cast<Real>(config_.blend_bias);
}

Tensor SynthesisModel::encode(const Tensor& image) const { return nn::silu(enc2_(nn::silu(enc1_(image)))); }

Tensor SynthesisModel::fuse(const Tensor& x) const {
  const Tensor e0 = b_enc0_[1](b_enc0_[0](x));
  Tensor p = e0;
  if (e0.dim(2) % 2 == 0 && e0.dim(3) % 2 == 0) p = nn::resample2x(e0, nn::Resample::kDown);
  const Tensor e1 = b_enc1_[1](b_enc1_[0](p));
  const Tensor u = nn::resize_bilinear(e1, e0.dim(2), e0.dim(3));
  return b_dec0_(nn::concat_channels({u, e0}));
}

std::vector<PyramidLevel> SynthesisModel::build_pyramid(const std::vector<ImageBuffer>& references,
                                                        const std::vector<FlowField>& flows, int levels) const {
  require(!references.empty() && references.size() == flows.size(), "build_pyramid: ragged batch");
  require(levels >= 1, "build_pyramid: levels must be >= 1");
  for (std::size_t i = 0; i < flows.size(); ++i) {
    require(flows[i].width() == references[i].width() && flows[i].height() == references[i].height(),
            "build_pyramid: flow and frame sizes differ");
  }
  std::vector<PyramidLevel> out;
  for (int l = levels - 1; l >= 0; --l) {
    PyramidLevel lv;
    lv.level = l;
    lv.scale = 1.0 / static_cast<double>(1 << l);
    std::vector<ImageBuffer> ims;
    std::vector<FlowField> fls;
    for (std::size_t i = 0; i < references.size(); ++i) {
      ims.push_back(l == 0 ? references[i] : resize(references[i], lv.scale));
      fls.push_back(l == 0 ? flows[i] : resize(flows[i], lv.scale));
    }
    lv.image = images_to_tensor(ims);
    lv.flow = flows_tensor(fls, 1.0);
    const Tensor pull = flows_tensor(fls, -1.0);
    lv.features = encode(lv.image);
    lv.warped_image = nn::warp_bilinear(lv.image, pull);
    lv.warped_features = nn::warp_bilinear(lv.features, pull);
    out.push_back(std::move(lv));
  }
  return out;
}

Tensor SynthesisModel::forward(const std::vector<ImageBuffer>& references, const std::vector<FlowField>& flows) const {
  require(!references.empty(), "fvs: empty batch");
  const int L = num_scales(references[0].height(), references[0].width(), config_.r_min);
  const auto levels = build_pyramid(references, flows, L);
  Tensor x;
  for (const auto& lv : levels) {
    const int n = lv.image.dim(0), h = lv.image.dim(2), w = lv.image.dim(3);
    const Tensor y = x.defined() ? nn::resize_bilinear(x, h, w) : lv.warped_image;
    Tensor residual, logits;
    if (override_) {
      residual = Tensor::full({n, 3, h, w}, static_cast<Real>(override_->residual));
      logits = Tensor::full({n, 1, h, w}, static_cast<Real>(override_->blend_logit));
    } else {
      const Tensor in =
          nn::concat_channels({y, lv.warped_features, nn::scale(lv.flow, static_cast<Real>(1.0 / config_.flow_scale))});
      const Tensor out = decoder_(fuse(in));
      residual = nn::slice_channels(out, 0, 3);
      logits = nn::slice_channels(out, 3, 1);
    }
    x = blend_scale(lv.warped_image, residual, logits);
  }
  return x;
}

ImageBuffer synthesize_frame(const SynthesisModel& model, const ImageBuffer& reference, const FlowField& flow) {
  nn::NoGradGuard guard;
  return tensor_to_image(model.forward({reference}, {flow}), 0);
}

}  // namespace magniflow::fvs
