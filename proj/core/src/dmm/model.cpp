#include "magniflow/dmm/model.hpp"

#include <json.hpp>

#include "magniflow/dmm/convex_upsample.hpp"
#include "magniflow/dmm/hhme.hpp"
#include "magniflow/errors.hpp"

namespace magniflow::dmm {

using nn::Real;
using nn::Tensor;

namespace {

int groups_for(int channels) { return nn::group_count(channels, std::max(1, std::min(8, channels / 4))); }

}  // namespace

void DmmConfig::validate() const {
  for (int w : widths) require(w >= 1, "dmm: widths must be positive");
  require(harmonics >= 1, "dmm: K must be >= 1");
  require(alpha_max > 0, "dmm: alpha_max must be positive");
  require(T >= 2, "dmm: T must be >= 2");
  require(f_max > 0, "dmm: F_max must be positive");
  require(embed_dim >= 1, "dmm: embed_dim must be positive");
  require(time_features >= 2 && time_features % 2 == 0, "dmm: time_features must be even");
  require(sample_steps >= 1 && sample_steps <= T, "dmm: sample_steps must lie in [1, T]");
  require(head_gain > 0, "dmm: head_gain must be positive");
}

std::string DmmConfig::to_json() const {
  nlohmann::json j;
  j["widths"] = widths;
  j["harmonics"] = harmonics;
  j["alpha_max"] = alpha_max;
  j["T"] = T;
  j["f_max"] = f_max;
  j["embed_dim"] = embed_dim;
  j["time_features"] = time_features;
  j["sample_steps"] = sample_steps;
  j["head_gain"] = head_gain;
  return j.dump();
}

DmmConfig DmmConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DmmConfig c;
  c.widths = j.at("widths").get<std::array<int, 3>>();
  c.harmonics = j.at("harmonics");
  c.alpha_max = j.at("alpha_max");
  c.T = j.at("T");
  c.f_max = j.at("f_max");
  c.embed_dim = j.at("embed_dim");
  c.time_features = j.at("time_features");
  c.sample_steps = j.at("sample_steps");
  c.head_gain = j.value("head_gain", c.head_gain);
  c.validate();
  return c;
}

MagnifierModel::CondBlock MagnifierModel::make_block(nn::LayerBuilder& root, const std::string& name, int cin,
                                                     int cout) {
  auto b = root.scoped(name);
  CondBlock blk;
  blk.norm1 = b.group_norm("norm1", cin, groups_for(cin));
  blk.conv1 = b.conv("conv1", cin, cout, 3);
  blk.emb = b.linear("emb", config_.embed_dim, cout);
  blk.norm2 = b.group_norm("norm2", cout, groups_for(cout));
  blk.conv2 = b.conv("conv2", cout, cout, 3);
  if (cin != cout) blk.skip = b.conv("skip", cin, cout, 1);
  return blk;
}

MagnifierModel::MagnifierModel(const DmmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::LayerBuilder b(params_, seed);
  const auto [w0, w1, w2] = config_.widths;
  const int emb_in = 2 * config_.harmonics + 1;

  down_[0] = b.conv("down.0", 2, w0, 3, 2);
  down_[1] = b.conv("down.1", w0, w0, 3, 2);
  down_[2] = b.conv("down.2", w0, w0, 3, 2);
  fuse_ = b.conv("fuse", 2 * w0, w0, 1);
  embed_alpha_ = b.linear("embed.alpha", emb_in, config_.embed_dim);
  embed_time_ = b.linear("embed.time", config_.time_features, config_.embed_dim);
  residual_ = make_block(b, "residual", w0, w0);
  enc_[0] = make_block(b, "unet.enc0", w0, w0);
  enc_[1] = make_block(b, "unet.enc1", w0, w1);
  enc_[2] = make_block(b, "unet.enc2", w1, w2);
  dec_[0] = make_block(b, "unet.dec1", w2 + w1, w1);
  dec_[1] = make_block(b, "unet.dec0", w1 + w0, w0);
  out_norm_ = b.group_norm("unet.out_norm", w0, groups_for(w0));
  out_flow_ = b.conv("unet.out", w0, 2, 3, 1, config_.head_gain);
  mask_context_ = b.conv("mask.context", w0 + 2, w0, 3);
  mask_emb_ = b.linear("mask.emb", config_.embed_dim, w0);
  // Zero logits start the mask block at uniform 1/9 weights.
  mask_out_ = b.conv("mask.out", w0, kMaskChannels, 1, 1, config_.head_gain);
}

std::pair<Tensor, Tensor> MagnifierModel::apply(const CondBlock& blk, const Tensor& x, const Tensor& emb) const {
  Tensor h = blk.conv1(nn::silu(blk.norm1(x)));
  // The shift goes after the normalization so that it is not removed by it
  // on the tiny latent grids.
  h = nn::add_channel_bias(blk.norm2(h), blk.emb(nn::silu(emb)));
  h = blk.conv2(nn::silu(h));
  Tensor skip = blk.skip.weight.defined() ? blk.skip(x) : x;
  return {nn::add(skip, h), h};
}

Tensor MagnifierModel::downsample(const Tensor& x) const {
  if (x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0) return nn::resample2x(x, nn::Resample::kDown);
  return x;
}

Tensor MagnifierModel::embedding(const std::vector<double>& alpha, const std::vector<int>& t) const {
  require(alpha.size() == t.size() && !alpha.empty(), "dmm: alpha and t must have one entry per sample");
  const int n = static_cast<int>(alpha.size());
  const int k = 2 * config_.harmonics + 1;
  std::vector<Real> a, tf;
  for (int i = 0; i < n; ++i) {
    require(t[i] >= 0 && t[i] <= config_.T, "dmm: timestep out of range");
    for (double v : hhme_features(alpha[i], config_.harmonics, config_.alpha_max)) a.push_back(static_cast<Real>(v));
    for (double v : timestep_features(t[i], config_.time_features)) tf.push_back(static_cast<Real>(v));
  }
  return nn::add(embed_alpha_(Tensor::from({n, k}, std::move(a))),
                 embed_time_(Tensor::from({n, config_.time_features}, std::move(tf))));
}

Tensor MagnifierModel::forward(const Tensor& x_t, const Tensor& cond, const std::vector<double>& alpha,
                               const std::vector<int>& t) const {
  require(x_t.rank() == 4 && x_t.dim(1) == 2, "dmm: x_t must be [N, 2, H, W]");
  require(cond.shape() == x_t.shape(), "dmm: cond and x_t shapes differ");
  require(x_t.dim(2) % kUpFactor == 0 && x_t.dim(3) % kUpFactor == 0,
          "dmm: flow dimensions must be divisible by 8, got " + nn::to_string(x_t.shape()));
  require(static_cast<int>(alpha.size()) == x_t.dim(0), "dmm: one alpha per sample required");

  const Tensor emb = embedding(alpha, t);
  auto encode = [&](const Tensor& x) {
    Tensor h = nn::silu(down_[0](x));
    h = nn::silu(down_[1](h));
    return nn::silu(down_[2](h));
  };
  const Tensor f = fuse_(nn::concat_channels({encode(cond), encode(x_t)}));
  const auto [r, r_skip] = apply(residual_, f, emb);

  const Tensor e0 = apply(enc_[0], r, emb).first;
  const Tensor e1 = apply(enc_[1], downsample(e0), emb).first;
  const Tensor e2 = apply(enc_[2], downsample(e1), emb).first;
  const Tensor u1 = nn::resize_bilinear(e2, e1.dim(2), e1.dim(3));
  const Tensor d1 = apply(dec_[0], nn::concat_channels({u1, e1}), emb).first;
  const Tensor u0 = nn::resize_bilinear(d1, e0.dim(2), e0.dim(3));
  const Tensor d0 = apply(dec_[1], nn::concat_channels({u0, e0}), emb).first;
  const Tensor coarse = out_flow_(nn::silu(out_norm_(d0)));

  Tensor m = mask_context_(nn::concat_channels({r_skip, coarse}));
  m = nn::silu(nn::add_channel_bias(m, mask_emb_(nn::silu(emb))));
  const Tensor weights = normalize_mask(mask_out_(m));
  return convex_upsample(coarse, weights);
}

Tensor denoiser_forward(const MagnifierModel& model, const Tensor& x_t, const Tensor& cond,
                        const std::vector<double>& alpha, const std::vector<int>& t) {
  return model.forward(x_t, cond, alpha, t);
}

Tensor flows_to_tensor(const std::vector<FlowField>& flows, double scale) {
  require(!flows.empty() && scale > 0, "flows_to_tensor: empty batch or bad scale");
  const int w = flows[0].width(), h = flows[0].height();
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  std::vector<Real> data;
  data.reserve(flows.size() * 2 * hw);
  for (const auto& f : flows) {
    require(f.width() == w && f.height() == h, "flows_to_tensor: flows differ in size");
    for (float x : f.u()) data.push_back(static_cast<Real>(x / scale));
    for (float x : f.v()) data.push_back(static_cast<Real>(x / scale));
  }
  return Tensor::from({static_cast<int>(flows.size()), 2, h, w}, std::move(data));
}

FlowField tensor_to_flow(const Tensor& t, int index, double scale) {
  require(t.rank() == 4 && t.dim(1) == 2 && index >= 0 && index < t.dim(0), "tensor_to_flow: bad tensor/index");
  const int h = t.dim(2), w = t.dim(3);
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  const Real* base = t.data().data() + static_cast<std::size_t>(index) * 2 * hw;
  std::vector<float> u(hw), v(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    u[i] = static_cast<float>(base[i] * scale);
    v[i] = static_cast<float>(base[hw + i] * scale);
  }
  return FlowField(w, h, std::move(u), std::move(v));
}

}  // namespace magniflow::dmm
