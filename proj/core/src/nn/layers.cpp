#include "magniflow/nn/layers.hpp"

#include <cmath>

#include "magniflow/errors.hpp"

namespace magniflow::nn {

Tensor ParameterSet::add(const std::string& name, const Shape& shape, std::vector<Real> values) {
  for (const auto& n : names) require(n != name, "ParameterSet: duplicate parameter " + name);
  auto t = Tensor::parameter(shape, std::move(values));
  names.push_back(name);
  params.push_back(t);
  first_moment.emplace_back(t.numel(), Real(0));
  second_moment.emplace_back(t.numel(), Real(0));
  return t;
}

const Tensor& ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return params[i];
  }
  throw ContractError("ParameterSet: no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params) p.zero_grad();
}

LayerBuilder::LayerBuilder(ParameterSet& set, std::uint64_t seed, std::string prefix)
    : set_(&set), rng_(std::make_shared<Rng>(seed)), prefix_(std::move(prefix)) {}

LayerBuilder LayerBuilder::scoped(const std::string& name) {
  LayerBuilder child = *this;
  child.prefix_ = qualified(name);
  return child;
}

std::string LayerBuilder::qualified(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

std::vector<Real> LayerBuilder::kaiming(std::size_t count, int fan_in) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<Real> w(count);
  for (auto& x : w) x = static_cast<Real>(uniform(*rng_, -bound, bound));
  return w;
}

Conv2d LayerBuilder::conv(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
                          double gain) {
  require(in_channels > 0 && out_channels > 0 && kernel > 0 && kernel % 2 == 1, "conv: invalid geometry");
  const Shape ws{out_channels, in_channels, kernel, kernel};
  Conv2d c;
  auto w = kaiming(numel(ws), in_channels * kernel * kernel);
  for (auto& x : w) x = static_cast<Real>(x * gain);
  c.weight = set_->add(qualified(name) + ".weight", ws, std::move(w));
  c.bias = set_->add(qualified(name) + ".bias", {out_channels}, std::vector<Real>(out_channels, Real(0)));
  c.stride = stride;
  c.padding = kernel / 2;
  return c;
}

Conv2d LayerBuilder::zero_conv(const std::string& name, int in_channels, int out_channels, int kernel) {
  const Shape ws{out_channels, in_channels, kernel, kernel};
  Conv2d c;
  c.weight = set_->add(qualified(name) + ".weight", ws, std::vector<Real>(numel(ws), Real(0)));
  c.bias = set_->add(qualified(name) + ".bias", {out_channels}, std::vector<Real>(out_channels, Real(0)));
  c.padding = kernel / 2;
  return c;
}

Linear LayerBuilder::linear(const std::string& name, int in_features, int out_features) {
  require(in_features > 0 && out_features > 0, "linear: invalid geometry");
  const Shape ws{out_features, in_features};
  Linear l;
  l.weight = set_->add(qualified(name) + ".weight", ws, kaiming(numel(ws), in_features));
  l.bias = set_->add(qualified(name) + ".bias", {out_features}, std::vector<Real>(out_features, Real(0)));
  return l;
}

GroupNorm LayerBuilder::group_norm(const std::string& name, int channels, int groups) {
  require(groups >= 1 && channels % groups == 0, "group_norm: channels not divisible by groups");
  GroupNorm g;
  g.groups = groups;
  g.gain = set_->add(qualified(name) + ".gain", {channels}, std::vector<Real>(channels, Real(1)));
  g.shift = set_->add(qualified(name) + ".shift", {channels}, std::vector<Real>(channels, Real(0)));
  return g;
}

int group_count(int channels, int preferred) {
  for (int g = std::min(preferred, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace magniflow::nn
