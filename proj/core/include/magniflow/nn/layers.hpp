#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "magniflow/nn/ops.hpp"
#include "magniflow/rng.hpp"

namespace magniflow::nn {

// Named trainable tensors plus the AdamW state that travels with them.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
  std::int64_t step = 0;

  Tensor add(const std::string& name, const Shape& shape, std::vector<Real> values);
  // Throws ContractError if absent.
  const Tensor& find(const std::string& name) const;
  std::size_t size() const { return params.size(); }
  std::size_t scalar_count() const;
  void zero_grad();
};

struct Conv2d {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]
  int stride = 1;
  int padding = 0;
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct GroupNorm {
  int groups = 1;
  Tensor gain;
  Tensor shift;
  Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gain, shift); }
};

// Registers layers into a ParameterSet under "prefix.name" and initialises
// them from one seeded stream in construction order. Weights are
// Kaiming-uniform over the fan-in, biases zero.
class LayerBuilder {
 public:
  LayerBuilder(ParameterSet& set, std::uint64_t seed, std::string prefix = "");

  LayerBuilder scoped(const std::string& name);

  // gain scales the Kaiming bound; small gains give near-silent output heads
  // that still pass gradients upstream from the first step.
  Conv2d conv(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1,
              double gain = 1.0);
  // Same shape as conv() but all weights and biases zero.
  Conv2d zero_conv(const std::string& name, int in_channels, int out_channels, int kernel);
  Linear linear(const std::string& name, int in_features, int out_features);
  GroupNorm group_norm(const std::string& name, int channels, int groups);

 private:
  std::string qualified(const std::string& name) const;
  std::vector<Real> kaiming(std::size_t count, int fan_in);

  ParameterSet* set_;
  std::shared_ptr<Rng> rng_;  // shared with scoped children
  std::string prefix_;
};

// Largest group count <= preferred that divides channels.
int group_count(int channels, int preferred = 8);

}  // namespace magniflow::nn
