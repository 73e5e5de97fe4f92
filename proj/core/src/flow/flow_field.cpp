#include "magniflow/flow/flow_field.hpp"

#include <algorithm>
#include <cmath>

#include "magniflow/errors.hpp"

namespace magniflow {

namespace {

bool all_finite(const std::vector<float>& xs) {
  return std::all_of(xs.begin(), xs.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

FlowField::FlowField(int width, int height)
    : width_(width), height_(height) {
  require(width >= 1 && height >= 1, "FlowField: dimensions must be >= 1");
  u_.assign(static_cast<std::size_t>(width) * height, 0.0f);
  v_.assign(u_.size(), 0.0f);
}

FlowField::FlowField(int width, int height, std::vector<float> u, std::vector<float> v)
    : width_(width), height_(height), u_(std::move(u)), v_(std::move(v)) {
  require(width >= 1 && height >= 1, "FlowField: dimensions must be >= 1");
  const auto n = static_cast<std::size_t>(width) * height;
  require(u_.size() == n && v_.size() == n, "FlowField: component size mismatch");
  require(all_finite(u_) && all_finite(v_), "FlowField: non-finite value");
}

FlowField FlowField::constant(int width, int height, float u, float v) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0);
  return FlowField(width, height, std::vector<float>(n, u), std::vector<float>(n, v));
}

void FlowField::set(int x, int y, FlowVector f) {
  require(std::isfinite(f.u) && std::isfinite(f.v), "FlowField::set: non-finite value");
  const auto i = index(x, y);
  u_[i] = f.u;
  v_[i] = f.v;
}

FlowField FlowField::scaled(float factor) const {
  auto u = u_;
  auto v = v_;
  for (auto& x : u) x *= factor;
  for (auto& x : v) x *= factor;
  return FlowField(width_, height_, std::move(u), std::move(v));
}

}  // namespace magniflow
