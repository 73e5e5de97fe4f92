#pragma once

#include <span>
#include <vector>

namespace magniflow {

struct FlowVector {
  float u = 0.0f;
  float v = 0.0f;
};

// Dense displacement field in pixels per frame, row-major. Values are always
// finite; every mutating entry point checks this.
class FlowField {
 public:
  FlowField(int width, int height);
  FlowField(int width, int height, std::vector<float> u, std::vector<float> v);

  static FlowField constant(int width, int height, float u, float v);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return u_.size(); }

  FlowVector at(int x, int y) const {
    const auto i = index(x, y);
    return {u_[i], v_[i]};
  }
  void set(int x, int y, FlowVector f);

  std::span<const float> u() const { return u_; }
  std::span<const float> v() const { return v_; }

  FlowField scaled(float factor) const;
  FlowField negated() const { return scaled(-1.0f); }

  bool operator==(const FlowField&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_;
  int height_;
  std::vector<float> u_;
  std::vector<float> v_;
};

}  // namespace magniflow
