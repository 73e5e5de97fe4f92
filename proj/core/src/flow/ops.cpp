#include "magniflow/flow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "magniflow/errors.hpp"

namespace magniflow {

namespace detail {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  std::vector<float> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

std::vector<float> blur_plane(std::span<const float> plane, int width, int height, double sigma) {
  std::vector<float> out(plane.begin(), plane.end());
  if (sigma <= 0.0) return out;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<float> tmp(out.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * plane[static_cast<std::size_t>(y) * width + reflect_index(x + k, width)];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp[static_cast<std::size_t>(reflect_index(y + k, height)) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
  return out;
}

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<float> resize_plane(std::span<const float> plane, int width, int height,
                                int out_width, int out_height) {
  const double sx = static_cast<double>(width) / out_width;
  const double sy = static_cast<double>(height) / out_height;
  // Horizontal pass into (height x out_width), then vertical.
  std::vector<float> tmp(static_cast<std::size_t>(height) * out_width);
  for (int x = 0; x < out_width; ++x) {
    const double src = (x + 0.5) * sx - 0.5;
    const int base = static_cast<int>(std::floor(src));
    double w[4];
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      idx[k] = std::clamp(base - 1 + k, 0, width - 1);
      w[k] = cubic_weight(src - (base - 1 + k));
    }
    for (int y = 0; y < height; ++y) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += w[k] * plane[static_cast<std::size_t>(y) * width + idx[k]];
      tmp[static_cast<std::size_t>(y) * out_width + x] = static_cast<float>(acc);
    }
  }
  std::vector<float> out(static_cast<std::size_t>(out_height) * out_width);
  for (int y = 0; y < out_height; ++y) {
    const double src = (y + 0.5) * sy - 0.5;
    const int base = static_cast<int>(std::floor(src));
    double w[4];
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      idx[k] = std::clamp(base - 1 + k, 0, height - 1);
      w[k] = cubic_weight(src - (base - 1 + k));
    }
    for (int x = 0; x < out_width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += w[k] * tmp[static_cast<std::size_t>(idx[k]) * out_width + x];
      out[static_cast<std::size_t>(y) * out_width + x] = static_cast<float>(acc);
    }
  }
  return out;
}

float sample_bilinear(std::span<const float> plane, int width, int height, float x, float y) {
  x = std::clamp(x, 0.0f, static_cast<float>(width - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const float fx = x - x0;
  const float fy = y - y0;
  const auto at = [&](int xx, int yy) { return plane[static_cast<std::size_t>(yy) * width + xx]; };
  const float top = at(x0, y0) * (1.0f - fx) + at(x1, y0) * fx;
  const float bottom = at(x0, y1) * (1.0f - fx) + at(x1, y1) * fx;
  return top * (1.0f - fy) + bottom * fy;
}

}  // namespace detail

namespace {

std::vector<float> channel_plane(const ImageBuffer& image, int c) {
  const auto n = static_cast<std::size_t>(image.width()) * image.height();
  std::vector<float> plane(n);
  const auto data = image.data();
  for (std::size_t i = 0; i < n; ++i) plane[i] = data[i * image.channels() + c];
  return plane;
}

ImageBuffer from_planes(int width, int height, const std::vector<std::vector<float>>& planes) {
  const int channels = static_cast<int>(planes.size());
  const auto n = static_cast<std::size_t>(width) * height;
  std::vector<float> data(n * channels);
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) data[i * channels + c] = planes[c][i];
  }
  return ImageBuffer(width, height, channels, std::move(data));
}

int scaled_extent(int extent, double factor) {
  const double log2f = std::log2(factor);
  require(factor > 0.0 && std::abs(log2f - std::round(log2f)) < 1e-12,
          "resize: factor must be a power of two");
  const int out = factor >= 1.0 ? static_cast<int>(std::lround(extent * factor))
                                : static_cast<int>(std::floor(extent * factor));
  require(out >= 1, "resize: resulting dimension is zero");
  return out;
}

std::vector<float> warp_plane(std::span<const float> plane, const FlowField& flow) {
  const int w = flow.width();
  const int h = flow.height();
  std::vector<float> out(plane.size());
  const auto u = flow.u();
  const auto v = flow.v();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      out[i] = detail::sample_bilinear(plane, w, h, static_cast<float>(x) + u[i],
                                       static_cast<float>(y) + v[i]);
    }
  }
  return out;
}

}  // namespace

ImageBuffer warp_backward(const ImageBuffer& image, const FlowField& flow) {
  require(image.width() == flow.width() && image.height() == flow.height(),
          "warp_backward: image and flow dimensions differ");
  std::vector<std::vector<float>> planes;
  for (int c = 0; c < image.channels(); ++c) planes.push_back(warp_plane(channel_plane(image, c), flow));
  return from_planes(image.width(), image.height(), planes);
}

FlowField warp_backward(const FlowField& field, const FlowField& flow) {
  require(field.width() == flow.width() && field.height() == flow.height(),
          "warp_backward: field and flow dimensions differ");
  return FlowField(field.width(), field.height(), warp_plane(field.u(), flow), warp_plane(field.v(), flow));
}

ImageBuffer resize(const ImageBuffer& image, double factor) {
  const int ow = scaled_extent(image.width(), factor);
  const int oh = scaled_extent(image.height(), factor);
  std::vector<std::vector<float>> planes;
  for (int c = 0; c < image.channels(); ++c) {
    planes.push_back(detail::resize_plane(channel_plane(image, c), image.width(), image.height(), ow, oh));
  }
  return from_planes(ow, oh, planes);
}

FlowField resize(const FlowField& flow, double factor) {
  const int ow = scaled_extent(flow.width(), factor);
  const int oh = scaled_extent(flow.height(), factor);
  auto u = detail::resize_plane(flow.u(), flow.width(), flow.height(), ow, oh);
  auto v = detail::resize_plane(flow.v(), flow.width(), flow.height(), ow, oh);
  const auto f = static_cast<float>(factor);
  for (auto& x : u) x *= f;
  for (auto& x : v) x *= f;
  return FlowField(ow, oh, std::move(u), std::move(v));
}

ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma) {
  require(sigma >= 0.0, "gaussian_blur: sigma must be >= 0");
  std::vector<std::vector<float>> planes;
  for (int c = 0; c < image.channels(); ++c) {
    planes.push_back(detail::blur_plane(channel_plane(image, c), image.width(), image.height(), sigma));
  }
  return from_planes(image.width(), image.height(), planes);
}

FlowField gaussian_blur(const FlowField& flow, double sigma) {
  require(sigma >= 0.0, "gaussian_blur: sigma must be >= 0");
  return FlowField(flow.width(), flow.height(),
                   detail::blur_plane(flow.u(), flow.width(), flow.height(), sigma),
                   detail::blur_plane(flow.v(), flow.width(), flow.height(), sigma));
}

ImageBuffer flow_to_color(const FlowField& flow, std::optional<double> max_norm) {
  const auto u = flow.u();
  const auto v = flow.v();
  double norm = max_norm.value_or(0.0);
  if (!max_norm) {
    for (std::size_t i = 0; i < flow.size(); ++i) norm = std::max(norm, std::hypot<double>(u[i], v[i]));
    if (norm == 0.0) norm = 1.0;
  }
  require(norm > 0.0, "flow_to_color: max_norm must be positive");
  std::vector<float> rgb(flow.size() * 3);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const double mag = std::hypot<double>(u[i], v[i]);
    const double sat = std::min(mag / norm, 1.0);
    double hue = std::atan2(static_cast<double>(v[i]), static_cast<double>(u[i])) / (2.0 * std::numbers::pi);
    if (hue < 0.0) hue += 1.0;
    // HSV -> RGB with V = 1.
    const double h6 = hue * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = 1.0 - sat;
    const double q = 1.0 - sat * f;
    const double t = 1.0 - sat * (1.0 - f);
    double r = 1.0, g = 1.0, b = 1.0;
    switch (sector) {
      case 0: r = 1; g = t; b = p; break;
      case 1: r = q; g = 1; b = p; break;
      case 2: r = p; g = 1; b = t; break;
      case 3: r = p; g = q; b = 1; break;
      case 4: r = t; g = p; b = 1; break;
      default: r = 1; g = p; b = q; break;
    }
    rgb[3 * i] = static_cast<float>(r);
    rgb[3 * i + 1] = static_cast<float>(g);
    rgb[3 * i + 2] = static_cast<float>(b);
  }
  return ImageBuffer(flow.width(), flow.height(), 3, std::move(rgb));
}

}  // namespace magniflow
