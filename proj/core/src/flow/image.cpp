#include "magniflow/flow/image.hpp"

#include <algorithm>
#include <cmath>

#include "magniflow/errors.hpp"

namespace magniflow {

namespace {

float clamp_unit(float x) {
  if (std::isnan(x)) return 0.0f;
  return std::clamp(x, 0.0f, 1.0f);
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels)
    : ImageBuffer(width, height, channels,
                  std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                         std::max(height, 0) * std::max(channels, 0),
                                     0.0f)) {}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  require(width >= 1 && height >= 1, "ImageBuffer: dimensions must be >= 1");
  require(channels == 1 || channels == 3, "ImageBuffer: channels must be 1 or 3");
  require(data_.size() == static_cast<std::size_t>(width) * height * channels,
          "ImageBuffer: data size mismatch");
  for (auto& x : data_) x = clamp_unit(x);
}

ImageBuffer ImageBuffer::filled(int width, int height, int channels, float value) {
  return ImageBuffer(width, height, channels,
                     std::vector<float>(static_cast<std::size_t>(width) * height * channels, value));
}

void ImageBuffer::set(int x, int y, int c, float value) {
  data_[index(x, y, c)] = clamp_unit(value);
}

std::vector<float> ImageBuffer::luminance() const {
  const auto n = static_cast<std::size_t>(width_) * height_;
  std::vector<float> out(n);
  if (channels_ == 1) {
    std::copy(data_.begin(), data_.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299f * data_[3 * i] + 0.587f * data_[3 * i + 1] + 0.114f * data_[3 * i + 2];
  }
  return out;
}

}  // namespace magniflow
