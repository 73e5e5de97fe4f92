#pragma once

#include <span>
#include <vector>

namespace magniflow {

// Raster with 1 or 3 interleaved channels, values in [0,1], row-major.
class ImageBuffer {
 public:
  ImageBuffer(int width, int height, int channels);
  // Values are clamped to [0,1]; NaN maps to 0.
  ImageBuffer(int width, int height, int channels, std::vector<float> data);

  static ImageBuffer filled(int width, int height, int channels, float value);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  float at(int x, int y, int c) const { return data_[index(x, y, c)]; }
  void set(int x, int y, int c, float value);

  std::span<const float> data() const { return data_; }

  // Rec. 601 luma for 3-channel images, the single channel otherwise.
  std::vector<float> luminance() const;

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_;
  int height_;
  int channels_;
  std::vector<float> data_;
};

}  // namespace magniflow
