#pragma once

#include <optional>
#include <span>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"

namespace magniflow {

// output(p) = bilinear sample of image at p + flow(p). Sample coordinates are
// clamped to the image, so reads past the border repeat the edge pixel.
// No sign convention is implied; callers decide which way the flow points.
ImageBuffer warp_backward(const ImageBuffer& image, const FlowField& flow);
FlowField warp_backward(const FlowField& field, const FlowField& flow);

// Bicubic (Keys, a = -0.5) resampling with half-pixel centers. The factor must
// be a power of two; shrinking floors the output extent. Flows are also
// multiplied by the factor so values stay in pixels at the new resolution.
ImageBuffer resize(const ImageBuffer& image, double factor);
FlowField resize(const FlowField& flow, double factor);

// Separable Gaussian with radius ceil(3*sigma) and symmetric (edge-including)
// reflection at the borders. sigma == 0 returns the input unchanged.
ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma);
FlowField gaussian_blur(const FlowField& flow, double sigma);

// Hue from direction, saturation from magnitude / max_norm (clamped), full
// value: zero motion renders white. max_norm defaults to the largest magnitude.
ImageBuffer flow_to_color(const FlowField& flow, std::optional<double> max_norm = std::nullopt);

namespace detail {

// Plane-level kernels shared by images, flows and the flow estimator.
std::vector<float> blur_plane(std::span<const float> plane, int width, int height, double sigma);
std::vector<float> resize_plane(std::span<const float> plane, int width, int height,
                                int out_width, int out_height);
float sample_bilinear(std::span<const float> plane, int width, int height, float x, float y);
std::vector<float> gaussian_kernel(double sigma);
int reflect_index(int i, int n);
double cubic_weight(double t);

}  // namespace detail

}  // namespace magniflow
