#pragma once

#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"

namespace magniflow {

inline constexpr double kPsnrCap = 99.0;

// Mean endpoint error (the motion error of magnified flows).
double flow_epe(const FlowField& candidate, const FlowField& reference);

struct ImageQuality {
  double psnr = 0.0;  // dB, peak 1.0, capped at kPsnrCap
  double ssim = 0.0;
};

double psnr(const ImageBuffer& candidate, const ImageBuffer& reference);
// Luminance SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// averaged over all window positions fully inside the image. Images smaller
// than the window use the largest odd window that fits.
double ssim(const ImageBuffer& candidate, const ImageBuffer& reference);
ImageQuality image_metrics(const ImageBuffer& candidate, const ImageBuffer& reference);

struct MetricReport {
  std::vector<double> epe;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double epe_mean = 0.0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;

  void add_flow(double e);
  void add_image(const ImageQuality& q);
  void finalize();
};

}  // namespace magniflow
