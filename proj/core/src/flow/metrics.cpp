#include "magniflow/flow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "magniflow/errors.hpp"

namespace magniflow {

double flow_epe(const FlowField& candidate, const FlowField& reference) {
  require(candidate.width() == reference.width() && candidate.height() == reference.height(),
          "flow_epe: dimension mismatch");
  const auto cu = candidate.u(), cv = candidate.v(), ru = reference.u(), rv = reference.v();
  double sum = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    sum += std::hypot(static_cast<double>(cu[i]) - ru[i], static_cast<double>(cv[i]) - rv[i]);
  }
  return sum / static_cast<double>(candidate.size());
}

namespace {

void require_same(const ImageBuffer& a, const ImageBuffer& b, const char* who) {
  require(a.width() == b.width() && a.height() == b.height() && a.channels() == b.channels(),
          std::string(who) + ": dimension mismatch");
}

}  // namespace

double psnr(const ImageBuffer& candidate, const ImageBuffer& reference) {
  require_same(candidate, reference, "psnr");
  const auto a = candidate.data(), b = reference.data();
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const ImageBuffer& candidate, const ImageBuffer& reference) {
  require_same(candidate, reference, "ssim");
  const int w = candidate.width(), h = candidate.height();
  int win = std::min({11, w, h});
  if (win % 2 == 0) --win;
  const int r = win / 2;
  std::vector<double> kernel(win);
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    kernel[i] = std::exp(-0.5 * (i - r) * (i - r) / (1.5 * 1.5));
    ksum += kernel[i];
  }
  for (auto& k : kernel) k /= ksum;

  const auto x = candidate.luminance();
  const auto y = reference.luminance();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  long count = 0;
  for (int cy = r; cy < h - r; ++cy) {
    for (int cx = r; cx < w - r; ++cx) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = kernel[dy + r] * kernel[dx + r];
          const auto i = static_cast<std::size_t>(cy + dy) * w + (cx + dx);
          mx += wt * x[i];
          my += wt * y[i];
          sxx += wt * x[i] * x[i];
          syy += wt * y[i] * y[i];
          sxy += wt * x[i] * y[i];
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

ImageQuality image_metrics(const ImageBuffer& candidate, const ImageBuffer& reference) {
  return {psnr(candidate, reference), ssim(candidate, reference)};
}

void MetricReport::add_flow(double e) { epe.push_back(e); }

void MetricReport::add_image(const ImageQuality& q) {
  psnr.push_back(q.psnr);
  ssim.push_back(q.ssim);
}

void MetricReport::finalize() {
  auto mean = [](const std::vector<double>& xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  };
  epe_mean = mean(epe);
  psnr_mean = mean(psnr);
  ssim_mean = mean(ssim);
}

}  // namespace magniflow
