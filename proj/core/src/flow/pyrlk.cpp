#include "magniflow/flow/pyrlk.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "magniflow/errors.hpp"
#include "magniflow/flow/ops.hpp"

namespace magniflow {

namespace {

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float at(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

Plane half(const Plane& p) {
  const auto blurred = detail::blur_plane(p.data, p.width, p.height, 1.0);
  Plane out{std::max(1, p.width / 2), std::max(1, p.height / 2), {}};
  out.data.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = std::min(2 * x + dx, p.width - 1);
          const int sy = std::min(2 * y + dy, p.height - 1);
          acc += blurred[static_cast<std::size_t>(sy) * p.width + sx];
        }
      }
      out.data[static_cast<std::size_t>(y) * out.width + x] = static_cast<float>(acc / 4.0);
    }
  }
  return out;
}

// Window sum with edge clamping, separable.
std::vector<double> box_sum(const std::vector<double>& src, int w, int h, int radius) {
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += src[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

FlowField estimate_flow_pyrlk(const ImageBuffer& frame_a, const ImageBuffer& frame_b,
                              const PyrLkOptions& options) {
  require(frame_a.width() == frame_b.width() && frame_a.height() == frame_b.height(),
          "estimate_flow_pyrlk: frame dimensions differ");
  require(options.levels >= 1, "estimate_flow_pyrlk: levels must be >= 1");
  require(options.window >= 3 && options.window % 2 == 1, "estimate_flow_pyrlk: window must be odd and >= 3");

  std::vector<Plane> pyr_a{{frame_a.width(), frame_a.height(), frame_a.luminance()}};
  std::vector<Plane> pyr_b{{frame_b.width(), frame_b.height(), frame_b.luminance()}};
  for (int l = 1; l < options.levels; ++l) {
    if (pyr_a.back().width < 2 * options.window || pyr_a.back().height < 2 * options.window) break;
    pyr_a.push_back(half(pyr_a.back()));
    pyr_b.push_back(half(pyr_b.back()));
  }

  const int radius = options.window / 2;
  const double area = static_cast<double>(options.window) * options.window;
  std::vector<float> fu, fv;
  std::vector<unsigned char> degenerate;

  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const Plane& a = pyr_a[level];
    const Plane& b = pyr_b[level];
    const int w = a.width, h = a.height;
    const auto n = static_cast<std::size_t>(w) * h;
    if (fu.empty()) {
      fu.assign(n, 0.0f);
      fv.assign(n, 0.0f);
    } else {
      const int pw = pyr_a[level + 1].width, ph = pyr_a[level + 1].height;
      fu = detail::resize_plane(fu, pw, ph, w, h);
      fv = detail::resize_plane(fv, pw, ph, w, h);
      const float sx = static_cast<float>(w) / pw, sy = static_cast<float>(h) / ph;
      for (auto& x : fu) x *= sx;
      for (auto& x : fv) x *= sy;
    }
    degenerate.assign(n, 0);

    // Structure tensor of the reference, fixed across iterations.
    std::vector<double> gx(n), gy(n), ixx(n), ixy(n), iyy(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        gx[i] = 0.5 * (a.at(x + 1, y) - a.at(x - 1, y));
        gy[i] = 0.5 * (a.at(x, y + 1) - a.at(x, y - 1));
        ixx[i] = gx[i] * gx[i];
        ixy[i] = gx[i] * gy[i];
        iyy[i] = gy[i] * gy[i];
      }
    }
    const auto sxx = box_sum(ixx, w, h, radius);
    const auto sxy = box_sum(ixy, w, h, radius);
    const auto syy = box_sum(iyy, w, h, radius);

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        const double tr = sxx[i] + syy[i];
        const double det = sxx[i] * syy[i] - sxy[i] * sxy[i];
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        if ((0.5 * tr - disc) / area < options.min_eigenvalue || det <= 0.0) {
          degenerate[i] = 1;
          continue;
        }
        // Every window sample is compared at this pixel's displacement.
        double u = fu[i], v = fv[i];
        for (int iter = 0; iter < options.iterations; ++iter) {
          double bx = 0.0, by = 0.0;
          for (int dy = -radius; dy <= radius; ++dy) {
            const int qy = std::clamp(y + dy, 0, h - 1);
            for (int dx = -radius; dx <= radius; ++dx) {
              const int qx = std::clamp(x + dx, 0, w - 1);
              const auto q = static_cast<std::size_t>(qy) * w + qx;
              const double r = a.data[q] - detail::sample_bilinear(b.data, w, h, x + dx + u, y + dy + v);
              bx += gx[q] * r;
              by += gy[q] * r;
            }
          }
          const double du = (syy[i] * bx - sxy[i] * by) / det;
          const double dv = (sxx[i] * by - sxy[i] * bx) / det;
          u += du;
          v += dv;
          if (du * du + dv * dv < 1e-6) break;
        }
        fu[i] = static_cast<float>(u);
        fv[i] = static_cast<float>(v);
      }
    }
  }
  for (std::size_t i = 0; i < fu.size(); ++i) {
    if (degenerate[i] || !std::isfinite(fu[i]) || !std::isfinite(fv[i])) {
      fu[i] = 0.0f;
      fv[i] = 0.0f;
    }
  }
  return FlowField(frame_a.width(), frame_a.height(), std::move(fu), std::move(fv));
}

}  // namespace magniflow
