#include "magniflow/nofa/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "magniflow/errors.hpp"
#include "magniflow/rng.hpp"

namespace magniflow::nofa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<std::uint8_t> keep_component(const std::vector<std::uint8_t>& raw, int w, int h,
                                         int sx, int sy) {
  std::vector<std::uint8_t> out(raw.size(), 0);
  std::vector<std::pair<int, int>> stack{{sx, sy}};
  out[static_cast<std::size_t>(sy) * w + sx] = 1;
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    const int nx[4] = {x + 1, x - 1, x, x};
    const int ny[4] = {y, y, y + 1, y - 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
      const auto i = static_cast<std::size_t>(ny[k]) * w + nx[k];
      if (raw[i] && !out[i]) {
        out[i] = 1;
        stack.emplace_back(nx[k], ny[k]);
      }
    }
  }
  return out;
}

// Vertices of a convex polygon on a jittered circle, in angular order.
std::vector<std::pair<double, double>> polygon_vertices(const RegionSpec& r) {
  Rng rng(r.shape_seed);
  const int k = std::clamp(r.vertices, 3, 8);
  const double spacing = kTwoPi / k;
  const double jitter = std::clamp(r.smoothness, 0.0, 0.45) * spacing;
  std::vector<std::pair<double, double>> pts;
  const double c = std::cos(r.orientation), s = std::sin(r.orientation);
  for (int i = 0; i < k; ++i) {
    const double phi = i * spacing + (jitter > 0.0 ? uniform(rng, -jitter, jitter) : 0.0);
    const double lx = r.scale * std::cos(phi);
    const double ly = r.scale * r.aspect * std::sin(phi);
    pts.emplace_back(r.cx + c * lx - s * ly, r.cy + s * lx + c * ly);
  }
  return pts;
}

void fill_polygon(const std::vector<std::pair<double, double>>& pts, int w, int h,
                  std::vector<std::uint8_t>& raw) {
  for (int y = 0; y < h; ++y) {
    double lo = 1e300, hi = -1e300;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto [x0, y0] = pts[i];
      const auto [x1, y1] = pts[(i + 1) % n];
      if ((y0 <= y && y < y1) || (y1 <= y && y < y0)) {
        const double x = x0 + (y - y0) * (x1 - x0) / (y1 - y0);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (lo > hi) continue;
    const int xa = std::max(0, static_cast<int>(std::ceil(lo)));
    const int xb = std::min(w - 1, static_cast<int>(std::floor(hi)));
    for (int x = xa; x <= xb; ++x) raw[static_cast<std::size_t>(y) * w + x] = 1;
  }
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kPolygon: return "polygon";
    case ShapeKind::kFractal: return "fractal";
    case ShapeKind::kSpot: return "spot";
  }
  return "ellipse";
}

ShapeKind shape_from_string(std::string_view name) {
  if (name == "ellipse") return ShapeKind::kEllipse;
  if (name == "polygon") return ShapeKind::kPolygon;
  if (name == "fractal") return ShapeKind::kFractal;
  if (name == "spot") return ShapeKind::kSpot;
  throw ContractError("unknown shape kind: " + std::string(name));
}

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Mask generate_mask(const RegionSpec& r, int width, int height) {
  require(width >= 1 && height >= 1, "generate_mask: empty field");
  require(r.scale > 0.0 && r.aspect > 0.0 && r.aspect <= 1.0, "generate_mask: invalid shape parameters");
  const int px = static_cast<int>(std::lround(r.cx));
  const int py = static_cast<int>(std::lround(r.cy));
  if (px < 0 || py < 0 || px >= width || py >= height) {
    throw EmptyMaskError("generate_mask: region center outside the field");
  }

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height, 0);
  const double c = std::cos(r.orientation), s = std::sin(r.orientation);
  auto local = [&](int x, int y) {
    const double dx = x - r.cx, dy = y - r.cy;
    return std::pair{c * dx + s * dy, -s * dx + c * dy};
  };

  switch (r.shape) {
    case ShapeKind::kEllipse: {
      const double a = r.scale, b = r.scale * r.aspect;
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const auto [lx, ly] = local(x, y);
          if ((lx / a) * (lx / a) + (ly / b) * (ly / b) <= 1.0) raw[static_cast<std::size_t>(y) * width + x] = 1;
        }
      }
      break;
    }
    case ShapeKind::kPolygon:
      fill_polygon(polygon_vertices(r), width, height, raw);
      break;
    case ShapeKind::kFractal: {
      Rng rng(r.shape_seed);
      const double bound = std::clamp(r.smoothness, 0.0, 0.15);
      double amp[5], phase[5];
      for (int j = 0; j < 5; ++j) {
        amp[j] = uniform(rng, -bound, bound);
        phase[j] = uniform(rng, 0.0, kTwoPi);
      }
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const auto [lx, ly] = local(x, y);
          const double ey = ly / r.aspect;
          const double theta = std::atan2(ey, lx);
          double radius = 1.0;
          for (int j = 0; j < 5; ++j) radius += amp[j] * std::sin((j + 2) * theta + phase[j]);
          if (std::hypot(lx, ey) <= r.scale * radius) raw[static_cast<std::size_t>(y) * width + x] = 1;
        }
      }
      break;
    }
    case ShapeKind::kSpot: {
      const double radius = std::clamp(r.scale, 1.0, 3.0);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (std::hypot(x - r.cx, y - r.cy) <= radius) raw[static_cast<std::size_t>(y) * width + x] = 1;
        }
      }
      break;
    }
  }
  raw[static_cast<std::size_t>(py) * width + px] = 1;
  return Mask{width, height, keep_component(raw, width, height, px, py)};
}

bool is_four_connected(const Mask& mask) {
  const auto first = std::find(mask.data.begin(), mask.data.end(), std::uint8_t{1});
  if (first == mask.data.end()) return false;
  const auto i = static_cast<int>(first - mask.data.begin());
  const auto comp = keep_component(mask.data, mask.width, mask.height, i % mask.width, i / mask.width);
  return comp == mask.data;
}

}  // namespace magniflow::nofa
