#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace magniflow::nofa {

enum class ShapeKind { kEllipse, kPolygon, kFractal, kSpot };

std::string_view to_string(ShapeKind kind);
ShapeKind shape_from_string(std::string_view name);

struct RegionSpec {
  double cx = 0.0;  // sub-pixel center, x right
  double cy = 0.0;  // y down
  ShapeKind shape = ShapeKind::kEllipse;
  double scale = 4.0;        // radius-like extent in pixels
  double aspect = 1.0;       // minor/major axis ratio in (0, 1]
  double orientation = 0.0;  // radians
  // Polygon: angular vertex jitter as a fraction of the vertex spacing.
  // Fractal: bound on each harmonic amplitude |a_j|, at most 0.15.
  double smoothness = 0.0;
  int vertices = 5;          // polygon only, in [3, 8]
  std::uint64_t shape_seed = 0;  // polygon jitter / fractal phases
  double direction = 0.0;    // theta in [0, 2*pi)
  double magnitude = 0.0;    // pixels per frame
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t area() const;
};

// Rasterizes one region. The result always contains the center pixel and is
// reduced to the 4-connected component holding it.
Mask generate_mask(const RegionSpec& region, int width, int height);

bool is_four_connected(const Mask& mask);

}  // namespace magniflow::nofa
