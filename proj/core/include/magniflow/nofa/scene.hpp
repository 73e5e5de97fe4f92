#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"
#include "magniflow/nofa/nofa.hpp"

namespace magniflow::nofa {

// Smooth band-limited color texture defined on the continuous plane, so
// sub-pixel translations are rendered exactly.
class ProceduralTexture {
 public:
  explicit ProceduralTexture(std::uint64_t seed, int components = 12);
  std::array<float, 3> sample(double x, double y) const;

 private:
  struct Wave {
    double fx, fy, phase;
    std::array<double, 3> amp;
  };
  std::array<double, 3> base_{};
  std::vector<Wave> waves_;
};

struct Sprite {
  double cx = 0.0, cy = 0.0;
  double rx = 8.0, ry = 8.0;
  // Anti-aliased coverage of the elliptical sprite at p (sprite at rest).
  double coverage(double x, double y) const;
};

struct Scene {
  ProceduralTexture background;
  ProceduralTexture foreground;
  Sprite sprite;

  // Sprite displaced by (dx, dy); background displaced by (bx, by).
  ImageBuffer render(int width, int height, double dx, double dy, double bx = 0.0, double by = 0.0) const;
  // dx/dy inside the sprite's rest footprint (coverage >= 0.5), zero elsewhere.
  FlowField sprite_flow(int width, int height, double dx, double dy) const;
};

Scene make_scene(int width, int height, std::uint64_t seed, double sprite_fraction = 0.22);

struct SceneConfig {
  int width = 64;
  int height = 64;
  int frames = 16;
  double amplitude = 0.3;     // pixels
  double period = 16.0;       // frames per oscillation
  double direction = 0.0;     // radians
  double sprite_fraction = 0.22;
  std::uint64_t seed = 1;
};

struct RenderedVideo {
  std::vector<ImageBuffer> frames;
  // Ground-truth flow from frame 0 to frame t (t = 0 is all zero).
  std::vector<FlowField> flows;
  Scene scene;
};

// Sprite displacement at frame t is amplitude * sin(2*pi*t/period) along direction.
RenderedVideo render_synthetic_video(const SceneConfig& config);
void write_video(const std::filesystem::path& dir, const RenderedVideo& video);

struct FramePair {
  ImageBuffer reference;
  ImageBuffer target;
  FlowField flow;  // reference -> target
};

// Translating-texture pair for synthesis training: a sprite moves by up to
// max_displacement pixels; with probability 1/3 the background moves too.
FramePair make_translation_pair(int width, int height, std::uint64_t seed, double max_displacement);

// Flow pairs from rendered sprite motion: conditional from the pyramidal
// estimator on (frame 0, frame t), target = alpha * analytic displacement.
struct RealFlowSample {
  FlowField conditional;
  FlowField target;
  double alpha = 0.0;
};
RealFlowSample make_real_flow_sample(int width, int height, double alpha_max, std::uint64_t seed);

// Appends `count` real samples (real_XXXXXX_*.flo) to the dataset in out_dir.
void append_real_samples(Manifest& manifest, int count, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

}  // namespace magniflow::nofa
