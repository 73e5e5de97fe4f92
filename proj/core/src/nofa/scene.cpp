#include "magniflow/nofa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "magniflow/errors.hpp"
#include "magniflow/flow/io.hpp"
#include "magniflow/flow/pyrlk.hpp"
#include "magniflow/rng.hpp"

namespace magniflow::nofa {

namespace fs = std::filesystem;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

ProceduralTexture::ProceduralTexture(std::uint64_t seed, int components) {
  Rng rng(seed);
  for (auto& b : base_) b = uniform(rng, 0.35, 0.65);
  for (int k = 0; k < components; ++k) {
    const double freq = uniform(rng, 0.03, 0.22);  // cycles per pixel
    const double angle = uniform(rng, 0.0, kTwoPi);
    Wave w{freq * std::cos(angle), freq * std::sin(angle), uniform(rng, 0.0, kTwoPi), {}};
    for (auto& a : w.amp) a = uniform(rng, -0.3, 0.3) / std::sqrt(static_cast<double>(components));
    waves_.push_back(w);
  }
}

std::array<float, 3> ProceduralTexture::sample(double x, double y) const {
  std::array<double, 3> acc = base_;
  for (const auto& w : waves_) {
    const double c = std::cos(kTwoPi * (w.fx * x + w.fy * y) + w.phase);
    for (int ch = 0; ch < 3; ++ch) acc[ch] += w.amp[ch] * c;
  }
  return {static_cast<float>(std::clamp(acc[0], 0.0, 1.0)), static_cast<float>(std::clamp(acc[1], 0.0, 1.0)),
          static_cast<float>(std::clamp(acc[2], 0.0, 1.0))};
}

double Sprite::coverage(double x, double y) const {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  const double signed_dist = (std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(rx, ry);
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

ImageBuffer Scene::render(int width, int height, double dx, double dy, double bx, double by) const {
  std::vector<float> data(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto bg = background.sample(x - bx, y - by);
      const double a = sprite.coverage(x - dx, y - dy);
      std::array<float, 3> fg{};
      if (a > 0.0) fg = foreground.sample(x - dx, y - dy);
      for (int c = 0; c < 3; ++c) {
        data[(static_cast<std::size_t>(y) * width + x) * 3 + c] = static_cast<float>(a * fg[c] + (1.0 - a) * bg[c]);
      }
    }
  }
  return ImageBuffer(width, height, 3, std::move(data));
}

FlowField Scene::sprite_flow(int width, int height, double dx, double dy) const {
  FlowField flow(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (sprite.coverage(x, y) >= 0.5) flow.set(x, y, {static_cast<float>(dx), static_cast<float>(dy)});
    }
  }
  return flow;
}

Scene make_scene(int width, int height, std::uint64_t seed, double sprite_fraction) {
  Rng rng(derive_seed(seed, 0, 7));
  const double extent = std::min(width, height);
  Sprite s;
  s.rx = extent * sprite_fraction * uniform(rng, 0.8, 1.2);
  s.ry = extent * sprite_fraction * uniform(rng, 0.8, 1.2);
  s.cx = uniform(rng, 0.4, 0.6) * (width - 1);
  s.cy = uniform(rng, 0.4, 0.6) * (height - 1);
  return Scene{ProceduralTexture(derive_seed(seed, 1, 7)), ProceduralTexture(derive_seed(seed, 2, 7)), s};
}

RenderedVideo render_synthetic_video(const SceneConfig& c) {
  require(c.frames >= 1 && c.period > 0.0, "render_synthetic_video: invalid frame settings");
  RenderedVideo video{{}, {}, make_scene(c.width, c.height, c.seed, c.sprite_fraction)};
  for (int t = 0; t < c.frames; ++t) {
    const double s = c.amplitude * std::sin(kTwoPi * t / c.period);
    const double dx = s * std::cos(c.direction), dy = s * std::sin(c.direction);
    video.frames.push_back(video.scene.render(c.width, c.height, dx, dy));
    video.flows.push_back(video.scene.sprite_flow(c.width, c.height, dx, dy));
  }
  return video;
}

void write_video(const fs::path& dir, const RenderedVideo& video) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    write_ppm(frame_path(dir, static_cast<int>(t) + 1), video.frames[t]);
    write_flo(frame_path(dir, static_cast<int>(t) + 1, "flow_", ".flo"), video.flows[t]);
  }
}

FramePair make_translation_pair(int width, int height, std::uint64_t seed, double max_displacement) {
  const auto scene = make_scene(width, height, seed, 0.25);
  Rng rng(derive_seed(seed, 0, 11));
  const double mag = uniform(rng, 0.0, max_displacement);
  const double dir = uniform(rng, 0.0, kTwoPi);
  const double dx = mag * std::cos(dir), dy = mag * std::sin(dir);
  const bool move_background = uniform_int(rng, 0, 2) == 0;
  double bx = 0.0, by = 0.0;
  if (move_background) {
    const double bmag = uniform(rng, 0.0, max_displacement);
    const double bdir = uniform(rng, 0.0, kTwoPi);
    bx = bmag * std::cos(bdir);
    by = bmag * std::sin(bdir);
  }
  FlowField flow(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool in_sprite = scene.sprite.coverage(x, y) >= 0.5;
      flow.set(x, y, in_sprite ? FlowVector{static_cast<float>(dx), static_cast<float>(dy)}
                               : FlowVector{static_cast<float>(bx), static_cast<float>(by)});
    }
  }
  return {scene.render(width, height, 0.0, 0.0), scene.render(width, height, dx, dy, bx, by), std::move(flow)};
}

RealFlowSample make_real_flow_sample(int width, int height, double alpha_max, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0, 13));
  const auto scene = make_scene(width, height, seed, uniform(rng, 0.15, 0.3));
  const double mag = uniform(rng, 0.0, 0.3);
  const double dir = uniform(rng, 0.0, kTwoPi);
  const double alpha = uniform(rng, 0.0, alpha_max);
  const double dx = mag * std::cos(dir), dy = mag * std::sin(dir);
  const auto f0 = scene.render(width, height, 0.0, 0.0);
  const auto ft = scene.render(width, height, dx, dy);
  auto cond = estimate_flow_pyrlk(f0, ft);
  auto target = scene.sprite_flow(width, height, alpha * dx, alpha * dy);
  return {std::move(cond), std::move(target), alpha};
}

void append_real_samples(Manifest& manifest, int count, std::uint64_t seed, const fs::path& out_dir) {
  for (int i = 0; i < count; ++i) {
    const auto s = derive_seed(seed, static_cast<std::uint64_t>(i), 17);
    const auto sample = make_real_flow_sample(manifest.config.width, manifest.config.height,
                                              manifest.config.alpha_max, s);
    char cond[48], target[48];
    std::snprintf(cond, sizeof(cond), "real_%06d_cond.flo", i);
    std::snprintf(target, sizeof(target), "real_%06d_target.flo", i);
    write_flo(out_dir / cond, sample.conditional);
    write_flo(out_dir / target, sample.target);
    DatasetEntry e;
    e.source = "real";
    e.conditional = cond;
    e.target = target;
    e.alpha = sample.alpha;
    e.seed = s;
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest, out_dir / "manifest.json");
}

}  // namespace magniflow::nofa
