#include "magniflow/nofa/nofa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "magniflow/errors.hpp"
#include "magniflow/flow/io.hpp"
#include "magniflow/flow/ops.hpp"

namespace magniflow::nofa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Stream : std::uint64_t { kDirections = 1, kNoise = 2, kRegions = 3 };

}  // namespace

void NofaConfig::validate() const {
  require(width >= 1 && height >= 1, "nofa: width/height must be >= 1");
  require(regions >= 1 && segments >= 1 && regions <= segments, "nofa: need 1 <= n <= d");
  require(magnitude_min >= 0.0 && magnitude_min <= magnitude_max, "nofa: invalid magnitude range");
  require(alpha_min >= 0.0 && alpha_min <= alpha_max, "nofa: invalid alpha range");
  require(scale_min > 0.0 && scale_min <= scale_max, "nofa: invalid scale range");
  require(max_coverage > 0.0 && max_coverage <= 1.0, "nofa: max_coverage must be in (0, 1]");
  require(noise.sigma > 0.0 && noise.blur_sigma >= 0.0, "nofa: invalid noise model");
}

double SyntheticFlowSample::coverage() const {
  return static_cast<double>(union_mask.area()) / static_cast<double>(union_mask.data.size());
}

std::vector<double> sample_directions(int n, int d, std::uint64_t seed) {
  require(n >= 1 && d >= 1 && n <= d, "sample_directions: need 1 <= n <= d");
  Rng rng(seed);
  std::vector<int> segments(d);
  std::iota(segments.begin(), segments.end(), 0);
  // Partial Fisher-Yates: the first n entries are a uniform draw without replacement.
  for (int i = 0; i < n; ++i) std::swap(segments[i], segments[uniform_int(rng, i, d - 1)]);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double theta = kTwoPi * (segments[i] + uniform(rng, 0.0, 1.0)) / d;
    // Keep the angle inside its own segment despite rounding at the upper edge.
    const double hi = std::nextafter(kTwoPi * (segments[i] + 1) / d, 0.0);
    out[i] = std::min(theta, hi);
  }
  return out;
}

ComposedFlow compose_conditional_flow(const std::vector<RegionSpec>& regions, int width, int height) {
  require(!regions.empty(), "compose_conditional_flow: no regions");
  FlowField flow(width, height);
  Mask uni{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  for (const auto& r : regions) {
    const auto mask = generate_mask(r, width, height);
    const FlowVector vec{static_cast<float>(r.magnitude * std::cos(r.direction)),
                         static_cast<float>(r.magnitude * std::sin(r.direction))};
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!mask.at(x, y)) continue;
        flow.set(x, y, vec);
        uni.data[static_cast<std::size_t>(y) * width + x] = 1;
      }
    }
  }
  return {std::move(flow), std::move(uni)};
}

FlowField make_target_flow(const FlowField& conditional, const Mask& union_mask, double alpha) {
  require(alpha >= 0.0, "make_target_flow: alpha must be >= 0");
  require(union_mask.width == conditional.width() && union_mask.height == conditional.height(),
          "make_target_flow: mask dimensions differ");
  FlowField target(conditional.width(), conditional.height());
  const auto a = static_cast<float>(alpha);
  for (int y = 0; y < conditional.height(); ++y) {
    for (int x = 0; x < conditional.width(); ++x) {
      if (!union_mask.at(x, y)) continue;
      const auto c = conditional.at(x, y);
      target.set(x, y, {a * c.u, a * c.v});
    }
  }
  return target;
}

std::vector<double> sample_noise_magnitudes(std::size_t count, const NoiseModel& model, Rng& rng) {
  std::lognormal_distribution<double> dist(model.mu, model.sigma);
  std::vector<double> out(count);
  for (auto& x : out) x = dist(rng);
  return out;
}

FlowField generate_noise_flow(int width, int height, const NoiseModel& model, std::uint64_t seed) {
  require(model.sigma > 0.0 && model.blur_sigma >= 0.0, "generate_noise_flow: invalid noise model");
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(width) * height;
  const auto mags = sample_noise_magnitudes(n, model, rng);
  std::vector<float> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = uniform(rng, 0.0, kTwoPi);
    u[i] = static_cast<float>(mags[i] * std::cos(theta));
    v[i] = static_cast<float>(mags[i] * std::sin(theta));
  }
  return gaussian_blur(FlowField(width, height, std::move(u), std::move(v)), model.blur_sigma);
}

LogNormalFit fit_lognormal_mle(const std::vector<double>& samples) {
  require(samples.size() >= 2, "fit_lognormal_mle: need at least two samples");
  double sum = 0.0;
  for (double x : samples) {
    require(x > 0.0 && std::isfinite(x), "fit_lognormal_mle: samples must be positive");
    sum += std::log(x);
  }
  const double mu = sum / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double x : samples) {
    const double d = std::log(x) - mu;
    ss += d * d;
  }
  return {mu, std::sqrt(ss / static_cast<double>(samples.size()))};
}

ImageBuffer simulate_photon_noise(const ImageBuffer& image, double strength, std::uint64_t seed) {
  require(strength >= 0.0, "simulate_photon_noise: strength must be >= 0");
  if (strength == 0.0) return image;
  Rng rng(seed);
  std::vector<float> out(image.data().begin(), image.data().end());
  for (auto& x : out) x = static_cast<float>(x + strength * std::sqrt(static_cast<double>(x)) * normal(rng));
  return ImageBuffer(image.width(), image.height(), image.channels(), std::move(out));
}

SyntheticFlowSample generate_sample(const NofaConfig& config, std::uint64_t seed) {
  config.validate();
  const int w = config.width, h = config.height;
  const auto directions = sample_directions(config.regions, config.segments, derive_seed(seed, 0, kDirections));
  Rng rng(derive_seed(seed, 0, kRegions));
  const double extent = std::min(w, h);

  // Layouts whose union covers more than max_coverage are redrawn with
  // slightly smaller regions, so the loop always terminates.
  std::vector<RegionSpec> regions;
  ComposedFlow composed{FlowField(w, h), {}};
  double shrink = 1.0;
  for (int layout = 0;; ++layout, shrink *= 0.9) {
  regions.clear();
  for (int i = 0; i < config.regions; ++i) {
    RegionSpec r;
    r.shape = static_cast<ShapeKind>(uniform_int(rng, 0, 3));
    r.scale = shrink * extent * uniform(rng, config.scale_min, config.scale_max);
    if (r.shape == ShapeKind::kSpot) r.scale = uniform(rng, 1.0, 3.0);
    r.aspect = uniform(rng, 0.5, 1.0);
    r.orientation = uniform(rng, 0.0, std::numbers::pi);
    r.vertices = uniform_int(rng, 3, 8);
    r.smoothness = uniform(rng, 0.0, 0.15);
    r.shape_seed = rng();
    r.direction = directions[i];
    r.magnitude = uniform(rng, config.magnitude_min, config.magnitude_max);
    // Rejection-sample the center to keep regions apart; keep the last draw.
    for (int attempt = 0; attempt < 20; ++attempt) {
      r.cx = uniform(rng, 0.0, w - 1);
      r.cy = uniform(rng, 0.0, h - 1);
      const bool far = std::all_of(regions.begin(), regions.end(), [&](const RegionSpec& o) {
        return std::hypot(o.cx - r.cx, o.cy - r.cy) >= 0.5 * std::max(o.scale, r.scale);
      });
      if (far) break;
    }
    regions.push_back(r);
  }
  composed = compose_conditional_flow(regions, w, h);
  std::size_t covered = 0;
  for (auto m : composed.union_mask.data) covered += m != 0;
  if (covered <= config.max_coverage * static_cast<double>(w) * h || layout >= 64) break;
  }

  const double alpha = uniform(rng, config.alpha_min, config.alpha_max);
  const auto noise = generate_noise_flow(w, h, config.noise, derive_seed(seed, 0, kNoise));

  std::vector<float> u(composed.flow.u().begin(), composed.flow.u().end());
  std::vector<float> v(composed.flow.v().begin(), composed.flow.v().end());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (composed.union_mask.data[i]) continue;
    u[i] = noise.u()[i];
    v[i] = noise.v()[i];
  }
  FlowField conditional(w, h, std::move(u), std::move(v));
  auto target = make_target_flow(conditional, composed.union_mask, alpha);
  return {std::move(conditional), std::move(target), std::move(composed.union_mask), alpha,
          std::move(regions), seed};
}

namespace {

json region_to_json(const RegionSpec& r) {
  return {{"cx", r.cx}, {"cy", r.cy}, {"shape", to_string(r.shape)}, {"scale", r.scale},
          {"aspect", r.aspect}, {"orientation", r.orientation}, {"smoothness", r.smoothness},
          {"vertices", r.vertices}, {"shape_seed", r.shape_seed}, {"direction", r.direction},
          {"magnitude", r.magnitude}};
}

RegionSpec region_from_json(const json& j) {
  RegionSpec r;
  r.cx = j.at("cx");
  r.cy = j.at("cy");
  r.shape = shape_from_string(j.at("shape").get<std::string>());
  r.scale = j.at("scale");
  r.aspect = j.at("aspect");
  r.orientation = j.at("orientation");
  r.smoothness = j.at("smoothness");
  r.vertices = j.at("vertices");
  r.shape_seed = j.at("shape_seed");
  r.direction = j.at("direction");
  r.magnitude = j.at("magnitude");
  return r;
}

json config_to_json(const NofaConfig& c) {
  return {{"width", c.width}, {"height", c.height}, {"regions", c.regions}, {"segments", c.segments},
          {"magnitude_min", c.magnitude_min}, {"magnitude_max", c.magnitude_max},
          {"alpha_min", c.alpha_min}, {"alpha_max", c.alpha_max},
          {"scale_min", c.scale_min}, {"scale_max", c.scale_max},
          {"max_coverage", c.max_coverage},
          {"noise_mu", c.noise.mu}, {"noise_sigma", c.noise.sigma}, {"noise_blur_sigma", c.noise.blur_sigma}};
}

NofaConfig config_from_json(const json& j) {
  NofaConfig c;
  c.width = j.at("width");
  c.height = j.at("height");
  c.regions = j.at("regions");
  c.segments = j.at("segments");
  c.magnitude_min = j.at("magnitude_min");
  c.magnitude_max = j.at("magnitude_max");
  c.alpha_min = j.at("alpha_min");
  c.alpha_max = j.at("alpha_max");
  c.scale_min = j.at("scale_min");
  c.scale_max = j.at("scale_max");
  c.max_coverage = j.value("max_coverage", c.max_coverage);
  c.noise = {j.at("noise_mu"), j.at("noise_sigma"), j.at("noise_blur_sigma")};
  return c;
}

std::string sample_name(int index, const char* suffix) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "sample_%06d_%s.flo", index, suffix);
  return buf;
}

}  // namespace

Manifest generate_dataset(int count, const NofaConfig& config, std::uint64_t seed,
                          const fs::path& out_dir, int workers) {
  require(count >= 0, "generate_dataset: count must be >= 0");
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  Manifest manifest{seed, config, std::vector<DatasetEntry>(count), out_dir};
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const auto sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
      const auto sample = generate_sample(config, sample_seed);
      auto& e = manifest.entries[i];
      e.source = "synthetic";
      e.conditional = sample_name(i, "cond");
      e.target = sample_name(i, "target");
      e.alpha = sample.alpha;
      e.seed = sample_seed;
      e.coverage = sample.coverage();
      e.regions = sample.regions;
      write_flo(out_dir / e.conditional, sample.conditional);
      write_flo(out_dir / e.target, sample.target);
    }
  };
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    work(0, count);
  } else {
    std::vector<std::jthread> pool;
    const int chunk = (count + workers - 1) / workers;
    for (int wkr = 0; wkr < workers; ++wkr) {
      const int b = wkr * chunk, e = std::min(count, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  json samples = json::array();
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    json regions = json::array();
    for (const auto& r : e.regions) regions.push_back(region_to_json(r));
    samples.push_back({{"index", i}, {"source", e.source}, {"conditional", e.conditional.generic_string()},
                       {"target", e.target.generic_string()}, {"alpha", e.alpha}, {"seed", e.seed},
                       {"coverage", e.coverage}, {"overlap_rule", "last_region_wins"},
                       {"regions", regions}});
  }
  const json doc = {{"format", "magniflow-flow-manifest"}, {"version", 1}, {"master_seed", m.master_seed},
                    {"config", config_to_json(m.config)}, {"samples", samples}};
  const auto text = doc.dump(1);
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

Manifest read_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "magniflow-flow-manifest") throw FormatError(path.string() + ": not a flow manifest");
  Manifest m;
  m.root = path.parent_path();
  try {
    m.master_seed = doc.at("master_seed");
    m.config = config_from_json(doc.at("config"));
    for (const auto& s : doc.at("samples")) {
      DatasetEntry e;
      e.source = s.at("source");
      e.conditional = s.at("conditional").get<std::string>();
      e.target = s.at("target").get<std::string>();
      e.alpha = s.at("alpha");
      e.seed = s.at("seed");
      e.coverage = s.value("coverage", 0.0);
      for (const auto& r : s.at("regions")) e.regions.push_back(region_from_json(r));
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace magniflow::nofa
