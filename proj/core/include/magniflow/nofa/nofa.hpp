#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"
#include "magniflow/nofa/masks.hpp"
#include "magniflow/rng.hpp"

namespace magniflow::nofa {

struct NoiseModel {
  double mu = -4.303;
  double sigma = 0.527;
  double blur_sigma = 3.0;
};

struct LogNormalFit {
  double mu = 0.0;
  double sigma = 0.0;
};

struct NofaConfig {
  int width = 32;
  int height = 32;
  int regions = 5;          // n
  int segments = 36;        // d
  double magnitude_min = 0.0;
  double magnitude_max = 0.3;
  double alpha_min = 0.0;
  double alpha_max = 100.0;
  // Region scale drawn uniformly from [scale_min, scale_max] * min(width, height).
  double scale_min = 0.15;
  double scale_max = 0.3;
  // Upper bound on the fraction of pixels inside the mask union.
  double max_coverage = 0.5;
  NoiseModel noise;

  void validate() const;
};

struct SyntheticFlowSample {
  FlowField conditional;
  FlowField target;
  Mask union_mask;
  double alpha = 0.0;
  std::vector<RegionSpec> regions;
  std::uint64_t seed = 0;

  double coverage() const;
};

// n directions from n distinct segments of [0, 2*pi) split d ways, each
// uniform inside its segment.
std::vector<double> sample_directions(int n, int d, std::uint64_t seed);

struct ComposedFlow {
  FlowField flow;
  Mask union_mask;
};

// Inside each region mask the flow is magnitude * (cos, sin)(direction);
// later regions overwrite earlier ones where masks overlap.
ComposedFlow compose_conditional_flow(const std::vector<RegionSpec>& regions, int width, int height);

// alpha * conditional inside the mask union, exactly zero outside.
FlowField make_target_flow(const FlowField& conditional, const Mask& union_mask, double alpha);

std::vector<double> sample_noise_magnitudes(std::size_t count, const NoiseModel& model, Rng& rng);

// Per-pixel LogNormal magnitude and uniform direction, then Gaussian-smoothed.
FlowField generate_noise_flow(int width, int height, const NoiseModel& model, std::uint64_t seed);

// Maximum-likelihood log-normal parameters (population sigma).
LogNormalFit fit_lognormal_mle(const std::vector<double>& samples);

// image + strength * n, n ~ N(0, image) per pixel, clamped to [0,1].
ImageBuffer simulate_photon_noise(const ImageBuffer& image, double strength, std::uint64_t seed);

// Draws region parameters and assembles one conditional/target pair.
SyntheticFlowSample generate_sample(const NofaConfig& config, std::uint64_t seed);

struct DatasetEntry {
  std::string source;  // "synthetic" or "real"
  std::filesystem::path conditional;
  std::filesystem::path target;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  std::vector<RegionSpec> regions;
};

struct Manifest {
  std::uint64_t master_seed = 0;
  NofaConfig config;
  std::vector<DatasetEntry> entries;
  std::filesystem::path root;  // directory relative paths resolve against
};

// Writes sample_XXXXXX_cond.flo / _target.flo plus manifest.json. Sample i
// uses derive_seed(seed, i), so output is independent of the worker count.
Manifest generate_dataset(int count, const NofaConfig& config, std::uint64_t seed,
                          const std::filesystem::path& out_dir, int workers = 1);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace magniflow::nofa
