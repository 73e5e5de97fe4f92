#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "magniflow/app/config.hpp"
#include "magniflow/flow/metrics.hpp"
#include "magniflow/nofa/nofa.hpp"

namespace magniflow::app {

// Library side of the command-line tool. User errors raise ContractError
// (exit 2); missing or mismatched checkpoints raise CheckpointError (exit 3).

nofa::Manifest cmd_gen_data(const RunConfig& config, int count, const std::filesystem::path& out_dir,
                            std::ostream& log);

// Pools flow magnitudes > 0 across fields and fits a log-normal by MLE.
// All-zero input raises DegenerateFitError.
nofa::LogNormalFit fit_noise_from_flows(const std::vector<FlowField>& flows);

// Adds photon noise to each clean frame, estimates clean -> noisy flow and
// fits the pooled magnitudes.
nofa::LogNormalFit cmd_fit_noise(const RunConfig& config, const std::filesystem::path& clean_video_dir,
                                 double strength, std::ostream& log);

// which: "dmm" (data = dataset directory or manifest.json) or "fvs" (data
// unused, pairs are procedural). Resumes when out_checkpoint exists.
void cmd_train(const std::string& which, const RunConfig& config, const std::filesystem::path& data,
               const std::filesystem::path& out_checkpoint, std::ostream& log);

// Writes frame_XXXXXX.ppm (magnified), flow_XXXXXX.flo (magnified flow),
// tau_XXXXXX.ppm and taum_XXXXXX.ppm (color renders) for t = 1..N-1.
// Refuses a non-empty out_dir.
void cmd_magnify(const RunConfig& config, const std::filesystem::path& frames_dir,
                 const std::filesystem::path& out_dir, std::ostream& log);

// Flow directories (flow_*.flo) give EPE, frame directories (frame_*.ppm)
// give PSNR/SSIM. Writes a per-frame CSV when report_csv is non-empty.
MetricReport cmd_evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir,
                          const std::filesystem::path& report_csv, std::ostream& log);

}  // namespace magniflow::app
