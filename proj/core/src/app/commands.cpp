#include "magniflow/app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "magniflow/dmm/training.hpp"
#include "magniflow/errors.hpp"
#include "magniflow/flow/io.hpp"
#include "magniflow/flow/ops.hpp"
#include "magniflow/fvs/training.hpp"
#include "magniflow/nn/checkpoint.hpp"
#include "magniflow/nofa/scene.hpp"

namespace magniflow::app {

namespace fs = std::filesystem;

namespace {

// Seed streams of the tool, kept apart from each other.
enum Stream : std::uint64_t { kDmmInit = 101, kFvsInit = 102, kRealData = 103, kNoise = 104, kSampling = 105 };

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index
// writes only its own output slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(int count, int workers, Fn fn) {
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

nn::AdamWOptions adam_from(const RunConfig& c) { return c.adam(); }

bool cosine_decay(const RunConfig& c) {
  const auto s = c.get_string("lr_decay");
  require(s == "cosine" || s == "none", "config key 'lr_decay' must be cosine or none");
  return s == "cosine";
}

fs::path loss_csv_path(const RunConfig& c, const fs::path& checkpoint) {
  const auto s = c.get_string("loss_csv");
  if (!s.empty()) return s;
  auto p = checkpoint;
  p.replace_extension(".loss.csv");
  return p;
}

nn::CheckpointMeta require_checkpoint(const fs::path& path, const std::string& kind) {
  if (path.empty() || !fs::is_regular_file(path)) {
    throw CheckpointError("missing " + kind + " checkpoint '" + path.string() + "'");
  }
  auto meta = nn::read_checkpoint_meta(path);
  if (meta.kind != kind) throw CheckpointError(path.string() + " is a '" + meta.kind + "' checkpoint, not " + kind);
  return meta;
}

// Resuming: the stored hyper-parameters must match the configured ones.
void resume_if_present(const fs::path& path, const std::string& kind, const std::string& config_json,
                       nn::ParameterSet& params, std::ostream& log) {
  if (!fs::exists(path)) return;
  const auto meta = require_checkpoint(path, kind);
  if (meta.config_json != config_json) {
    throw CheckpointError("checkpoint " + path.string() + " was trained with a different model configuration: " +
                          meta.config_json);
  }
  nn::load_checkpoint(path, params);
  log << "resuming " << kind << " training from step " << params.step << '\n';
}

int progress_interval(int steps) { return std::max(1, steps / 20); }

}  // namespace

nofa::Manifest cmd_gen_data(const RunConfig& config, int count, const fs::path& out_dir, std::ostream& log) {
  require(count >= 1, "gen-data: count must be >= 1");
  const auto nc = config.nofa();
  const auto seed = config.seed();
  const int workers = static_cast<int>(config.get_int("workers"));
  require(workers >= 1, "config key 'workers' must be >= 1");
  auto manifest = nofa::generate_dataset(count, nc, seed, out_dir, workers);
  const int real = static_cast<int>(config.get_int("real_count"));
  require(real >= 0, "config key 'real_count' must be >= 0");
  if (real > 0) nofa::append_real_samples(manifest, real, derive_seed(seed, 0, kRealData), out_dir);

  constexpr int kBins = 10;
  std::vector<int> hist(kBins, 0);
  double cov_sum = 0.0, cov_min = 1.0, cov_max = 0.0;
  int synthetic = 0;
  for (const auto& e : manifest.entries) {
    const double span = nc.alpha_max - nc.alpha_min;
    const int bin = span > 0 ? std::clamp(static_cast<int>((e.alpha - nc.alpha_min) / span * kBins), 0, kBins - 1) : 0;
    ++hist[bin];
    if (e.source == "synthetic") {
      ++synthetic;
      cov_sum += e.coverage;
      cov_min = std::min(cov_min, e.coverage);
      cov_max = std::max(cov_max, e.coverage);
    }
  }
  log << "wrote " << manifest.entries.size() << " samples (" << synthetic << " synthetic, " << real << " real) to "
      << out_dir.string() << '\n';
  log << "alpha histogram over [" << nc.alpha_min << ", " << nc.alpha_max << "]:";
  for (int h : hist) log << ' ' << h;
  log << '\n';
  if (synthetic > 0) {
    log << std::fixed << std::setprecision(4) << "mask coverage: mean " << cov_sum / synthetic << ", min " << cov_min
        << ", max " << cov_max << '\n'
        << std::defaultfloat;
  }
  return manifest;
}

nofa::LogNormalFit fit_noise_from_flows(const std::vector<FlowField>& flows) {
  std::vector<double> mags;
  for (const auto& f : flows) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double m = std::hypot(static_cast<double>(f.u()[i]), static_cast<double>(f.v()[i]));
      if (m > 0.0) mags.push_back(m);
    }
  }
  if (mags.empty()) throw DegenerateFitError("fit-noise: every flow magnitude is zero; nothing to fit");
  return nofa::fit_lognormal_mle(mags);
}

nofa::LogNormalFit cmd_fit_noise(const RunConfig& config, const fs::path& clean_video_dir, double strength,
                                 std::ostream& log) {
  require(strength >= 0.0, "fit-noise: strength must be >= 0");
  const auto frames = read_video(clean_video_dir);
  require(frames.size() >= 2, "fit-noise: need at least two frames in " + clean_video_dir.string());
  const auto opts = config.pyrlk();
  const auto seed = config.seed();
  std::vector<FlowField> flows(frames.size(), FlowField(1, 1));
  parallel_for(static_cast<int>(frames.size()), static_cast<int>(config.get_int("workers")), [&](int i) {
    const auto noisy = nofa::simulate_photon_noise(frames[i], strength, derive_seed(seed, i, kNoise));
    flows[i] = estimate_flow_pyrlk(frames[i], noisy, opts);
  });
  const auto fit = fit_noise_from_flows(flows);
  log << std::setprecision(6) << "mu = " << fit.mu << "\nsigma = " << fit.sigma << '\n';
  return fit;
}

void cmd_train(const std::string& which, const RunConfig& config, const fs::path& data, const fs::path& out_checkpoint,
               std::ostream& log) {
  require(which == "dmm" || which == "fvs", "train: expected 'dmm' or 'fvs', got '" + which + "'");
  require(!out_checkpoint.empty(), "train: an output checkpoint path is required");
  const int steps = static_cast<int>(config.get_int("steps"));
  const int batch = static_cast<int>(config.get_int("batch"));
  const int every = static_cast<int>(config.get_int("checkpoint_every"));
  require(steps >= 0 && batch >= 1 && every >= 0, "train: steps, batch and checkpoint_every must be non-negative");
  const auto seed = config.seed();
  const int interval = progress_interval(steps);

  if (which == "dmm") {
    const fs::path manifest_path = fs::is_directory(data) ? data / "manifest.json" : data;
    if (!fs::exists(manifest_path)) throw ContractError("train dmm: no manifest at " + manifest_path.string());
    const auto corpus = dmm::load_corpus(nofa::read_manifest(manifest_path));
    require(corpus.size() > 0, "train dmm: the dataset is empty");
    for (const auto& f : corpus.conditional) {
      require(f.width() % 8 == 0 && f.height() % 8 == 0, "train dmm: flow dimensions must be divisible by 8");
    }
    const auto mc = config.dmm();
    dmm::MagnifierModel model(mc, derive_seed(seed, 0, kDmmInit));
    resume_if_present(out_checkpoint, "dmm", mc.to_json(), model.params(), log);
    dmm::DmmTrainOptions o;
    o.steps = steps;
    o.batch = batch;
    o.adam = adam_from(config);
    o.cosine_decay = cosine_decay(config);
    o.lr_floor = config.get_real("lr_floor");
    o.seed = seed;
    o.checkpoint_every = every;
    o.checkpoint = out_checkpoint;
    o.loss_csv = loss_csv_path(config, out_checkpoint);
    o.on_step = [&](int s, double loss) {
      if (s % interval == 0 || s == steps) log << "dmm step " << s << "/" << steps << " loss " << loss << '\n';
    };
    log << "training dmm on " << corpus.size() << " samples, " << model.params().scalar_count() << " parameters\n";
    dmm::train_dmm(model, corpus, dmm::make_schedule(mc.T, "cosine", mc.f_max), o);
  } else {
    const auto fc = config.fvs();
    fvs::SynthesisModel model(fc, derive_seed(seed, 0, kFvsInit));
    resume_if_present(out_checkpoint, "fvs", fc.to_json(), model.params(), log);
    fvs::FvsTrainOptions o;
    o.steps = steps;
    o.batch = batch;
    o.width = static_cast<int>(config.get_int("fvs_width"));
    o.height = static_cast<int>(config.get_int("fvs_height"));
    o.max_displacement = config.get_real("fvs_max_displacement");
    require(o.width >= 8 && o.height >= 8 && o.max_displacement >= 0, "train fvs: invalid pair geometry");
    o.adam = adam_from(config);
    o.loss = {config.get_real("lambda_l1"), config.get_real("lambda_g")};
    o.seed = seed;
    o.checkpoint_every = every;
    o.checkpoint = out_checkpoint;
    o.loss_csv = loss_csv_path(config, out_checkpoint);
    o.on_step = [&](int s, const fvs::FvsLosses& l) {
      if (s % interval == 0 || s == steps) {
        log << "fvs step " << s << "/" << steps << " loss " << l.total << " (L1 " << l.l1 << ", style " << l.style
            << ")\n";
      }
    };
    log << "training fvs, " << model.params().scalar_count() << " parameters\n";
    fvs::train_fvs(model, o);
  }
  log << "checkpoint written to " << out_checkpoint.string() << '\n';
}

void cmd_magnify(const RunConfig& config, const fs::path& frames_dir, const fs::path& out_dir, std::ostream& log) {
  const double alpha = config.get_real("alpha");
  require(alpha >= 0.0, "magnify: alpha must be >= 0");
  const auto mode = config.get_string("mode");
  require(mode == "static" || mode == "dynamic", "magnify: mode must be static or dynamic");
  const auto source = config.get_string("flow_source");
  require(source == "internal" || source == "flo_dir", "magnify: flow_source must be internal or flo_dir");
  if (fs::exists(out_dir)) {
    require(fs::is_directory(out_dir) && fs::is_empty(out_dir),
            "magnify: output directory " + out_dir.string() + " is not empty; refusing to overwrite");
  }
  if (!fs::is_directory(frames_dir)) throw ContractError("magnify: no frame directory " + frames_dir.string());
  const auto frames = read_video(frames_dir);
  require(frames.size() >= 2, "magnify: need at least two frames");
  const int w = frames[0].width(), h = frames[0].height();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    require(frames[i].width() == w && frames[i].height() == h && frames[i].channels() == 3,
            "magnify: frame " + std::to_string(i + 1) + " differs in size from the first frame");
  }
  require(w % 8 == 0 && h % 8 == 0, "magnify: frame dimensions must be divisible by 8");

  const fs::path dmm_path = config.get_string("dmm_checkpoint");
  const fs::path fvs_path = config.get_string("fvs_checkpoint");
  const auto dmeta = require_checkpoint(dmm_path, "dmm");
  const auto fmeta = require_checkpoint(fvs_path, "fvs");
  dmm::MagnifierModel magnifier(dmm::DmmConfig::from_json(dmeta.config_json), 0);
  nn::load_checkpoint(dmm_path, magnifier.params());
  fvs::SynthesisModel synthesizer(fvs::FvsConfig::from_json(fmeta.config_json), 0);
  nn::load_checkpoint(fvs_path, synthesizer.params());
  const auto& mc = magnifier.config();
  const auto schedule = dmm::make_schedule(mc.T, "cosine", mc.f_max);
  const auto opts = config.pyrlk();
  const auto seed = config.seed();

  const int pairs = static_cast<int>(frames.size()) - 1;
  std::vector<FlowField> cond(pairs, FlowField(1, 1)), magnified(pairs, FlowField(1, 1));
  std::vector<ImageBuffer> outputs(pairs, ImageBuffer(1, 1, 3));
  auto ref_index = [&](int t) { return mode == "static" ? 0 : t - 1; };
  if (source == "flo_dir") {
    const fs::path dir = config.get_string("flo_dir");
    for (int t = 1; t <= pairs; ++t) {
      const auto p = frame_path(dir, t, "flow_", ".flo");
      if (!fs::exists(p)) throw ContractError("magnify: missing conditional flow " + p.string());
      cond[t - 1] = read_flo(p);
      require(cond[t - 1].width() == w && cond[t - 1].height() == h, "magnify: flow size differs from frame size");
    }
  }
  log << "magnifying " << pairs << " frame pairs (" << mode << ", alpha " << alpha << ")\n";
  parallel_for(pairs, static_cast<int>(config.get_int("workers")), [&](int i) {
    const int t = i + 1;
    const auto& ref = frames[ref_index(t)];
    if (source == "internal") cond[i] = estimate_flow_pyrlk(ref, frames[t], opts);
    magnified[i] = dmm::sample_magnified_flow(magnifier, cond[i], alpha, schedule, mc.sample_steps,
                                              derive_seed(seed, t, kSampling));
    outputs[i] = fvs::synthesize_frame(synthesizer, ref, magnified[i]);
  });

  fs::create_directories(out_dir);
  for (int t = 1; t <= pairs; ++t) {
    write_ppm(frame_path(out_dir, t), outputs[t - 1]);
    write_flo(frame_path(out_dir, t, "flow_", ".flo"), magnified[t - 1]);
    write_ppm(frame_path(out_dir, t, "tau_", ".ppm"), flow_to_color(cond[t - 1]));
    write_ppm(frame_path(out_dir, t, "taum_", ".ppm"), flow_to_color(magnified[t - 1]));
  }
  log << "wrote " << pairs << " frames to " << out_dir.string() << '\n';
}

MetricReport cmd_evaluate(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& report_csv,
                          std::ostream& log) {
  for (const auto& d : {pred_dir, ref_dir}) {
    if (!fs::is_directory(d)) throw ContractError("evaluate: not a directory: " + d.string());
  }
  MetricReport report;
  const auto pred_flows = list_frames(pred_dir, ".flo", "flow_");
  const bool flows = !pred_flows.empty();
  const auto pred = flows ? pred_flows : list_frames(pred_dir);
  const auto ref = flows ? list_frames(ref_dir, ".flo", "flow_") : list_frames(ref_dir);
  require(!pred.empty(), "evaluate: no flow_*.flo or frame_*.ppm files in " + pred_dir.string());
  require(pred.size() == ref.size(), "evaluate: " + std::to_string(pred.size()) + " predictions but " +
                                         std::to_string(ref.size()) + " references");
  std::ofstream csv;
  if (!report_csv.empty()) {
    if (report_csv.has_parent_path()) fs::create_directories(report_csv.parent_path());
    csv.open(report_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + report_csv.string());
    csv << std::setprecision(9) << (flows ? "index,file,epe\n" : "index,file,psnr,ssim\n");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (flows) {
      const auto a = read_flo(pred[i]), b = read_flo(ref[i]);
      require(a.width() == b.width() && a.height() == b.height(), "evaluate: size mismatch at " + pred[i].string());
      report.add_flow(flow_epe(a, b));
      if (csv.is_open()) csv << i + 1 << ',' << pred[i].filename().string() << ',' << report.epe.back() << '\n';
    } else {
      const auto a = read_ppm(pred[i]), b = read_ppm(ref[i]);
      require(a.width() == b.width() && a.height() == b.height(), "evaluate: size mismatch at " + pred[i].string());
      report.add_image(image_metrics(a, b));
      if (csv.is_open()) {
        csv << i + 1 << ',' << pred[i].filename().string() << ',' << report.psnr.back() << ',' << report.ssim.back()
            << '\n';
      }
    }
  }
  report.finalize();
  log << std::setprecision(6) << "evaluated " << pred.size() << (flows ? " flow pairs\n" : " frame pairs\n");
  if (flows) {
    log << "mean EPE  " << report.epe_mean << " px\n";
  } else {
    log << "mean PSNR " << report.psnr_mean << " dB\nmean SSIM " << report.ssim_mean << '\n';
  }
  return report;
}

}  // namespace magniflow::app
