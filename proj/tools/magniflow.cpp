// magniflow: dataset generation, training, magnification and evaluation.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 checkpoint/state error.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "magniflow/app/commands.hpp"
#include "magniflow/errors.hpp"

namespace fs = std::filesystem;
using namespace magniflow;

namespace {

constexpr int kUserError = 2;
constexpr int kStateError = 3;

// One --key value flag per registry entry on every subcommand.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::optional<std::string>> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value settings file");
    for (const auto& spec : app::config_registry()) {
      auto& slot = values[spec.name];
      cmd->add_option("--" + spec.name, slot, spec.help + " [default: " + spec.default_value + "]");
    }
  }

  app::RunConfig resolve() const {
    app::RunConfig c = config_file.empty() ? app::RunConfig() : app::RunConfig::from_file(config_file);
    c.apply_environment();
    for (const auto& [key, v] : values) {
      if (v) c.set(key, *v);
    }
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Flow-based video motion magnification"};
  cli.require_subcommand(1);
  ConfigFlags flags;

  int count = 0;
  fs::path out, frames, data, pred, ref, report;
  double strength = -1.0;
  std::string which;

  auto* gen = cli.add_subcommand("gen-data", "generate a synthetic flow dataset");
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* fit = cli.add_subcommand("fit-noise", "fit the noise-flow model to photon noise on a clean video");
  fit->add_option("--frames", frames, "directory of clean frame_XXXXXX.ppm")->required();
  fit->add_option("--strength", strength, "photon-noise strength (default: config noise_strength)");

  auto* train = cli.add_subcommand("train", "train the magnifier (dmm) or the synthesis network (fvs)");
  train->add_option("which", which, "dmm | fvs")->required()->check(CLI::IsMember({"dmm", "fvs"}));
  train->add_option("--data", data, "dataset directory or manifest (dmm)");
  train->add_option("--out", out, "checkpoint path; resumed if it exists")->required();

  auto* magnify = cli.add_subcommand("magnify", "magnify the motion in a frame directory");
  magnify->add_option("--frames", frames, "directory of frame_XXXXXX.ppm")->required();
  magnify->add_option("--out", out, "fresh output directory")->required();

  auto* evaluate = cli.add_subcommand("evaluate", "compare predicted and reference flows or frames");
  evaluate->add_option("--pred", pred, "prediction directory")->required();
  evaluate->add_option("--ref", ref, "reference directory")->required();
  evaluate->add_option("--report", report, "per-frame CSV report path");

  for (auto* cmd : {gen, fit, train, magnify, evaluate}) flags.attach(cmd);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kUserError;
  }

  try {
    const auto config = flags.resolve();
    if (gen->parsed()) {
      app::cmd_gen_data(config, count, out, std::cout);
    } else if (fit->parsed()) {
      app::cmd_fit_noise(config, frames, strength >= 0 ? strength : config.get_real("noise_strength"), std::cout);
    } else if (train->parsed()) {
      if (which == "dmm" && data.empty()) throw ContractError("train dmm: --data is required");
      app::cmd_train(which, config, data, out, std::cout);
    } else if (magnify->parsed()) {
      app::cmd_magnify(config, frames, out, std::cout);
    } else if (evaluate->parsed()) {
      app::cmd_evaluate(pred, ref, report, std::cout);
    }
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStateError;
  } catch (const NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStateError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
  return 0;
}
