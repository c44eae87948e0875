// esiw - EEG source imaging workbench.
//
// Subcommands: simulate, train, eval, sweep, localize. Exit codes are a
// stable contract: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esiw/common.hpp"
#include "esiw/config.hpp"
#include "esiw/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  int threads = -1;
  bool quiet = false;
};

esiw::ExperimentConfig resolve_config(const GlobalArgs& args) {
  esiw::ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = esiw::load_config(args.config_path);
  }
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.threads >= 0) cfg.threads = args.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG source localization workbench"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Override the experiment seed")
      ->each([&g](const std::string&) { g.seed_set = true; });
  app.add_option("--out", g.out_dir, "Override the output directory");
  app.add_option("--threads", g.threads,
                 "Worker threads (0 = auto, ESIW_THREADS respected)");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* sim = app.add_subcommand("simulate", "Generate train/test datasets");

  auto* train = app.add_subcommand("train", "Train the network");
  std::string resume_path;
  train->add_option("--resume", resume_path,
                    "Continue training from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate methods on the test set");
  std::string ckpt_path, ckpt_ft_path, dataset_path;
  eval->add_option("--checkpoint", ckpt_path, "Supervised checkpoint");
  eval->add_option("--finetuned", ckpt_ft_path, "Fine-tuned checkpoint");
  eval->add_option("--dataset", dataset_path, "Test dataset (.esiw)");

  auto* sweep = app.add_subcommand("sweep", "Run a depth/snr/loose sweep");
  std::string axis;
  sweep->add_option("--axis", axis, "Sweep axis: depth, snr or loose")
      ->required();

  auto* localize =
      app.add_subcommand("localize", "Apply an inverse to imported frames");
  std::string loc_method, loc_ckpt, loc_leadfield, loc_frames;
  localize->add_option("--method", loc_method,
                       "Numerical method (mne, dspm, sloreta, eloreta)");
  localize->add_option("--checkpoint", loc_ckpt, "Network checkpoint");
  localize->add_option("--leadfield", loc_leadfield, "Leadfield file (.esiw)")
      ->required();
  localize->add_option("--frames", loc_frames, "Sensor frames (.esiw)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const esiw::ExperimentConfig cfg = resolve_config(g);
    const esiw::RunContext ctx = esiw::make_run_context(cfg, g.quiet);

    if (sim->parsed()) {
      esiw::run_simulate(ctx);
    } else if (train->parsed()) {
      std::optional<std::filesystem::path> resume;
      if (!resume_path.empty()) resume = resume_path;
      esiw::run_train(ctx, resume);
    } else if (eval->parsed()) {
      std::optional<std::filesystem::path> ckpt, ckpt_ft, dataset;
      if (!ckpt_path.empty()) ckpt = ckpt_path;
      if (!ckpt_ft_path.empty()) ckpt_ft = ckpt_ft_path;
      if (!dataset_path.empty()) dataset = dataset_path;
      esiw::run_eval(ctx, ckpt, ckpt_ft, dataset);
    } else if (sweep->parsed()) {
      esiw::run_sweep(ctx, axis);
    } else if (localize->parsed()) {
      if (loc_method.empty() == loc_ckpt.empty()) {
        throw esiw::ConfigError(
            "localize needs exactly one of --method or --checkpoint");
      }
      std::optional<std::filesystem::path> ckpt;
      if (!loc_ckpt.empty()) ckpt = loc_ckpt;
      esiw::run_localize(ctx, loc_method, ckpt, loc_leadfield, loc_frames);
    }
  } catch (const esiw::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const esiw::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const esiw::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
