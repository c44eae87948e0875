#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "esiw/config.hpp"
#include "esiw/esbn.hpp"
#include "esiw/inverse.hpp"
#include "esiw/metrics.hpp"
#include "esiw/simulator.hpp"

namespace esiw {

// Deterministic geometry shared by all subcommands: source space, sensors,
// loose-constrained orientations and the collapsed leadfield.
struct Workbench {
  SourceSpace space;
  MatrixX3d sensors;
  LeadField lf;  // gain_free + gain_fixed at the configured loose factor
};

// `loose_override` rebuilds the orientation constraint at a different loose
// value (used by the loose sweep); orientation randomness always derives from
// the experiment seed, so the same sources get the same random Ori.
Workbench build_workbench(const ExperimentConfig& cfg,
                          std::optional<double> loose_override = {});

struct RunPaths {
  std::filesystem::path out;
  std::filesystem::path dataset() const { return out / "dataset"; }
  std::filesystem::path model() const { return out / "model"; }
  std::filesystem::path eval() const { return out / "eval"; }
  std::filesystem::path sweep() const { return out / "sweep"; }
  std::filesystem::path localize() const { return out / "localize"; }
};

struct RunContext {
  ExperimentConfig cfg;
  RunPaths paths;
  int threads = 1;
  bool quiet = false;
};

RunContext make_run_context(const ExperimentConfig& cfg, bool quiet);

// simulate: train/test/noise datasets + exported leadfield + sidecars.
void run_simulate(const RunContext& ctx);

// train: supervised training (resumable), optional unsupervised fine-tune
// stage; writes checkpoints, loss traces and a training summary.
void run_train(const RunContext& ctx,
               const std::optional<std::filesystem::path>& resume_from = {});

// eval: every configured method on the same test batch -> CSV/JSON report.
EvalReport run_eval(const RunContext& ctx,
                    const std::optional<std::filesystem::path>& checkpoint = {},
                    const std::optional<std::filesystem::path>& finetuned = {},
                    const std::optional<std::filesystem::path>& dataset = {});

// sweep: axis in {depth, snr, loose}; binned LE/AUC/SD tables + SVG charts.
EvalReport run_sweep(const RunContext& ctx, const std::string& axis);

// localize: apply a checkpoint or a named numerical method to imported
// frames against an imported leadfield.
void run_localize(const RunContext& ctx, const std::string& method_or_empty,
                  const std::optional<std::filesystem::path>& checkpoint,
                  const std::filesystem::path& leadfield_file,
                  const std::filesystem::path& frames_file);

}  // namespace esiw
