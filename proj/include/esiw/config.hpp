#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esiw/esbn.hpp"
#include "esiw/metrics.hpp"

namespace esiw {

// Experiment description. Loaded from JSON with exhaustive unknown-key
// rejection; every field has the desk-scale default.
struct ExperimentConfig {
  std::uint64_t seed = 20240901;
  std::string output_dir = "out";
  int threads = 0;  // 0 -> ESIW_THREADS, then hardware

  struct SourceSpaceCfg {
    double radius_mm = 70.0;
    double spacing_mm = 10.0;
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    double conductivity = 0.33;
  } source_space;

  struct SensorsCfg {
    int count = 64;
    double radius_mm = 100.0;
  } sensors;

  struct SimulatorCfg {
    double sigma_s_mm = 10.0;
    int n_centers_min = 1;
    int n_centers_max = 5;
    double loose = 0.1;
    double snr_channel_db = 5.0;
    double snr_source_db = 20.0;
    int train_frames = 20000;
    int test_frames = 2000;
    int noise_frames = 500;   // channel-noise frames kept for covariance
    double shrinkage = 0.05;  // covariance shrinkage
  } simulator;

  struct SolversCfg {
    std::vector<std::string> methods{"mne", "dspm", "sloreta", "eloreta"};
    double lambda2 = -1.0;  // < 0 -> automatic (whitened-trace rule)
    double depth_weighting_p = 0.0;
    double eloreta_tol = 1e-6;
    int eloreta_max_iter = 100;
  } solvers;

  struct EsbnCfg {
    EsbnHyper hyper;  // seed filled from the experiment seed at run time
    bool finetune_enabled = true;
    int finetune_epochs = 4;
    double finetune_lr = 2e-4;
    int finetune_frames = 2000;
    int finetune_holdout_frames = 500;
  } esbn;

  struct SweepCfg {
    std::vector<double> snr_list{5.0, 10.0, 20.0};
    std::vector<double> loose_list{0.1, 0.3, 0.5};
    int depth_bins = 3;
  } sweep;

  MetricParams metrics;

  // Derived per-purpose seeds; recorded in every sidecar.
  std::uint64_t seed_for(const std::string& purpose) const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_json(const std::string& text,
                                   const std::string& origin);

// Canonical JSON of everything that can influence results; output_dir and
// threads are deliberately excluded.
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a of the canonical JSON form; embedded in every output file.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace esiw
