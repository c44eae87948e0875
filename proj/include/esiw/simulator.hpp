#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "esiw/leadfield.hpp"
#include "esiw/rng.hpp"
#include "esiw/source_space.hpp"

namespace esiw {

struct GaussianSourceConfig {
  int n_centers_min = 1;
  int n_centers_max = 5;
  double sigma_s_mm = 10.0;     // spatial std of the source basis
  double loose = 0.1;
  double snr_channel_db = 5.0;  // +inf disables channel noise
  double snr_source_db = 20.0;  // +inf disables source-level noise
  std::uint64_t seed = 0;

  void validate(int n_sources) const;  // throws ConfigError
};

struct SampleBatch {
  Eigen::MatrixXd phi;     // F x M, one sensor frame per row
  Eigen::MatrixXd j_true;  // F x N, clean source amplitudes per row
  std::vector<std::vector<int>> centers;  // activation centers per frame
  Eigen::VectorXd achieved_snr_db;        // per frame
  GaussianSourceConfig config;

  int n_frames() const { return static_cast<int>(phi.rows()); }
};

// Isotropic Gaussian blob over the source grid:
// mu(x) = omega * (sqrt(2 pi) sigma)^-3 * exp(-||x - x_c||^2 / (2 sigma^2)).
Eigen::VectorXd gaussian_basis(int center, double sigma_s,
                               const SourceSpace& space, double omega);

struct SparseSourceDraw {
  Eigen::VectorXd weights;   // k, ~N(0,1)
  std::vector<int> centers;  // k distinct indices
  Eigen::VectorXd j;         // N
};

SparseSourceDraw sample_sparse_source(const GaussianSourceConfig& cfg,
                                      const SourceSpace& space, Rng& rng);

// Rescales `noise` so that 10*log10(rms(signal)^2 / rms(noise)^2) equals
// target_db (rms over all entries). target_db = +inf returns zero noise.
Eigen::MatrixXd scale_noise_to_snr(const Eigen::MatrixXd& signal,
                                   const Eigen::MatrixXd& noise,
                                   double target_db);

// Per frame: sparse source draw, source noise scaled against K*j at the
// sensors, projection, channel noise scaled against K*j. Each frame derives
// its own stream from (cfg.seed, frame_index), so generation parallelises
// without changing the result. When channel_noise_out is non-null the raw
// channel-noise frames are stored there (F x M).
SampleBatch synthesize_batch(const GaussianSourceConfig& cfg,
                             const SourceSpace& space, const LeadField& lf,
                             int n_frames, int threads = 1,
                             Eigen::MatrixXd* channel_noise_out = nullptr);

// Shrunk sample covariance: (1-a)*S + a*(tr(S)/M)*I, symmetrized exactly.
Eigen::MatrixXd estimate_noise_covariance(const Eigen::MatrixXd& noise_frames,
                                          double shrinkage);

void write_batch(const SampleBatch& batch, const std::filesystem::path& path);
SampleBatch read_batch(const std::filesystem::path& path);

}  // namespace esiw
