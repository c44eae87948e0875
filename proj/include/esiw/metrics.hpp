#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "esiw/simulator.hpp"
#include "esiw/source_space.hpp"

namespace esiw {

struct MetricParams {
  double auc_radius_mm = 10.0;  // "truly active" labeling radius
  double nms_radius_mm = 10.0;  // peak non-maximum suppression radius
  bool precision_recall = false;  // PR-AUC instead of ROC-AUC
};

// Mean over true centers of the distance to the nearest reconstructed peak.
// Peaks are the top-k |j_hat| values under non-maximum suppression with
// k = number of true centers; for k = 1 this is exactly the distance between
// the true source and the global |j_hat| peak.
double localization_error(const MatrixX3d& true_centers,
                          const Eigen::VectorXd& j_hat,
                          const SourceSpace& space,
                          double nms_radius_mm = 10.0);

// Amplitude-weighted mean distance of every source to its nearest true
// center: sum_k d_k |j_k| / sum_k |j_k|.
double spatial_dispersion(const MatrixX3d& true_centers,
                          const Eigen::VectorXd& j_hat,
                          const SourceSpace& space);

// Sources within radius_mm of any true center are positives, scored by
// |j_hat|. ROC AUC via the rank statistic with tie averaging; PR AUC behind
// the flag.
double auc_score(const MatrixX3d& true_centers, const Eigen::VectorXd& j_hat,
                 const SourceSpace& space, double radius_mm = 10.0,
                 bool precision_recall = false);

// Maps a block of sensor frames (F x M) to source estimates (F x N).
using Localizer = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct MethodReport {
  std::string method;
  double le_mean = 0, le_std = 0;
  double sd_mean = 0, sd_std = 0;
  double auc_mean = 0, auc_std = 0;
  int n_frames = 0;
  int n_skipped = 0;  // frames where a metric was undefined
  // Per-frame values for downstream binning; NaN for skipped frames.
  Eigen::VectorXd le, sd, auc;
};

MethodReport evaluate_method(const std::string& name, const Localizer& fn,
                             const SampleBatch& batch, const SourceSpace& space,
                             const MetricParams& params = {}, int threads = 1);

// Sweep table: axis label -> per-method (mean, std) for one metric.
struct SweepTable {
  std::vector<std::string> bin_labels;
  std::vector<int> bin_frames;  // evaluated frames per bin
  std::vector<std::string> methods;
  // metric -> [bin][method] (mean, std)
  std::map<std::string, std::vector<std::vector<std::pair<double, double>>>>
      cells;
};

struct EvalReport {
  std::vector<MethodReport> rows;
  std::map<std::string, SweepTable> sweeps;  // axis name -> table
};

// mean (population) and std of the finite entries of v.
std::pair<double, double> mean_std_finite(const Eigen::VectorXd& v);

// Table-shaped CSV: method,LE,SD,AUC with "mean(std)" cells. `header_lines`
// are emitted first, each prefixed with '#'.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report,
                    const std::vector<std::string>& header_lines);
void write_eval_json(const std::filesystem::path& path, const EvalReport& report,
                     const std::string& meta_json_text);

}  // namespace esiw
