#include "esiw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "esiw/parallel.hpp"

namespace esiw {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_metric_inputs(const MatrixX3d& true_centers,
                         const Eigen::VectorXd& j_hat,
                         const SourceSpace& space) {
  if (true_centers.rows() < 1) {
    throw ConfigError("metrics need at least one true center");
  }
  if (j_hat.size() != space.n_sources()) {
    throw DataError("estimate length does not match the source space");
  }
}

// Indices ordered by |j_hat| descending; ties broken by index for a stable,
// deterministic ordering.
std::vector<int> order_by_amplitude(const Eigen::VectorXd& j_hat) {
  std::vector<int> order(static_cast<std::size_t>(j_hat.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double aa = std::abs(j_hat[a]);
    const double ab = std::abs(j_hat[b]);
    if (aa != ab) return aa > ab;
    return a < b;
  });
  return order;
}

double min_center_distance(const MatrixX3d& centers,
                           const Eigen::RowVector3d& pos) {
  return (centers.rowwise() - pos).rowwise().norm().minCoeff();
}

}  // namespace

double localization_error(const MatrixX3d& true_centers,
                          const Eigen::VectorXd& j_hat,
                          const SourceSpace& space, double nms_radius_mm) {
  check_metric_inputs(true_centers, j_hat, space);
  if (j_hat.cwiseAbs().maxCoeff() == 0.0) {
    throw NumericError("localization peak undefined for an all-zero estimate");
  }

  const int k = static_cast<int>(true_centers.rows());
  const std::vector<int> order = order_by_amplitude(j_hat);
  std::vector<int> peaks;
  peaks.reserve(static_cast<std::size_t>(k));
  for (const int idx : order) {
    if (static_cast<int>(peaks.size()) >= k) break;
    if (std::abs(j_hat[idx]) == 0.0) break;
    bool suppressed = false;
    for (const int p : peaks) {
      if ((space.positions.row(idx) - space.positions.row(p)).norm() <
          nms_radius_mm) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) peaks.push_back(idx);
  }

  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (const int p : peaks) {
      best = std::min(
          best, (true_centers.row(c) - space.positions.row(p)).norm());
    }
    total += best;
  }
  return total / static_cast<double>(k);
}

double spatial_dispersion(const MatrixX3d& true_centers,
                          const Eigen::VectorXd& j_hat,
                          const SourceSpace& space) {
  check_metric_inputs(true_centers, j_hat, space);
  const double total_amp = j_hat.cwiseAbs().sum();
  if (total_amp == 0.0) {
    throw NumericError("spatial dispersion undefined for zero total amplitude");
  }
  double acc = 0.0;
  for (int s = 0; s < space.n_sources(); ++s) {
    acc += std::abs(j_hat[s]) *
           min_center_distance(true_centers, space.positions.row(s));
  }
  return acc / total_amp;
}

double auc_score(const MatrixX3d& true_centers, const Eigen::VectorXd& j_hat,
                 const SourceSpace& space, double radius_mm,
                 bool precision_recall) {
  check_metric_inputs(true_centers, j_hat, space);
  const int n = space.n_sources();
  std::vector<bool> positive(static_cast<std::size_t>(n));
  int n_pos = 0;
  for (int s = 0; s < n; ++s) {
    const bool p =
        min_center_distance(true_centers, space.positions.row(s)) <= radius_mm;
    positive[static_cast<std::size_t>(s)] = p;
    n_pos += p ? 1 : 0;
  }
  const int n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("AUC needs both positive and negative sources");
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd score = j_hat.cwiseAbs();

  if (!precision_recall) {
    // Rank statistic with tie averaging.
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return score[a] < score[b]; });
    std::vector<double> rank(static_cast<std::size_t>(n));
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && score[order[static_cast<std::size_t>(j + 1)]] ==
                              score[order[static_cast<std::size_t>(i)]]) {
        ++j;
      }
      const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
      for (int t = i; t <= j; ++t) {
        rank[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] =
            avg_rank;
      }
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (int s = 0; s < n; ++s) {
      if (positive[static_cast<std::size_t>(s)]) {
        rank_sum += rank[static_cast<std::size_t>(s)];
      }
    }
    const double u =
        rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  }

  // PR-AUC: walk thresholds from the highest score down, handling score ties
  // as a single operating point.
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return score[a] > score[b]; });
  double auc = 0.0;
  double prev_recall = 0.0;
  int tp = 0, fp = 0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && score[order[static_cast<std::size_t>(j + 1)]] ==
                            score[order[static_cast<std::size_t>(i)]]) {
      ++j;
    }
    for (int t = i; t <= j; ++t) {
      if (positive[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return auc;
}

std::pair<double, double> mean_std_finite(const Eigen::VectorXd& v) {
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      sum += v[i];
      ++n;
    }
  }
  if (n == 0) return {kNaN, kNaN};
  const double mean = sum / n;
  double sq = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) sq += (v[i] - mean) * (v[i] - mean);
  }
  return {mean, std::sqrt(sq / n)};  // population std
}

MethodReport evaluate_method(const std::string& name, const Localizer& fn,
                             const SampleBatch& batch, const SourceSpace& space,
                             const MetricParams& params, int threads) {
  const int frames = batch.n_frames();
  if (frames < 1) throw ConfigError("evaluation needs a nonempty batch");

  const Eigen::MatrixXd estimates = fn(batch.phi);
  if (estimates.rows() != frames || estimates.cols() != space.n_sources()) {
    throw DataError("localizer output shape mismatch");
  }

  MethodReport report;
  report.method = name;
  report.n_frames = frames;
  report.le.setConstant(frames, kNaN);
  report.sd.setConstant(frames, kNaN);
  report.auc.setConstant(frames, kNaN);

  std::vector<char> skipped(static_cast<std::size_t>(frames), 0);
  parallel_for(frames, threads, [&](int f) {
    const auto& center_ids = batch.centers[static_cast<std::size_t>(f)];
    MatrixX3d centers(center_ids.size(), 3);
    for (std::size_t c = 0; c < center_ids.size(); ++c) {
      centers.row(static_cast<int>(c)) =
          space.positions.row(center_ids[c]);
    }
    const Eigen::VectorXd j_hat = estimates.row(f);
    try {
      report.le[f] =
          localization_error(centers, j_hat, space, params.nms_radius_mm);
      report.sd[f] = spatial_dispersion(centers, j_hat, space);
      report.auc[f] = auc_score(centers, j_hat, space, params.auc_radius_mm,
                                params.precision_recall);
    } catch (const NumericError&) {
      skipped[static_cast<std::size_t>(f)] = 1;
    } catch (const DataError&) {
      skipped[static_cast<std::size_t>(f)] = 1;
    }
  });

  report.n_skipped = static_cast<int>(
      std::count(skipped.begin(), skipped.end(), static_cast<char>(1)));
  std::tie(report.le_mean, report.le_std) = mean_std_finite(report.le);
  std::tie(report.sd_mean, report.sd_std) = mean_std_finite(report.sd);
  std::tie(report.auc_mean, report.auc_std) = mean_std_finite(report.auc);
  return report;
}

namespace {

std::string cell(double mean, double std, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f(%.*f)", decimals, mean, decimals, std);
  return buf;
}

}  // namespace

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report,
                    const std::vector<std::string>& header_lines) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& line : header_lines) os << "# " << line << '\n';
  os << "method,LE,SD,AUC\n";
  for (const auto& row : report.rows) {
    os << row.method << ',' << cell(row.le_mean, row.le_std, 2) << ','
       << cell(row.sd_mean, row.sd_std, 2) << ','
       << cell(row.auc_mean, row.auc_std, 2) << '\n';
  }
}

void write_eval_json(const std::filesystem::path& path, const EvalReport& report,
                     const std::string& meta_json_text) {
  json doc;
  doc["meta"] = json::parse(meta_json_text);
  doc["rows"] = json::array();
  for (const auto& row : report.rows) {
    doc["rows"].push_back({{"method", row.method},
                           {"le_mean", row.le_mean},
                           {"le_std", row.le_std},
                           {"sd_mean", row.sd_mean},
                           {"sd_std", row.sd_std},
                           {"auc_mean", row.auc_mean},
                           {"auc_std", row.auc_std},
                           {"n_frames", row.n_frames},
                           {"n_skipped", row.n_skipped}});
  }
  doc["sweeps"] = json::object();
  for (const auto& [axis, table] : report.sweeps) {
    json jt;
    jt["bins"] = table.bin_labels;
    jt["bin_frames"] = table.bin_frames;
    jt["methods"] = table.methods;
    for (const auto& [metric, cells] : table.cells) {
      json rows = json::array();
      for (const auto& bin_cells : cells) {
        json r = json::array();
        for (const auto& [mean, std] : bin_cells) {
          r.push_back({{"mean", mean}, {"std", std}});
        }
        rows.push_back(r);
      }
      jt["metrics"][metric] = rows;
    }
    doc["sweeps"][axis] = jt;
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << doc.dump(2) << '\n';
}

}  // namespace esiw
