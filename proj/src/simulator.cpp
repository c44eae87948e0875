#include "esiw/simulator.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "esiw/matrix_io.hpp"
#include "esiw/parallel.hpp"

namespace esiw {

using nlohmann::json;

void GaussianSourceConfig::validate(int n_sources) const {
  if (n_centers_min < 1 || n_centers_max < n_centers_min) {
    throw ConfigError("n_centers range must satisfy 1 <= min <= max");
  }
  if (n_centers_max > n_sources) {
    throw ConfigError("n_centers_max " + std::to_string(n_centers_max) +
                      " exceeds source count " + std::to_string(n_sources));
  }
  if (!(sigma_s_mm > 0)) throw ConfigError("sigma_s_mm must be positive");
  if (!(loose >= 0.0 && loose <= 1.0)) {
    throw ConfigError("loose must lie in [0, 1]");
  }
}

Eigen::VectorXd gaussian_basis(int center, double sigma_s,
                               const SourceSpace& space, double omega) {
  if (!(sigma_s > 0)) throw ConfigError("sigma_s must be positive");
  if (center < 0 || center >= space.n_sources()) {
    throw DataError("basis center index out of range");
  }
  const double norm =
      omega / std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma_s, 3.0);
  const double inv_two_sigma2 = 0.5 / (sigma_s * sigma_s);
  const Eigen::VectorXd sq_dist =
      (space.positions.rowwise() - space.positions.row(center))
          .rowwise()
          .squaredNorm();
  return norm * (-inv_two_sigma2 * sq_dist.array()).exp().matrix();
}

SparseSourceDraw sample_sparse_source(const GaussianSourceConfig& cfg,
                                      const SourceSpace& space, Rng& rng) {
  const int n = space.n_sources();
  if (n == 0) throw ConfigError("source space is empty");
  cfg.validate(n);

  const int k = cfg.n_centers_min +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(
                    cfg.n_centers_max - cfg.n_centers_min + 1)));

  SparseSourceDraw draw;
  std::set<int> used;
  while (static_cast<int>(used.size()) < k) {
    used.insert(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
  }
  draw.centers.assign(used.begin(), used.end());
  draw.weights.resize(k);
  for (int i = 0; i < k; ++i) draw.weights[i] = rng.normal();

  draw.j = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < k; ++i) {
    draw.j += draw.weights[i] *
              gaussian_basis(draw.centers[static_cast<std::size_t>(i)],
                             cfg.sigma_s_mm, space, 1.0);
  }
  return draw;
}

namespace {

double rms(const Eigen::MatrixXd& m) {
  return std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

// Scale applied to unit noise so 10*log10(rms_s^2 / rms_n^2) == target_db.
double snr_scale_factor(double rms_signal, double rms_noise, double target_db) {
  if (!(rms_signal > 0)) {
    throw NumericError("SNR is undefined for an all-zero signal");
  }
  if (!(rms_noise > 0)) {
    throw NumericError("SNR scaling needs noise with positive RMS");
  }
  if (std::isinf(target_db)) return 0.0;
  return (rms_signal / rms_noise) * std::pow(10.0, -target_db / 20.0);
}

}  // namespace

Eigen::MatrixXd scale_noise_to_snr(const Eigen::MatrixXd& signal,
                                   const Eigen::MatrixXd& noise,
                                   double target_db) {
  const double factor = snr_scale_factor(rms(signal), rms(noise), target_db);
  return factor * noise;
}

SampleBatch synthesize_batch(const GaussianSourceConfig& cfg,
                             const SourceSpace& space, const LeadField& lf,
                             int n_frames, int threads,
                             Eigen::MatrixXd* channel_noise_out) {
  if (!lf.has_fixed()) {
    throw ConfigError("synthesis needs the fixed-orientation gain");
  }
  const int n = space.n_sources();
  const int m = lf.n_channels();
  if (lf.gain_fixed.cols() != n) {
    throw DataError("leadfield source count does not match the source space");
  }
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  cfg.validate(n);

  SampleBatch batch;
  batch.config = cfg;
  batch.phi.resize(n_frames, m);
  batch.j_true.resize(n_frames, n);
  batch.centers.resize(static_cast<std::size_t>(n_frames));
  batch.achieved_snr_db.resize(n_frames);
  if (channel_noise_out) channel_noise_out->resize(n_frames, m);

  parallel_for(n_frames, threads, [&](int f) {
    Rng rng(derive_stream(cfg.seed, "frame",
                          static_cast<std::uint64_t>(f)));
    const SparseSourceDraw draw = sample_sparse_source(cfg, space, rng);
    const Eigen::VectorXd clean = lf.gain_fixed * draw.j;
    const double rms_clean =
        std::sqrt(clean.squaredNorm() / static_cast<double>(m));

    Eigen::VectorXd sensor = clean;
    if (!std::isinf(cfg.snr_source_db)) {
      Eigen::VectorXd g(n);
      for (int i = 0; i < n; ++i) g[i] = rng.normal();
      const Eigen::VectorXd g_proj = lf.gain_fixed * g;
      const double alpha = snr_scale_factor(
          rms_clean, std::sqrt(g_proj.squaredNorm() / static_cast<double>(m)),
          cfg.snr_source_db);
      sensor += alpha * g_proj;
    }

    Eigen::VectorXd ch_noise = Eigen::VectorXd::Zero(m);
    double achieved = std::numeric_limits<double>::infinity();
    if (!std::isinf(cfg.snr_channel_db)) {
      for (int i = 0; i < m; ++i) ch_noise[i] = rng.normal();
      const double beta = snr_scale_factor(
          rms_clean, std::sqrt(ch_noise.squaredNorm() / static_cast<double>(m)),
          cfg.snr_channel_db);
      ch_noise *= beta;
      achieved = 10.0 * std::log10(clean.squaredNorm() / ch_noise.squaredNorm());
    }

    batch.phi.row(f) = (sensor + ch_noise).transpose();
    batch.j_true.row(f) = draw.j.transpose();
    batch.centers[static_cast<std::size_t>(f)] = draw.centers;
    batch.achieved_snr_db[f] = achieved;
    if (channel_noise_out) channel_noise_out->row(f) = ch_noise.transpose();
  });

  return batch;
}

Eigen::MatrixXd estimate_noise_covariance(const Eigen::MatrixXd& noise_frames,
                                          double shrinkage) {
  const int f = static_cast<int>(noise_frames.rows());
  const int m = static_cast<int>(noise_frames.cols());
  if (f < 2) throw DataError("covariance estimation needs at least 2 frames");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
    throw ConfigError("shrinkage must lie in [0, 1]");
  }
  const Eigen::RowVectorXd mean = noise_frames.colwise().mean();
  const Eigen::MatrixXd centered = noise_frames.rowwise() - mean;
  Eigen::MatrixXd c =
      (centered.transpose() * centered) / static_cast<double>(f - 1);
  const double iso = c.trace() / static_cast<double>(m);
  c = (1.0 - shrinkage) * c;
  c.diagonal().array() += shrinkage * iso;
  c = (0.5 * (c + c.transpose())).eval();
  return c;
}

namespace {

json finite_or_string(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

double from_finite_or_string(const json& v, const std::string& key) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw DataError("sidecar field " + key + " holds unexpected text");
  }
  return v.get<double>();
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace

void write_batch(const SampleBatch& batch, const std::filesystem::path& path) {
  const int f = batch.n_frames();
  const int m = static_cast<int>(batch.phi.cols());
  const int n = static_cast<int>(batch.j_true.cols());
  if (static_cast<int>(batch.centers.size()) != f ||
      batch.achieved_snr_db.size() != f || batch.j_true.rows() != f) {
    throw DataError("inconsistent batch blocks");
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  container::write_prefix(os, ContainerKind::kBatch);
  container::write_u32(os, static_cast<std::uint32_t>(f));
  container::write_u32(os, static_cast<std::uint32_t>(m));
  container::write_u32(os, static_cast<std::uint32_t>(n));
  container::write_matrix_block(os, batch.phi);
  container::write_matrix_block(os, batch.j_true);
  for (const auto& centers : batch.centers) {
    container::write_u32(os, static_cast<std::uint32_t>(centers.size()));
    for (const int c : centers) {
      container::write_u32(os, static_cast<std::uint32_t>(c));
    }
  }
  for (int i = 0; i < f; ++i) {
    container::write_f64(os, batch.achieved_snr_db[i]);
  }
  if (!os) throw DataError("failed while writing " + path.string());

  const auto& cfg = batch.config;
  json sidecar{
      {"format", "esiw-batch"},
      {"frames", f},
      {"channels", m},
      {"sources", n},
      {"config",
       {{"n_centers_min", cfg.n_centers_min},
        {"n_centers_max", cfg.n_centers_max},
        {"sigma_s_mm", cfg.sigma_s_mm},
        {"loose", cfg.loose},
        {"snr_channel_db", finite_or_string(cfg.snr_channel_db)},
        {"snr_source_db", finite_or_string(cfg.snr_source_db)},
        {"seed", cfg.seed}}},
  };
  std::ofstream meta(sidecar_path(path));
  if (!meta) throw DataError("cannot write sidecar for " + path.string());
  meta << sidecar.dump(2) << '\n';
}

SampleBatch read_batch(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  const std::string ctx = path.filename().string();
  const ContainerKind kind = container::read_prefix(is, ctx);
  if (kind != ContainerKind::kBatch) {
    throw DataError(ctx + ": not a sample-batch container");
  }
  const std::uint32_t f = container::read_u32(is, ctx);
  const std::uint32_t m = container::read_u32(is, ctx);
  const std::uint32_t n = container::read_u32(is, ctx);

  SampleBatch batch;
  batch.phi = container::read_matrix_block(is, f, m, ctx);
  batch.j_true = container::read_matrix_block(is, f, n, ctx);
  batch.centers.resize(f);
  for (std::uint32_t i = 0; i < f; ++i) {
    const std::uint32_t count = container::read_u32(is, ctx);
    if (count > n) throw DataError(ctx + ": center count exceeds sources");
    auto& centers = batch.centers[i];
    centers.resize(count);
    for (std::uint32_t c = 0; c < count; ++c) {
      const std::uint32_t idx = container::read_u32(is, ctx);
      if (idx >= n) throw DataError(ctx + ": center index out of range");
      centers[c] = static_cast<int>(idx);
    }
  }
  batch.achieved_snr_db.resize(f);
  for (std::uint32_t i = 0; i < f; ++i) {
    batch.achieved_snr_db[static_cast<int>(i)] = container::read_f64(is, ctx);
  }
  container::expect_eof(is, ctx);

  std::ifstream meta(sidecar_path(path));
  if (!meta) {
    throw DataError(ctx + ": missing sidecar " +
                    sidecar_path(path).filename().string());
  }
  json sidecar;
  try {
    meta >> sidecar;
    const json& jcfg = sidecar.at("config");
    auto& cfg = batch.config;
    cfg.n_centers_min = jcfg.at("n_centers_min").get<int>();
    cfg.n_centers_max = jcfg.at("n_centers_max").get<int>();
    cfg.sigma_s_mm = jcfg.at("sigma_s_mm").get<double>();
    cfg.loose = jcfg.at("loose").get<double>();
    cfg.snr_channel_db =
        from_finite_or_string(jcfg.at("snr_channel_db"), "snr_channel_db");
    cfg.snr_source_db =
        from_finite_or_string(jcfg.at("snr_source_db"), "snr_source_db");
    cfg.seed = jcfg.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(ctx + ": malformed sidecar (" + e.what() + ")");
  }
  return batch;
}

}  // namespace esiw
