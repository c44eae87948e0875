#include "esiw/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "esiw/rng.hpp"

namespace esiw {

using nlohmann::json;

namespace {

void expect_keys(const json& obj, const std::string& context,
                 std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key \"" + key + "\" in " + context);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field \"") + key + "\" has the wrong type");
  }
}

void require_positive(double v, const char* name) {
  if (!(v > 0)) {
    throw ConfigError(std::string(name) + " must be positive, got " +
                      std::to_string(v));
  }
}

}  // namespace

std::uint64_t ExperimentConfig::seed_for(const std::string& purpose) const {
  return derive_stream(seed, purpose);
}

ExperimentConfig parse_config_json(const std::string& text,
                                   const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": invalid JSON (" + e.what() + ")");
  }
  if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");

  ExperimentConfig cfg;
  expect_keys(root, "config root",
              {"seed", "output_dir", "threads", "source_space", "sensors",
               "simulator", "solvers", "esbn", "sweep", "metrics"});
  read_field(root, "seed", cfg.seed);
  read_field(root, "output_dir", cfg.output_dir);
  read_field(root, "threads", cfg.threads);
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");

  if (root.contains("source_space")) {
    const json& j = root.at("source_space");
    expect_keys(j, "source_space",
                {"radius_mm", "spacing_mm", "origin", "conductivity"});
    read_field(j, "radius_mm", cfg.source_space.radius_mm);
    read_field(j, "spacing_mm", cfg.source_space.spacing_mm);
    read_field(j, "origin", cfg.source_space.origin);
    read_field(j, "conductivity", cfg.source_space.conductivity);
  }
  require_positive(cfg.source_space.spacing_mm, "source_space.spacing_mm");
  if (!(cfg.source_space.radius_mm > cfg.source_space.spacing_mm)) {
    throw ConfigError("source_space.radius_mm must exceed spacing_mm");
  }
  require_positive(cfg.source_space.conductivity, "source_space.conductivity");

  if (root.contains("sensors")) {
    const json& j = root.at("sensors");
    expect_keys(j, "sensors", {"count", "radius_mm"});
    read_field(j, "count", cfg.sensors.count);
    read_field(j, "radius_mm", cfg.sensors.radius_mm);
  }
  if (cfg.sensors.count < 4) throw ConfigError("sensors.count must be >= 4");
  require_positive(cfg.sensors.radius_mm, "sensors.radius_mm");

  if (root.contains("simulator")) {
    const json& j = root.at("simulator");
    expect_keys(j, "simulator",
                {"sigma_s_mm", "n_centers_min", "n_centers_max", "loose",
                 "snr_channel_db", "snr_source_db", "train_frames",
                 "test_frames", "noise_frames", "shrinkage"});
    read_field(j, "sigma_s_mm", cfg.simulator.sigma_s_mm);
    read_field(j, "n_centers_min", cfg.simulator.n_centers_min);
    read_field(j, "n_centers_max", cfg.simulator.n_centers_max);
    read_field(j, "loose", cfg.simulator.loose);
    read_field(j, "snr_channel_db", cfg.simulator.snr_channel_db);
    read_field(j, "snr_source_db", cfg.simulator.snr_source_db);
    read_field(j, "train_frames", cfg.simulator.train_frames);
    read_field(j, "test_frames", cfg.simulator.test_frames);
    read_field(j, "noise_frames", cfg.simulator.noise_frames);
    read_field(j, "shrinkage", cfg.simulator.shrinkage);
  }
  require_positive(cfg.simulator.sigma_s_mm, "simulator.sigma_s_mm");
  if (!(cfg.simulator.loose >= 0.0 && cfg.simulator.loose <= 1.0)) {
    throw ConfigError("simulator.loose must lie in [0, 1], got " +
                      std::to_string(cfg.simulator.loose));
  }
  if (!std::isfinite(cfg.simulator.snr_channel_db) ||
      !std::isfinite(cfg.simulator.snr_source_db)) {
    throw ConfigError("configured SNR values must be finite");
  }
  if (cfg.simulator.train_frames < 1 || cfg.simulator.test_frames < 1 ||
      cfg.simulator.noise_frames < 2) {
    throw ConfigError("frame counts must be positive (noise_frames >= 2)");
  }
  if (cfg.simulator.noise_frames > cfg.simulator.test_frames) {
    throw ConfigError("noise_frames cannot exceed test_frames");
  }
  if (!(cfg.simulator.shrinkage >= 0.0 && cfg.simulator.shrinkage <= 1.0)) {
    throw ConfigError("simulator.shrinkage must lie in [0, 1]");
  }

  if (root.contains("solvers")) {
    const json& j = root.at("solvers");
    expect_keys(j, "solvers",
                {"methods", "lambda2", "depth_weighting_p", "eloreta_tol",
                 "eloreta_max_iter"});
    read_field(j, "methods", cfg.solvers.methods);
    read_field(j, "lambda2", cfg.solvers.lambda2);
    read_field(j, "depth_weighting_p", cfg.solvers.depth_weighting_p);
    read_field(j, "eloreta_tol", cfg.solvers.eloreta_tol);
    read_field(j, "eloreta_max_iter", cfg.solvers.eloreta_max_iter);
  }
  for (const auto& m : cfg.solvers.methods) {
    if (m != "mne" && m != "dspm" && m != "sloreta" && m != "eloreta") {
      throw ConfigError("unknown solver method \"" + m + "\"");
    }
  }
  require_positive(cfg.solvers.eloreta_tol, "solvers.eloreta_tol");
  if (cfg.solvers.eloreta_max_iter < 1) {
    throw ConfigError("solvers.eloreta_max_iter must be >= 1");
  }

  if (root.contains("esbn")) {
    const json& j = root.at("esbn");
    expect_keys(j, "esbn",
                {"hidden", "features", "basis", "dropout", "learning_rate",
                 "weight_decay", "batch_size", "epochs", "lambda_s1",
                 "lambda_s2", "lambda_sim", "finetune"});
    auto& h = cfg.esbn.hyper;
    read_field(j, "hidden", h.hidden);
    read_field(j, "features", h.features);
    read_field(j, "basis", h.n_basis);
    read_field(j, "dropout", h.dropout);
    read_field(j, "learning_rate", h.learning_rate);
    read_field(j, "weight_decay", h.weight_decay);
    read_field(j, "batch_size", h.batch_size);
    read_field(j, "epochs", h.epochs);
    read_field(j, "lambda_s1", h.lambda_s1);
    read_field(j, "lambda_s2", h.lambda_s2);
    read_field(j, "lambda_sim", h.lambda_sim);
    if (j.contains("finetune")) {
      const json& ft = j.at("finetune");
      expect_keys(ft, "esbn.finetune",
                  {"enabled", "epochs", "learning_rate", "frames",
                   "holdout_frames"});
      read_field(ft, "enabled", cfg.esbn.finetune_enabled);
      read_field(ft, "epochs", cfg.esbn.finetune_epochs);
      read_field(ft, "learning_rate", cfg.esbn.finetune_lr);
      read_field(ft, "frames", cfg.esbn.finetune_frames);
      read_field(ft, "holdout_frames", cfg.esbn.finetune_holdout_frames);
    }
  }
  {
    const auto& h = cfg.esbn.hyper;
    if (h.hidden < 1 || h.features < 1 || h.n_basis < 1 || h.batch_size < 1 ||
        h.epochs < 0) {
      throw ConfigError("esbn dimensions/epochs out of range");
    }
    if (!(h.dropout >= 0.0 && h.dropout < 1.0)) {
      throw ConfigError("esbn.dropout must lie in [0, 1)");
    }
    if (cfg.esbn.finetune_epochs < 0 || cfg.esbn.finetune_frames < 1 ||
        cfg.esbn.finetune_holdout_frames < 1) {
      throw ConfigError("esbn.finetune counts out of range");
    }
  }

  if (root.contains("sweep")) {
    const json& j = root.at("sweep");
    expect_keys(j, "sweep", {"snr_list", "loose_list", "depth_bins"});
    read_field(j, "snr_list", cfg.sweep.snr_list);
    read_field(j, "loose_list", cfg.sweep.loose_list);
    read_field(j, "depth_bins", cfg.sweep.depth_bins);
  }
  for (const double l : cfg.sweep.loose_list) {
    if (!(l >= 0.0 && l <= 1.0)) {
      throw ConfigError("sweep.loose_list entries must lie in [0, 1]");
    }
  }
  if (cfg.sweep.depth_bins < 2) {
    throw ConfigError("sweep.depth_bins must be >= 2");
  }

  if (root.contains("metrics")) {
    const json& j = root.at("metrics");
    expect_keys(j, "metrics", {"auc_radius_mm", "nms_radius_mm", "pr_auc"});
    read_field(j, "auc_radius_mm", cfg.metrics.auc_radius_mm);
    read_field(j, "nms_radius_mm", cfg.metrics.nms_radius_mm);
    read_field(j, "pr_auc", cfg.metrics.precision_recall);
  }
  require_positive(cfg.metrics.auc_radius_mm, "metrics.auc_radius_mm");
  require_positive(cfg.metrics.nms_radius_mm, "metrics.nms_radius_mm");

  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_json(buf.str(), path.filename().string());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  // Canonical form for hashing: output_dir and threads are execution details
  // that cannot influence any result, so they stay out of the identity.
  const auto& h = cfg.esbn.hyper;
  const json doc{
      {"seed", cfg.seed},
      {"source_space",
       {{"radius_mm", cfg.source_space.radius_mm},
        {"spacing_mm", cfg.source_space.spacing_mm},
        {"origin", cfg.source_space.origin},
        {"conductivity", cfg.source_space.conductivity}}},
      {"sensors",
       {{"count", cfg.sensors.count}, {"radius_mm", cfg.sensors.radius_mm}}},
      {"simulator",
       {{"sigma_s_mm", cfg.simulator.sigma_s_mm},
        {"n_centers_min", cfg.simulator.n_centers_min},
        {"n_centers_max", cfg.simulator.n_centers_max},
        {"loose", cfg.simulator.loose},
        {"snr_channel_db", cfg.simulator.snr_channel_db},
        {"snr_source_db", cfg.simulator.snr_source_db},
        {"train_frames", cfg.simulator.train_frames},
        {"test_frames", cfg.simulator.test_frames},
        {"noise_frames", cfg.simulator.noise_frames},
        {"shrinkage", cfg.simulator.shrinkage}}},
      {"solvers",
       {{"methods", cfg.solvers.methods},
        {"lambda2", cfg.solvers.lambda2},
        {"depth_weighting_p", cfg.solvers.depth_weighting_p},
        {"eloreta_tol", cfg.solvers.eloreta_tol},
        {"eloreta_max_iter", cfg.solvers.eloreta_max_iter}}},
      {"esbn",
       {{"hidden", h.hidden},
        {"features", h.features},
        {"basis", h.n_basis},
        {"dropout", h.dropout},
        {"learning_rate", h.learning_rate},
        {"weight_decay", h.weight_decay},
        {"batch_size", h.batch_size},
        {"epochs", h.epochs},
        {"lambda_s1", h.lambda_s1},
        {"lambda_s2", h.lambda_s2},
        {"lambda_sim", h.lambda_sim},
        {"finetune",
         {{"enabled", cfg.esbn.finetune_enabled},
          {"epochs", cfg.esbn.finetune_epochs},
          {"learning_rate", cfg.esbn.finetune_lr},
          {"frames", cfg.esbn.finetune_frames},
          {"holdout_frames", cfg.esbn.finetune_holdout_frames}}}}},
      {"sweep",
       {{"snr_list", cfg.sweep.snr_list},
        {"loose_list", cfg.sweep.loose_list},
        {"depth_bins", cfg.sweep.depth_bins}}},
      {"metrics",
       {{"auc_radius_mm", cfg.metrics.auc_radius_mm},
        {"nms_radius_mm", cfg.metrics.nms_radius_mm},
        {"pr_auc", cfg.metrics.precision_recall}}},
  };
  return doc.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(config_to_json(cfg));
}

}  // namespace esiw
