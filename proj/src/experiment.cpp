#include "esiw/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "esiw/matrix_io.hpp"
#include "esiw/parallel.hpp"
#include "esiw/prewitt.hpp"
#include "esiw/svg.hpp"

namespace esiw {

using nlohmann::json;

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

json meta_json(const RunContext& ctx) {
  return json{{"tool", kToolName},
              {"version", kToolVersion},
              {"config_hash", hash_hex(config_hash(ctx.cfg))},
              {"seed", ctx.cfg.seed}};
}

std::string meta_line(const RunContext& ctx) {
  std::ostringstream os;
  os << kToolName << ' ' << kToolVersion
     << " config=" << hash_hex(config_hash(ctx.cfg))
     << " seed=" << ctx.cfg.seed;
  return os.str();
}

void write_sidecar(const std::filesystem::path& data_path, json doc) {
  std::filesystem::path p = data_path;
  p.replace_extension(".meta.json");
  std::ofstream os(p);
  if (!os) throw DataError("cannot write sidecar " + p.string());
  os << doc.dump(2) << '\n';
}

double entry_rms(const Eigen::MatrixXd& m) {
  return std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

// Source amplitudes are sparse, so an entry-RMS scale would leave the
// normalized basis rows an order of magnitude above unit size and the plain
// SGD step unstable. The per-frame peak gives an O(1) target scale.
double peak_scale(const Eigen::MatrixXd& rows) {
  double acc = 0.0;
  for (int r = 0; r < rows.rows(); ++r) {
    acc += rows.row(r).cwiseAbs().maxCoeff();
  }
  return acc / static_cast<double>(rows.rows());
}

GaussianSourceConfig simulator_config(const ExperimentConfig& cfg,
                                      std::uint64_t seed) {
  GaussianSourceConfig gc;
  gc.n_centers_min = cfg.simulator.n_centers_min;
  gc.n_centers_max = cfg.simulator.n_centers_max;
  gc.sigma_s_mm = cfg.simulator.sigma_s_mm;
  gc.loose = cfg.simulator.loose;
  gc.snr_channel_db = cfg.simulator.snr_channel_db;
  gc.snr_source_db = cfg.simulator.snr_source_db;
  gc.seed = seed;
  return gc;
}

PriorModel make_prior(const ExperimentConfig& cfg, const LeadField& lf,
                      Eigen::MatrixXd c) {
  PriorModel prior;
  prior.c = std::move(c);
  const int n = lf.n_sources();
  if (cfg.solvers.depth_weighting_p != 0.0) {
    const Eigen::VectorXd scores = source_depth_scores(lf);
    prior.r_diag.resize(n);
    for (int i = 0; i < n; ++i) {
      prior.r_diag[i] = std::pow(scores[i], -cfg.solvers.depth_weighting_p);
    }
  } else {
    prior.r_diag = Eigen::VectorXd::Ones(n);
  }
  return prior;
}

std::string display_name(const std::string& id) {
  if (id == "mne") return "MNE";
  if (id == "dspm") return "dSPM";
  if (id == "sloreta") return "sLORETA";
  if (id == "eloreta") return "eLORETA";
  return id;
}

struct MethodSet {
  std::vector<std::pair<std::string, Localizer>> entries;
};

// Builds the configured numerical operators from the leadfield and the
// estimated noise covariance; dSPM/sLORETA share the underlying MNE solve.
MethodSet numerical_methods(const ExperimentConfig& cfg, const LeadField& lf,
                            const Eigen::MatrixXd& c) {
  MethodSet set;
  const PriorModel prior = make_prior(cfg, lf, c);
  const double lambda2 = cfg.solvers.lambda2 >= 0
                             ? cfg.solvers.lambda2
                             : auto_lambda2(lf, prior);
  InverseOperator mne;
  bool have_mne = false;
  auto ensure_mne = [&]() {
    if (!have_mne) {
      mne = mne_operator(lf, prior, lambda2);
      have_mne = true;
    }
  };
  for (const auto& id : cfg.solvers.methods) {
    InverseOperator op;
    if (id == "mne") {
      ensure_mne();
      op = mne;
    } else if (id == "dspm") {
      ensure_mne();
      op = dspm_operator(mne, prior);
    } else if (id == "sloreta") {
      ensure_mne();
      op = sloreta_operator(mne, lf);
    } else if (id == "eloreta") {
      op = eloreta_operator(lf, prior, lambda2, cfg.solvers.eloreta_tol,
                            cfg.solvers.eloreta_max_iter);
      if (!op.converged) {
        std::cerr << "warning: eLORETA stopped after " << op.iterations
                  << " iterations without reaching tol\n";
      }
    } else {
      throw ConfigError("unknown solver method \"" + id + "\"");
    }
    set.entries.emplace_back(display_name(id),
                             [op](const Eigen::MatrixXd& phi) {
                               return apply_inverse(op, phi);
                             });
  }
  return set;
}

Localizer esbn_localizer(const std::filesystem::path& checkpoint) {
  const EsbnModel model = load_esbn(checkpoint);
  return [model](const Eigen::MatrixXd& phi) {
    return esbn_forward_batch(model, phi);
  };
}

// Evaluation core shared by eval and the sweep axes.
EvalReport evaluate_all(const RunContext& ctx, const Workbench& wb,
                        const SampleBatch& batch,
                        const Eigen::MatrixXd& noise_frames,
                        const std::optional<std::filesystem::path>& ckpt,
                        const std::optional<std::filesystem::path>& ckpt_ft) {
  const Eigen::MatrixXd c =
      estimate_noise_covariance(noise_frames, ctx.cfg.simulator.shrinkage);

  MethodSet methods;
  if (ckpt) {
    methods.entries.emplace_back("ESBN Supervised", esbn_localizer(*ckpt));
  }
  if (ckpt_ft) {
    methods.entries.emplace_back("ESBN Unsupervised", esbn_localizer(*ckpt_ft));
  }
  MethodSet numerical = numerical_methods(ctx.cfg, wb.lf, c);
  for (auto& e : numerical.entries) methods.entries.push_back(std::move(e));

  EvalReport report;
  for (const auto& [name, fn] : methods.entries) {
    report.rows.push_back(evaluate_method(name, fn, batch, wb.space,
                                          ctx.cfg.metrics, ctx.threads));
  }
  return report;
}

std::optional<std::filesystem::path> existing(
    const std::filesystem::path& p) {
  if (std::filesystem::exists(p)) return p;
  return std::nullopt;
}

}  // namespace

Workbench build_workbench(const ExperimentConfig& cfg,
                          std::optional<double> loose_override) {
  Workbench wb;
  wb.space = build_grid_source_space(
      cfg.source_space.radius_mm, cfg.source_space.spacing_mm,
      Eigen::Vector3d(cfg.source_space.origin[0], cfg.source_space.origin[1],
                      cfg.source_space.origin[2]));
  wb.sensors =
      fibonacci_hemisphere_sensors(cfg.sensors.count, cfg.sensors.radius_mm);
  LeadField free = analytic_leadfield(wb.space, wb.sensors,
                                      cfg.source_space.conductivity);
  const double loose =
      loose_override ? *loose_override : cfg.simulator.loose;
  Rng ori_rng(cfg.seed_for("orientations"));
  wb.space.orientations = sample_loose_orientations(free, loose, ori_rng);
  wb.lf = collapse_leadfield(free, wb.space.orientations);
  return wb;
}

RunContext make_run_context(const ExperimentConfig& cfg, bool quiet) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.paths.out = cfg.output_dir;
  ctx.threads = resolve_thread_count(cfg.threads);
  ctx.quiet = quiet;
  return ctx;
}

void run_simulate(const RunContext& ctx) {
  const Workbench wb = build_workbench(ctx.cfg);
  std::filesystem::create_directories(ctx.paths.dataset());

  const GaussianSourceConfig train_cfg =
      simulator_config(ctx.cfg, ctx.cfg.seed_for("train-data"));
  const GaussianSourceConfig test_cfg =
      simulator_config(ctx.cfg, ctx.cfg.seed_for("test-data"));

  const SampleBatch train = synthesize_batch(
      train_cfg, wb.space, wb.lf, ctx.cfg.simulator.train_frames, ctx.threads);
  Eigen::MatrixXd test_noise;
  const SampleBatch test =
      synthesize_batch(test_cfg, wb.space, wb.lf, ctx.cfg.simulator.test_frames,
                       ctx.threads, &test_noise);
  const Eigen::MatrixXd noise_frames =
      test_noise.topRows(ctx.cfg.simulator.noise_frames);

  const json meta = meta_json(ctx);
  write_batch(train, ctx.paths.dataset() / "train.esiw");
  write_batch(test, ctx.paths.dataset() / "test.esiw");
  // write_batch emits the generator sidecar; extend it with run provenance.
  for (const char* stem : {"train", "test"}) {
    const auto p = ctx.paths.dataset() / (std::string(stem) + ".meta.json");
    std::ifstream is(p);
    json doc;
    is >> doc;
    is.close();
    doc["meta"] = meta;
    doc["target_snr_channel_db"] = ctx.cfg.simulator.snr_channel_db;
    std::ofstream os(p);
    os << doc.dump(2) << '\n';
  }

  write_matrix(ctx.paths.dataset() / "noise.esiw", noise_frames,
               ContainerKind::kGeneric);
  write_sidecar(ctx.paths.dataset() / "noise.esiw",
                json{{"meta", meta},
                     {"format", "channel-noise frames"},
                     {"frames", noise_frames.rows()}});

  export_leadfield(wb.lf, ctx.paths.dataset(), "leadfield");
  write_sidecar(ctx.paths.dataset() / "leadfield.free.esiw",
                json{{"meta", meta},
                     {"grid_spacing_mm", ctx.cfg.source_space.spacing_mm},
                     {"radius_mm", ctx.cfg.source_space.radius_mm},
                     {"sensor_count", ctx.cfg.sensors.count},
                     {"sources", wb.space.n_sources()},
                     {"loose", ctx.cfg.simulator.loose},
                     {"creation_seed", ctx.cfg.seed}});

  if (!ctx.quiet) {
    auto summary = [](const SampleBatch& b) {
      const auto [mean, sd] = mean_std_finite(b.achieved_snr_db);
      (void)sd;
      return std::tuple{mean, b.achieved_snr_db.minCoeff(),
                        b.achieved_snr_db.maxCoeff()};
    };
    const auto [tr_mean, tr_min, tr_max] = summary(train);
    const auto [te_mean, te_min, te_max] = summary(test);
    std::printf("simulate: %d sources, %d sensors\n", wb.space.n_sources(),
                static_cast<int>(wb.sensors.rows()));
    std::printf("  train: %d frames, achieved SNR %.3f dB [%.3f, %.3f]\n",
                train.n_frames(), tr_mean, tr_min, tr_max);
    std::printf("  test:  %d frames, achieved SNR %.3f dB [%.3f, %.3f]\n",
                test.n_frames(), te_mean, te_min, te_max);
  }
}

void run_train(const RunContext& ctx,
               const std::optional<std::filesystem::path>& resume_from) {
  const auto train_path = ctx.paths.dataset() / "train.esiw";
  if (!std::filesystem::exists(train_path)) {
    throw DataError("training data not found at " + train_path.string() +
                    "; run `esiw simulate` first");
  }
  const SampleBatch train = read_batch(train_path);
  const Workbench wb = build_workbench(ctx.cfg);
  if (static_cast<int>(train.j_true.cols()) != wb.space.n_sources()) {
    throw DataError("training data source count does not match the config");
  }
  const EdgeOperator edge = make_edge_operator(wb.space);
  std::filesystem::create_directories(ctx.paths.model());

  EsbnHyper hyper = ctx.cfg.esbn.hyper;
  hyper.seed = ctx.cfg.seed_for("train");

  EsbnModel model;
  if (resume_from) {
    model = load_esbn(*resume_from);
  } else {
    double phi_scale = entry_rms(train.phi);
    double j_scale = peak_scale(train.j_true);
    if (!(phi_scale > 0)) phi_scale = 1.0;
    if (!(j_scale > 0)) j_scale = 1.0;
    Rng init_rng(ctx.cfg.seed_for("init"));
    model = init_esbn(static_cast<int>(train.phi.cols()), hyper, wb.space,
                      ctx.cfg.simulator.sigma_s_mm, phi_scale, j_scale,
                      init_rng);
  }

  const int first_epoch = model.epochs_trained;
  const std::vector<double> trace = train_supervised(
      model, train.phi, train.j_true, edge, hyper, ctx.threads);

  const json meta = meta_json(ctx);
  save_esbn(ctx.paths.model() / "esbn.esiw", model);
  write_sidecar(
      ctx.paths.model() / "esbn.esiw",
      json{{"meta", meta},
           {"hyper",
            {{"hidden", hyper.hidden},
             {"features", hyper.features},
             {"basis", hyper.n_basis},
             {"dropout", hyper.dropout},
             {"learning_rate", hyper.learning_rate},
             {"weight_decay", hyper.weight_decay},
             {"batch_size", hyper.batch_size},
             {"epochs", hyper.epochs},
             {"lambda_s1", hyper.lambda_s1},
             {"lambda_s2", hyper.lambda_s2},
             {"lambda_sim", hyper.lambda_sim}}},
           {"training_seed", hyper.seed},
           {"phi_scale", model.phi_scale},
           {"j_scale", model.j_scale},
           {"epochs_trained", model.epochs_trained},
           {"dataset_fingerprint",
            hash_hex(mix_u64(config_hash(ctx.cfg), train.config.seed))}});

  {
    std::ofstream os(ctx.paths.model() / "loss_trace.csv",
                     resume_from ? std::ios::app : std::ios::out);
    if (!os) throw DataError("cannot write loss_trace.csv");
    if (!resume_from) {
      os << "# " << meta_line(ctx) << "\n";
      os << "epoch,loss\n";
    }
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", trace[i]);
      os << first_epoch + static_cast<int>(i) << ',' << buf << '\n';
    }
  }
  if (!ctx.quiet && !trace.empty()) {
    std::printf("train: %zu epoch(s), loss %.6g -> %.6g\n", trace.size(),
                trace.front(), trace.back());
  }

  json summary{{"meta", meta},
               {"supervised_epochs", model.epochs_trained},
               {"finetune", nullptr}};
  if (!trace.empty()) summary["final_supervised_loss"] = trace.back();

  if (ctx.cfg.esbn.finetune_enabled && ctx.cfg.esbn.finetune_epochs > 0) {
    GaussianSourceConfig ft_cfg =
        simulator_config(ctx.cfg, ctx.cfg.seed_for("finetune-data"));
    Eigen::MatrixXd ft_noise;
    const SampleBatch ft = synthesize_batch(ft_cfg, wb.space, wb.lf,
                                            ctx.cfg.esbn.finetune_frames,
                                            ctx.threads, &ft_noise);
    GaussianSourceConfig hold_cfg =
        simulator_config(ctx.cfg, ctx.cfg.seed_for("finetune-holdout"));
    const SampleBatch holdout =
        synthesize_batch(hold_cfg, wb.space, wb.lf,
                         ctx.cfg.esbn.finetune_holdout_frames, ctx.threads);

    const NoiseModel noise(
        estimate_noise_covariance(ft_noise, ctx.cfg.simulator.shrinkage));
    const double before = mean_mahalanobis_residual(model, holdout.phi,
                                                    wb.lf.gain_fixed, noise);

    EsbnModel tuned = model;
    EsbnHyper ft_hyper = hyper;
    ft_hyper.learning_rate = ctx.cfg.esbn.finetune_lr;
    ft_hyper.epochs = ctx.cfg.esbn.finetune_epochs;
    ft_hyper.seed = ctx.cfg.seed_for("finetune");
    const std::vector<double> ft_trace = finetune_unsupervised(
        tuned, ft.phi, wb.lf, noise, edge, ft_hyper, ctx.threads);
    const double after = mean_mahalanobis_residual(tuned, holdout.phi,
                                                   wb.lf.gain_fixed, noise);

    save_esbn(ctx.paths.model() / "esbn_finetuned.esiw", tuned);
    write_sidecar(ctx.paths.model() / "esbn_finetuned.esiw",
                  json{{"meta", meta},
                       {"stage", "unsupervised fine-tune"},
                       {"epochs", ctx.cfg.esbn.finetune_epochs},
                       {"learning_rate", ctx.cfg.esbn.finetune_lr},
                       {"frames", ctx.cfg.esbn.finetune_frames}});
    {
      std::ofstream os(ctx.paths.model() / "finetune_trace.csv");
      os << "# " << meta_line(ctx) << "\n";
      os << "epoch,mean_mahalanobis_residual\n";
      char buf[64];
      for (std::size_t i = 0; i < ft_trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", ft_trace[i]);
        os << i << ',' << buf << '\n';
      }
    }
    summary["finetune"] = json{
        {"residual_before", before},
        {"residual_after", after},
        {"relative_decrease", before > 0 ? (before - after) / before : 0.0},
        {"epochs", ctx.cfg.esbn.finetune_epochs}};
    if (!ctx.quiet) {
      std::printf(
          "finetune: held-out Mahalanobis residual %.6g -> %.6g (%.1f%%)\n",
          before, after, before > 0 ? 100.0 * (before - after) / before : 0.0);
    }
  }
  std::ofstream os(ctx.paths.model() / "train_summary.json");
  os << summary.dump(2) << '\n';
}

EvalReport run_eval(const RunContext& ctx,
                    const std::optional<std::filesystem::path>& checkpoint,
                    const std::optional<std::filesystem::path>& finetuned,
                    const std::optional<std::filesystem::path>& dataset) {
  const std::filesystem::path data_path =
      dataset ? *dataset : ctx.paths.dataset() / "test.esiw";
  if (!std::filesystem::exists(data_path)) {
    throw DataError("test data not found at " + data_path.string() +
                    "; run `esiw simulate` first");
  }
  const SampleBatch batch = read_batch(data_path);
  const std::filesystem::path noise_path =
      data_path.parent_path() / "noise.esiw";
  if (!std::filesystem::exists(noise_path)) {
    throw DataError("noise frames not found at " + noise_path.string());
  }
  const Eigen::MatrixXd noise_frames = read_matrix(noise_path);

  // Rebuild geometry at the loose factor the batch was generated with so the
  // operators see the matching leadfield.
  const Workbench wb = build_workbench(ctx.cfg, batch.config.loose);

  std::optional<std::filesystem::path> ckpt = checkpoint;
  if (!ckpt) ckpt = existing(ctx.paths.model() / "esbn.esiw");
  else if (!std::filesystem::exists(*ckpt)) {
    throw DataError("checkpoint not found: " + ckpt->string());
  }
  std::optional<std::filesystem::path> ckpt_ft = finetuned;
  if (!ckpt_ft) ckpt_ft = existing(ctx.paths.model() / "esbn_finetuned.esiw");
  else if (!std::filesystem::exists(*ckpt_ft)) {
    throw DataError("checkpoint not found: " + ckpt_ft->string());
  }

  const EvalReport report =
      evaluate_all(ctx, wb, batch, noise_frames, ckpt, ckpt_ft);

  std::filesystem::create_directories(ctx.paths.eval());
  write_eval_csv(ctx.paths.eval() / "eval.csv", report, {meta_line(ctx)});
  write_eval_json(ctx.paths.eval() / "eval.json", report,
                  meta_json(ctx).dump());
  if (!ctx.quiet) {
    for (const auto& row : report.rows) {
      std::printf("  %-18s LE %7.2f(%.2f)  SD %7.2f(%.2f)  AUC %.3f(%.3f)\n",
                  row.method.c_str(), row.le_mean, row.le_std, row.sd_mean,
                  row.sd_std, row.auc_mean, row.auc_std);
    }
  }
  return report;
}

namespace {

struct SweepPoint {
  std::string label;
  EvalReport report;  // per-point full evaluation
};

SweepTable table_from_points(const std::vector<SweepPoint>& points) {
  SweepTable table;
  for (const auto& p : points) {
    table.bin_labels.push_back(p.label);
    table.bin_frames.push_back(
        p.report.rows.empty() ? 0 : p.report.rows.front().n_frames);
  }
  if (!points.empty()) {
    for (const auto& row : points.front().report.rows) {
      table.methods.push_back(row.method);
    }
  }
  for (const char* metric : {"LE", "SD", "AUC"}) {
    auto& cells = table.cells[metric];
    for (const auto& p : points) {
      std::vector<std::pair<double, double>> bin_cells;
      for (const auto& row : p.report.rows) {
        if (std::string(metric) == "LE") {
          bin_cells.emplace_back(row.le_mean, row.le_std);
        } else if (std::string(metric) == "SD") {
          bin_cells.emplace_back(row.sd_mean, row.sd_std);
        } else {
          bin_cells.emplace_back(row.auc_mean, row.auc_std);
        }
      }
      cells.push_back(std::move(bin_cells));
    }
  }
  return table;
}

void write_sweep_outputs(const RunContext& ctx, const std::string& axis,
                         const SweepTable& table) {
  std::filesystem::create_directories(ctx.paths.sweep());
  const auto csv_path = ctx.paths.sweep() / ("sweep_" + axis + ".csv");
  std::ofstream os(csv_path);
  if (!os) throw DataError("cannot write " + csv_path.string());
  os << "# " << meta_line(ctx) << "\n";
  os << "axis,bin,n_frames,method,le_mean,le_std,sd_mean,sd_std,auc_mean,"
        "auc_std\n";
  char buf[256];
  for (std::size_t b = 0; b < table.bin_labels.size(); ++b) {
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
      const auto& le = table.cells.at("LE")[b][m];
      const auto& sd = table.cells.at("SD")[b][m];
      const auto& auc = table.cells.at("AUC")[b][m];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                    le.first, le.second, sd.first, sd.second, auc.first,
                    auc.second);
      os << axis << ',' << table.bin_labels[b] << ',' << table.bin_frames[b]
         << ',' << table.methods[m] << ',' << buf << '\n';
    }
  }

  EvalReport holder;
  holder.sweeps[axis] = table;
  write_eval_json(ctx.paths.sweep() / ("sweep_" + axis + ".json"), holder,
                  meta_json(ctx).dump());

  for (const char* metric : {"LE", "SD", "AUC"}) {
    BarChart chart;
    chart.title = "sweep over " + axis + " - " + metric;
    chart.y_label = std::string(metric) +
                    (std::string(metric) == "AUC" ? "" : " [mm]");
    chart.group_labels = table.bin_labels;
    chart.series_labels = table.methods;
    chart.comment = meta_line(ctx);
    chart.values.assign(table.methods.size(), {});
    chart.errors.assign(table.methods.size(), {});
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
      for (std::size_t b = 0; b < table.bin_labels.size(); ++b) {
        const auto& cell = table.cells.at(metric)[b][m];
        chart.values[m].push_back(cell.first);
        chart.errors[m].push_back(cell.second);
      }
    }
    std::string lower(metric);
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    write_bar_chart_svg(
        ctx.paths.sweep() / ("sweep_" + axis + "_" + lower + ".svg"), chart);
  }
}

std::string format_db(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g dB", v);
  return buf;
}

std::string format_loose(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "loose %g", v);
  return buf;
}

}  // namespace

EvalReport run_sweep(const RunContext& ctx, const std::string& axis) {
  std::optional<std::filesystem::path> ckpt =
      existing(ctx.paths.model() / "esbn.esiw");
  std::optional<std::filesystem::path> ckpt_ft =
      existing(ctx.paths.model() / "esbn_finetuned.esiw");

  std::vector<SweepPoint> points;

  if (axis == "snr") {
    if (ctx.cfg.sweep.snr_list.empty()) {
      throw ConfigError("sweep.snr_list is empty");
    }
    const Workbench wb = build_workbench(ctx.cfg);
    for (const double snr : ctx.cfg.sweep.snr_list) {
      GaussianSourceConfig gc =
          simulator_config(ctx.cfg, ctx.cfg.seed_for("test-data"));
      gc.snr_channel_db = snr;  // same seed: identical sources, new noise level
      Eigen::MatrixXd noise;
      const SampleBatch batch = synthesize_batch(
          gc, wb.space, wb.lf, ctx.cfg.simulator.test_frames, ctx.threads,
          &noise);
      points.push_back(
          {format_db(snr),
           evaluate_all(ctx, wb, batch,
                        noise.topRows(ctx.cfg.simulator.noise_frames), ckpt,
                        ckpt_ft)});
    }
  } else if (axis == "loose") {
    if (ctx.cfg.sweep.loose_list.empty()) {
      throw ConfigError("sweep.loose_list is empty");
    }
    for (const double loose : ctx.cfg.sweep.loose_list) {
      const Workbench wb = build_workbench(ctx.cfg, loose);
      GaussianSourceConfig gc =
          simulator_config(ctx.cfg, ctx.cfg.seed_for("test-data"));
      gc.loose = loose;
      Eigen::MatrixXd noise;
      const SampleBatch batch = synthesize_batch(
          gc, wb.space, wb.lf, ctx.cfg.simulator.test_frames, ctx.threads,
          &noise);
      points.push_back(
          {format_loose(loose),
           evaluate_all(ctx, wb, batch,
                        noise.topRows(ctx.cfg.simulator.noise_frames), ckpt,
                        ckpt_ft)});
    }
  } else if (axis == "depth") {
    const auto data_path = ctx.paths.dataset() / "test.esiw";
    if (!std::filesystem::exists(data_path)) {
      throw DataError("depth sweep needs " + data_path.string());
    }
    const SampleBatch batch = read_batch(data_path);
    const Eigen::MatrixXd noise =
        read_matrix(ctx.paths.dataset() / "noise.esiw");
    const Workbench wb = build_workbench(ctx.cfg, batch.config.loose);
    const EvalReport full =
        evaluate_all(ctx, wb, batch, noise, ckpt, ckpt_ft);

    // Frame depth = mean depth score over its true centers; bins partition
    // the sorted frames exactly. Higher score = shallower, so descending
    // order walks shallow -> deep.
    const Eigen::VectorXd scores = source_depth_scores(wb.lf);
    const int frames = batch.n_frames();
    Eigen::VectorXd frame_depth(frames);
    for (int f = 0; f < frames; ++f) {
      double acc = 0;
      for (const int c : batch.centers[static_cast<std::size_t>(f)]) {
        acc += scores[c];
      }
      frame_depth[f] =
          acc / static_cast<double>(
                    batch.centers[static_cast<std::size_t>(f)].size());
    }
    std::vector<int> order(static_cast<std::size_t>(frames));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (frame_depth[a] != frame_depth[b]) {
        return frame_depth[a] > frame_depth[b];
      }
      return a < b;
    });
    const int n_bins = ctx.cfg.sweep.depth_bins;
    for (int bin = 0; bin < n_bins; ++bin) {
      const int lo = static_cast<int>(
          static_cast<std::int64_t>(frames) * bin / n_bins);
      const int hi = static_cast<int>(
          static_cast<std::int64_t>(frames) * (bin + 1) / n_bins);
      SweepPoint point;
      if (n_bins == 3) {
        point.label = bin == 0 ? "shallow" : (bin == 1 ? "middle" : "deep");
      } else {
        point.label = "bin" + std::to_string(bin + 1);
      }
      point.report.rows.reserve(full.rows.size());
      for (const auto& row : full.rows) {
        MethodReport sub;
        sub.method = row.method;
        sub.n_frames = hi - lo;
        Eigen::VectorXd le(hi - lo), sd(hi - lo), auc(hi - lo);
        for (int i = lo; i < hi; ++i) {
          const int f = order[static_cast<std::size_t>(i)];
          le[i - lo] = row.le[f];
          sd[i - lo] = row.sd[f];
          auc[i - lo] = row.auc[f];
        }
        sub.le = le;
        sub.sd = sd;
        sub.auc = auc;
        std::tie(sub.le_mean, sub.le_std) = mean_std_finite(le);
        std::tie(sub.sd_mean, sub.sd_std) = mean_std_finite(sd);
        std::tie(sub.auc_mean, sub.auc_std) = mean_std_finite(auc);
        point.report.rows.push_back(std::move(sub));
      }
      points.push_back(std::move(point));
    }
  } else {
    throw ConfigError("unknown sweep axis \"" + axis +
                      "\" (expected depth, snr or loose)");
  }

  const SweepTable table = table_from_points(points);
  write_sweep_outputs(ctx, axis, table);

  EvalReport report;
  report.sweeps[axis] = table;
  // Keep the per-point rows for programmatic consumers.
  for (auto& p : points) {
    for (auto& row : p.report.rows) {
      row.method = p.label + " / " + row.method;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void run_localize(const RunContext& ctx, const std::string& method_or_empty,
                  const std::optional<std::filesystem::path>& checkpoint,
                  const std::filesystem::path& leadfield_file,
                  const std::filesystem::path& frames_file) {
  const LeadField lf = import_leadfield(leadfield_file);
  const Eigen::MatrixXd frames = read_matrix(frames_file);
  const int m_lf = lf.n_channels();
  if (frames.cols() != m_lf) {
    throw DataError("frame width " + std::to_string(frames.cols()) +
                    " does not match leadfield channel count " +
                    std::to_string(m_lf));
  }

  Eigen::MatrixXd estimates;
  std::string method_name;
  if (checkpoint) {
    const EsbnModel model = load_esbn(*checkpoint);
    if (model.n_channels() != static_cast<int>(frames.cols())) {
      throw DataError("frame width " + std::to_string(frames.cols()) +
                      " does not match checkpoint channel count " +
                      std::to_string(model.n_channels()));
    }
    estimates = esbn_forward_batch(model, frames);
    method_name = "esbn";
  } else {
    if (!lf.has_fixed()) {
      throw DataError(
          "numerical localization needs a fixed-orientation leadfield "
          "(kind 2)");
    }
    const PriorModel prior =
        PriorModel::identity(lf.n_sources(), lf.n_channels());
    const double lambda2 = ctx.cfg.solvers.lambda2 >= 0
                               ? ctx.cfg.solvers.lambda2
                               : auto_lambda2(lf, prior);
    InverseOperator op;
    if (method_or_empty == "mne") {
      op = mne_operator(lf, prior, lambda2);
    } else if (method_or_empty == "dspm") {
      op = dspm_operator(mne_operator(lf, prior, lambda2), prior);
    } else if (method_or_empty == "sloreta") {
      op = sloreta_operator(mne_operator(lf, prior, lambda2), lf);
    } else if (method_or_empty == "eloreta") {
      op = eloreta_operator(lf, prior, lambda2, ctx.cfg.solvers.eloreta_tol,
                            ctx.cfg.solvers.eloreta_max_iter);
    } else {
      throw ConfigError("unknown localization method \"" + method_or_empty +
                        "\"");
    }
    estimates = apply_inverse(op, frames);
    method_name = method_or_empty;
  }

  std::filesystem::create_directories(ctx.paths.localize());
  const auto out_path = ctx.paths.localize() / "estimates.esiw";
  write_matrix(out_path, estimates, ContainerKind::kGeneric);
  write_sidecar(out_path, json{{"meta", meta_json(ctx)},
                               {"method", method_name},
                               {"frames", estimates.rows()},
                               {"sources", estimates.cols()}});
  if (!ctx.quiet) {
    std::printf("localize: %d frame(s) -> %s\n",
                static_cast<int>(estimates.rows()), out_path.c_str());
  }
}

}  // namespace esiw
