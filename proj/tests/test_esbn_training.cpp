#include <doctest.h>

#include "esiw/esbn.hpp"
#include "support/test_helpers.hpp"

using namespace esiw;

namespace {

// Small but realistic training setup on a 30 mm ball with 12 sensors.
struct TrainSetup {
  SourceSpace space;
  LeadField lf;
  EdgeOperator edge;
  SampleBatch data;
  EsbnHyper hyper;
};

TrainSetup make_setup(int frames, std::uint64_t seed) {
  TrainSetup s;
  s.space = build_grid_source_space(30.0, 10.0, Eigen::Vector3d::Zero());
  LeadField free = analytic_leadfield(
      s.space, fibonacci_hemisphere_sensors(12, 100.0), 0.33);
  Rng rng(seed);
  s.lf = collapse_leadfield(free, sample_loose_orientations(free, 0.1, rng));
  s.edge = make_edge_operator(s.space);

  GaussianSourceConfig cfg;
  cfg.sigma_s_mm = 12.0;
  cfg.loose = 0.1;
  cfg.snr_channel_db = 5.0;
  cfg.seed = seed + 1;
  s.data = synthesize_batch(cfg, s.space, s.lf, frames);

  s.hyper.hidden = 16;
  s.hyper.features = 16;
  s.hyper.n_basis = 12;
  s.hyper.dropout = 0.1;
  s.hyper.batch_size = 32;
  s.hyper.epochs = 2;
  s.hyper.seed = seed + 2;
  return s;
}

EsbnModel fresh_model(const TrainSetup& s, std::uint64_t seed) {
  const double phi_scale =
      std::sqrt(s.data.phi.squaredNorm() / s.data.phi.size());
  double j_scale = 0.0;
  for (int f = 0; f < s.data.n_frames(); ++f) {
    j_scale += s.data.j_true.row(f).cwiseAbs().maxCoeff();
  }
  j_scale /= s.data.n_frames();
  Rng rng(seed);
  return init_esbn(static_cast<int>(s.data.phi.cols()), s.hyper, s.space, 12.0,
                   phi_scale, j_scale, rng);
}

bool models_identical(const EsbnModel& a, const EsbnModel& b) {
  return (a.w1 - b.w1).cwiseAbs().maxCoeff() == 0.0 &&
         (a.b1 - b.b1).cwiseAbs().maxCoeff() == 0.0 &&
         (a.w2 - b.w2).cwiseAbs().maxCoeff() == 0.0 &&
         (a.b2 - b.b2).cwiseAbs().maxCoeff() == 0.0 &&
         (a.w3 - b.w3).cwiseAbs().maxCoeff() == 0.0 &&
         (a.b3 - b.b3).cwiseAbs().maxCoeff() == 0.0 &&
         (a.w_v - b.w_v).cwiseAbs().maxCoeff() == 0.0 &&
         (a.omega - b.omega).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("training: first epoch reduces the loss") {
  TrainSetup s = make_setup(300, 11);
  s.hyper.epochs = 1;
  EsbnModel m = fresh_model(s, 12);
  const double initial = loss_supervised(m, s.data.phi, s.data.j_true, s.edge);
  const auto trace =
      train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper);
  REQUIRE(trace.size() == 1);
  const double after = loss_supervised(m, s.data.phi, s.data.j_true, s.edge);
  CHECK(after < initial);
}

TEST_CASE("training: seed-fixed double run is bit-identical") {
  const TrainSetup s = make_setup(200, 21);
  EsbnModel a = fresh_model(s, 22);
  EsbnModel b = fresh_model(s, 22);
  const auto ta = train_supervised(a, s.data.phi, s.data.j_true, s.edge,
                                   s.hyper, /*threads=*/1);
  const auto tb = train_supervised(b, s.data.phi, s.data.j_true, s.edge,
                                   s.hyper, /*threads=*/2);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
  CHECK(models_identical(a, b));
}

TEST_CASE("training: zero learning rate leaves parameters unchanged") {
  TrainSetup s = make_setup(100, 31);
  s.hyper.learning_rate = 0.0;
  EsbnModel m = fresh_model(s, 32);
  const EsbnModel before = m;
  train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper);
  CHECK(models_identical(m, before));
}

TEST_CASE("training: epochs already reached means no work") {
  TrainSetup s = make_setup(100, 41);
  EsbnModel m = fresh_model(s, 42);
  m.epochs_trained = s.hyper.epochs;
  const EsbnModel before = m;
  const auto trace =
      train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper);
  CHECK(trace.empty());
  CHECK(models_identical(m, before));
}

TEST_CASE("training: weight decay shrinks the MLP and w_v but never omega") {
  TrainSetup s = make_setup(64, 51);
  s.hyper.dropout = 0.0;
  s.hyper.lambda_s1 = s.hyper.lambda_s2 = s.hyper.lambda_sim = 0.0;
  s.hyper.weight_decay = 0.01;
  s.hyper.learning_rate = 0.5;
  s.hyper.batch_size = 64;  // single full-batch step
  s.hyper.epochs = 1;
  EsbnModel m = fresh_model(s, 52);
  // unit scales keep the prediction round trip exact, so the data gradient
  // is exactly zero when targets equal the model's own predictions
  m.phi_scale = 1.0;
  m.j_scale = 1.0;
  const Eigen::MatrixXd targets = esbn_forward_batch(m, s.data.phi);
  const EsbnModel before = m;
  train_supervised(m, s.data.phi, targets, s.edge, s.hyper);
  const double shrink = 1.0 - s.hyper.learning_rate * s.hyper.weight_decay;
  CHECK((m.w1 - shrink * before.w1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.w2 - shrink * before.w2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.w3 - shrink * before.w3).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.b1 - shrink * before.b1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.w_v - shrink * before.w_v).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.omega - before.omega).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training: resume from checkpoint reproduces the full trace") {
  const auto dir = test::temp_dir("resume");
  TrainSetup s = make_setup(200, 61);
  s.hyper.epochs = 4;

  EsbnModel full = fresh_model(s, 62);
  const auto full_trace =
      train_supervised(full, s.data.phi, s.data.j_true, s.edge, s.hyper);

  EsbnHyper half = s.hyper;
  half.epochs = 2;
  EsbnModel part = fresh_model(s, 62);
  const auto first_half =
      train_supervised(part, s.data.phi, s.data.j_true, s.edge, half);
  save_esbn(dir / "ckpt.esiw", part);

  EsbnModel resumed = load_esbn(dir / "ckpt.esiw");
  CHECK(resumed.epochs_trained == 2);
  const auto second_half =
      train_supervised(resumed, s.data.phi, s.data.j_true, s.edge, s.hyper);

  REQUIRE(full_trace.size() == 4);
  REQUIRE(first_half.size() == 2);
  REQUIRE(second_half.size() == 2);
  CHECK(full_trace[0] == first_half[0]);
  CHECK(full_trace[1] == first_half[1]);
  CHECK(full_trace[2] == second_half[0]);
  CHECK(full_trace[3] == second_half[1]);
  CHECK(models_identical(full, resumed));
}

TEST_CASE("training: divergence aborts with a numeric error") {
  TrainSetup s = make_setup(64, 71);
  s.hyper.learning_rate = 1e12;  // guaranteed blow-up
  s.hyper.epochs = 30;
  EsbnModel m = fresh_model(s, 72);
  CHECK_THROWS_AS(
      train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper),
      NumericError);
}

TEST_CASE("checkpoint: bit-exact round trip") {
  const auto dir = test::temp_dir("ckpt");
  TrainSetup s = make_setup(64, 81);
  EsbnModel m = fresh_model(s, 82);
  train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper);
  save_esbn(dir / "m.esiw", m);
  const EsbnModel back = load_esbn(dir / "m.esiw");
  CHECK(models_identical(m, back));
  CHECK(back.phi_scale == m.phi_scale);
  CHECK(back.j_scale == m.j_scale);
  CHECK(back.epochs_trained == m.epochs_trained);
  CHECK(back.hyper.seed == m.hyper.seed);
  CHECK(back.hyper.lambda_s2 == m.hyper.lambda_s2);

  Rng rng(83);
  const Eigen::MatrixXd phi = test::random_matrix(3, 12, rng);
  CHECK((esbn_forward_batch(m, phi) - esbn_forward_batch(back, phi))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("finetune: sensor residual drops on held-out frames") {
  TrainSetup s = make_setup(400, 91);
  // a brief supervised warm start leaves sensor-level headroom for the
  // unsupervised stage to close
  s.hyper.epochs = 1;
  EsbnModel m = fresh_model(s, 92);
  train_supervised(m, s.data.phi, s.data.j_true, s.edge, s.hyper);

  // unlabeled fine-tune split and a held-out split, same distribution
  GaussianSourceConfig cfg = s.data.config;
  cfg.seed = 4242;
  Eigen::MatrixXd ft_noise;
  const SampleBatch ft = synthesize_batch(cfg, s.space, s.lf, 300, 1, &ft_noise);
  cfg.seed = 4243;
  const SampleBatch held = synthesize_batch(cfg, s.space, s.lf, 100);
  const NoiseModel noise(estimate_noise_covariance(ft_noise, 0.05));

  const double before =
      mean_mahalanobis_residual(m, held.phi, s.lf.gain_fixed, noise);

  EsbnHyper ft_hyper = s.hyper;
  ft_hyper.epochs = 10;
  ft_hyper.learning_rate = 5e-4;
  ft_hyper.seed = 93;
  EsbnModel tuned = m;
  const auto trace =
      finetune_unsupervised(tuned, ft.phi, s.lf, noise, s.edge, ft_hyper);
  REQUIRE(trace.size() == 10);
  const double after =
      mean_mahalanobis_residual(tuned, held.phi, s.lf.gain_fixed, noise);
  CHECK(after <= 0.9 * before);

  SUBCASE("zero epochs leave the model unchanged") {
    EsbnHyper none = ft_hyper;
    none.epochs = 0;
    EsbnModel copy = m;
    const auto empty =
        finetune_unsupervised(copy, ft.phi, s.lf, noise, s.edge, none);
    CHECK(empty.empty());
    CHECK(models_identical(copy, m));
  }
  SUBCASE("seed-fixed determinism") {
    EsbnModel t2 = m;
    const auto trace2 =
        finetune_unsupervised(t2, ft.phi, s.lf, noise, s.edge, ft_hyper, 2);
    REQUIRE(trace2.size() == trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      CHECK(trace[i] == trace2[i]);
    }
    CHECK(models_identical(t2, tuned));
  }
}
