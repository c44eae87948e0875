#include <doctest.h>

#include "esiw/inverse.hpp"
#include "support/test_helpers.hpp"

using namespace esiw;

namespace {

LeadField wrap_fixed(Eigen::MatrixXd k) {
  LeadField lf;
  lf.gain_fixed = std::move(k);
  return lf;
}

// Small random solvable system: M sensors, N sources.
struct Instance {
  LeadField lf;
  PriorModel prior;
  Eigen::MatrixXd phi;  // 1 x M
};

Instance random_instance(int m, int n, Rng& rng) {
  Instance inst;
  inst.lf = wrap_fixed(test::random_matrix(m, n, rng));
  inst.prior = PriorModel::identity(n, m);
  inst.phi = test::random_matrix(1, m, rng);
  return inst;
}

}  // namespace

TEST_CASE("mne: identity system at lambda2 = 0") {
  const LeadField lf = wrap_fixed(Eigen::MatrixXd::Identity(2, 2));
  const PriorModel prior = PriorModel::identity(2, 2);
  const InverseOperator op = mne_operator(lf, prior, 0.0);
  CHECK((op.w - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("mne: diagonal system has the closed-form shrinkage") {
  Eigen::MatrixXd k(2, 2);
  k << 1, 0, 0, 2;
  const LeadField lf = wrap_fixed(k);
  const PriorModel prior = PriorModel::identity(2, 2);
  const InverseOperator op = mne_operator(lf, prior, 1.0);
  CHECK(op.w(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(op.w(1, 1) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(std::abs(op.w(0, 1)) < 1e-14);
  CHECK(std::abs(op.w(1, 0)) < 1e-14);
}

TEST_CASE("mne: rank-deficient system at lambda2 = 0 is a solver error") {
  Eigen::MatrixXd k(2, 2);
  k << 1, 0, 0, 0;
  const LeadField lf = wrap_fixed(k);
  const PriorModel prior = PriorModel::identity(2, 2);
  CHECK_THROWS_AS(mne_operator(lf, prior, 0.0), NumericError);
  // with regularization it solves fine
  CHECK_NOTHROW(mne_operator(lf, prior, 0.1));
}

TEST_CASE("objective: trivial values and brute-force oracle") {
  Rng rng(101);
  const Instance inst = random_instance(6, 14, rng);

  SUBCASE("zero everything gives zero") {
    CHECK(objective_mne(Eigen::MatrixXd::Zero(1, 14),
                        Eigen::MatrixXd::Zero(1, 6), inst.lf, inst.prior,
                        1.0) == 0.0);
  }
  SUBCASE("identity C and R reduce to plain squared norms") {
    const Eigen::MatrixXd j = test::random_matrix(1, 14, rng);
    const double lambda2 = 0.7;
    const double val = objective_mne(j, inst.phi, inst.lf, inst.prior, lambda2);
    const double plain =
        (inst.phi.transpose() - inst.lf.gain_fixed * j.transpose())
            .squaredNorm() +
        lambda2 * j.squaredNorm();
    CHECK(val == doctest::Approx(plain).epsilon(1e-12));
  }
  SUBCASE("general C, R match the explicit trace computation") {
    PriorModel prior;
    Rng prng(102);
    const Eigen::MatrixXd a = test::random_matrix(6, 6, prng);
    prior.c = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(6, 6);
    prior.r_diag = test::random_vector(14, prng).array().abs() + 0.1;
    const Eigen::MatrixXd j = test::random_matrix(1, 14, prng);
    const double lambda2 = 0.31;
    const double val = objective_mne(j, inst.phi, inst.lf, prior, lambda2);

    const Eigen::MatrixXd p =
        inst.phi.transpose() - inst.lf.gain_fixed * j.transpose();
    const double data = (p.transpose() * prior.c.inverse() * p).trace();
    double reg = 0;
    for (int i = 0; i < 14; ++i) reg += j(0, i) * j(0, i) / prior.r_diag[i];
    CHECK(val == doctest::Approx(data + lambda2 * reg).epsilon(1e-10));
  }
}

TEST_CASE("mne: closed form beats random perturbations on the objective") {
  Rng rng(103);
  for (int trial = 0; trial < 25; ++trial) {
    const Instance inst = random_instance(8, 40, rng);
    const double lambda2 = 0.5;
    const InverseOperator op = mne_operator(inst.lf, inst.prior, lambda2);
    const Eigen::MatrixXd j_hat = apply_inverse(op, inst.phi);
    const double best =
        objective_mne(j_hat, inst.phi, inst.lf, inst.prior, lambda2);
    const double norm = j_hat.norm();
    for (int p = 0; p < 100; ++p) {
      Eigen::MatrixXd delta = test::random_matrix(1, 40, rng);
      delta *= 0.01 * norm / delta.norm();
      const double perturbed =
          objective_mne(j_hat + delta, inst.phi, inst.lf, inst.prior, lambda2);
      CHECK(perturbed > best);
    }
  }
}

TEST_CASE("dspm: unit-row W with identity C is unchanged") {
  Rng rng(104);
  InverseOperator mne;
  mne.w = test::random_matrix(5, 4, rng);
  for (int i = 0; i < 5; ++i) mne.w.row(i).normalize();
  const PriorModel prior = PriorModel::identity(5, 4);
  const InverseOperator op = dspm_operator(mne, prior);
  CHECK((op.w - mne.w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dspm: scaling C rescales values but not the argmax") {
  Rng rng(105);
  InverseOperator mne;
  mne.w = test::random_matrix(7, 5, rng);
  PriorModel prior = PriorModel::identity(7, 5);
  const InverseOperator a = dspm_operator(mne, prior);
  prior.c *= 4.0;
  const InverseOperator b = dspm_operator(mne, prior);
  CHECK((b.w * 2.0 - a.w).cwiseAbs().maxCoeff() < 1e-10);

  const Eigen::MatrixXd phi = test::random_matrix(1, 5, rng);
  int ia = 0, ib = 0;
  apply_inverse(a, phi).row(0).cwiseAbs().maxCoeff(&ia);
  apply_inverse(b, phi).row(0).cwiseAbs().maxCoeff(&ib);
  CHECK(ia == ib);
}

TEST_CASE("dspm: diagonal matches the direct triple-product oracle") {
  Rng rng(106);
  InverseOperator mne;
  mne.w = test::random_matrix(6, 4, rng);
  PriorModel prior = PriorModel::identity(6, 4);
  const Eigen::MatrixXd a = test::random_matrix(4, 4, rng);
  prior.c = a * a.transpose() + Eigen::MatrixXd::Identity(4, 4);
  const InverseOperator op = dspm_operator(mne, prior);
  for (int n = 0; n < 6; ++n) {
    const double d = (mne.w.row(n) * prior.c * mne.w.row(n).transpose())(0, 0);
    const Eigen::RowVectorXd expect = mne.w.row(n) / std::sqrt(d);
    CHECK((op.w.row(n) - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sloreta: resolution diagonal oracle and invariances") {
  Rng rng(107);
  const Instance inst = random_instance(6, 10, rng);
  const InverseOperator mne = mne_operator(inst.lf, inst.prior, 0.3);
  const InverseOperator op = sloreta_operator(mne, inst.lf);
  for (int n = 0; n < 10; ++n) {
    const double d = mne.w.row(n).dot(inst.lf.gain_fixed.col(n));
    REQUIRE(d > 0);
    CHECK((op.w.row(n) - mne.w.row(n) / std::sqrt(d)).cwiseAbs().maxCoeff() <
          1e-10);
  }
  // argmax is invariant under positive rescaling of the data
  const Eigen::MatrixXd phi = test::random_matrix(1, 6, rng);
  int ia = 0, ib = 0;
  apply_inverse(op, phi).row(0).cwiseAbs().maxCoeff(&ia);
  apply_inverse(op, Eigen::MatrixXd(3.7 * phi)).row(0).cwiseAbs().maxCoeff(&ib);
  CHECK(ia == ib);
}

TEST_CASE("sloreta: identity system keeps the peak") {
  const LeadField lf = wrap_fixed(Eigen::MatrixXd::Identity(3, 3));
  const PriorModel prior = PriorModel::identity(3, 3);
  const InverseOperator mne = mne_operator(lf, prior, 0.1);
  const InverseOperator op = sloreta_operator(mne, lf);
  Eigen::MatrixXd phi(1, 3);
  phi << 0.1, 0.9, -0.2;
  int peak = 0;
  apply_inverse(op, phi).row(0).cwiseAbs().maxCoeff(&peak);
  CHECK(peak == 1);
}

namespace {

// Noiseless single-source localization over every grid position.
void exact_localization_check(const std::string& method) {
  const SourceSpace space =
      build_cube_source_space({5, 5, 5}, 10.0, Eigen::Vector3d(-20, -20, -20));
  LeadField lf = analytic_leadfield(
      space, fibonacci_hemisphere_sensors(16, 100.0), 0.33);
  Rng rng(42);
  lf = collapse_leadfield(lf, sample_loose_orientations(lf, 0.1, rng));
  const PriorModel prior =
      PriorModel::identity(space.n_sources(), lf.n_channels());
  const double lambda2 =
      1e-6 * (lf.gain_fixed * lf.gain_fixed.transpose()).trace() /
      lf.n_channels();

  InverseOperator op;
  if (method == "sloreta") {
    op = sloreta_operator(mne_operator(lf, prior, lambda2), lf);
  } else {
    op = eloreta_operator(lf, prior, lambda2, 1e-9, 200);
    CHECK(op.converged);
  }

  int exact = 0;
  for (int s = 0; s < space.n_sources(); ++s) {
    const Eigen::VectorXd phi = lf.gain_fixed.col(s);
    const Eigen::VectorXd j = op.w * phi;
    int peak = 0;
    j.cwiseAbs().maxCoeff(&peak);
    if (peak == s) {
      ++exact;
    } else {
      // never worse than one grid step
      CHECK((space.positions.row(peak) - space.positions.row(s)).norm() <=
            space.grid_spacing + 1e-9);
    }
  }
  CHECK(exact >= static_cast<int>(0.99 * space.n_sources()));
}

}  // namespace

TEST_CASE("sloreta: exact localization of noiseless point sources") {
  exact_localization_check("sloreta");
}

TEST_CASE("eloreta: exact localization of noiseless point sources") {
  exact_localization_check("eloreta");
}

TEST_CASE("eloreta: symmetric sources get equal weights") {
  // two sources whose columns are channel permutations of each other
  Eigen::MatrixXd k(2, 2);
  k << 1.0, 0.25, 0.25, 1.0;
  const LeadField lf = wrap_fixed(k);
  const PriorModel prior = PriorModel::identity(2, 2);
  Eigen::VectorXd gamma;
  eloreta_operator(lf, prior, 0.05, 1e-12, 500, &gamma);
  CHECK(gamma[0] == doctest::Approx(gamma[1]).epsilon(1e-10));
}

TEST_CASE("eloreta: converged weights are positive fixed points") {
  Rng rng(108);
  const Instance inst = random_instance(8, 20, rng);
  const double lambda2 = 0.2;
  const double tol = 1e-10;
  Eigen::VectorXd gamma;
  const InverseOperator op =
      eloreta_operator(inst.lf, inst.prior, lambda2, tol, 500, &gamma);
  REQUIRE(op.converged);
  CHECK((gamma.array() > 0).all());

  // one more fixed-point update changes the weights by less than tol
  const Eigen::MatrixXd& k = inst.lf.gain_fixed;
  Eigen::MatrixXd kg = k;
  kg.array().rowwise() /= gamma.transpose().array();
  const Eigen::MatrixXd s =
      kg * k.transpose() + lambda2 * inst.prior.c;
  const Eigen::MatrixXd minv = s.inverse();
  const Eigen::VectorXd quad =
      ((minv * k).array() * k.array()).colwise().sum();
  const Eigen::VectorXd next = quad.cwiseSqrt();
  CHECK(((next - gamma).cwiseAbs().array() / gamma.array()).maxCoeff() < tol);

  // non-convergence within max_iter is a flag, not an exception
  const InverseOperator capped =
      eloreta_operator(inst.lf, inst.prior, lambda2, 1e-16, 1);
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 1);
}

TEST_CASE("apply_inverse: trivial and oracle cases") {
  Rng rng(109);
  InverseOperator op;
  op.w = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd phi = test::random_matrix(3, 4, rng);
  CHECK((apply_inverse(op, phi) - phi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(apply_inverse(op, Eigen::MatrixXd::Zero(2, 4)).cwiseAbs().maxCoeff() ==
        0.0);

  op.w = test::random_matrix(6, 4, rng);
  const Eigen::MatrixXd est = apply_inverse(op, phi);
  for (int f = 0; f < 3; ++f) {
    const Eigen::VectorXd expect = op.w * phi.row(f).transpose();
    CHECK((est.row(f).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(apply_inverse(op, Eigen::MatrixXd::Zero(2, 5)), DataError);
}

TEST_CASE("operators are linear in the data") {
  Rng rng(110);
  const Instance inst = random_instance(6, 12, rng);
  const InverseOperator op = mne_operator(inst.lf, inst.prior, 0.4);
  const Eigen::MatrixXd p1 = test::random_matrix(1, 6, rng);
  const Eigen::MatrixXd p2 = test::random_matrix(1, 6, rng);
  const double a = 1.7, b = -0.6;
  const Eigen::MatrixXd lhs = apply_inverse(op, a * p1 + b * p2);
  const Eigen::MatrixXd rhs =
      a * apply_inverse(op, p1) + b * apply_inverse(op, p2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <=
        1e-10 * rhs.cwiseAbs().maxCoeff());
}

TEST_CASE("whitening consistency of the mne operator") {
  Rng rng(111);
  const int m = 6, n = 15;
  LeadField lf = wrap_fixed(test::random_matrix(m, n, rng));
  PriorModel prior = PriorModel::identity(n, m);
  const Eigen::MatrixXd a = test::random_matrix(m, m, rng);
  prior.c = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(m, m);
  const double lambda2 = 0.8;

  const InverseOperator direct = mne_operator(lf, prior, lambda2);

  const Eigen::MatrixXd whitener = inv_sqrt_psd(prior.c);
  LeadField lf_w = wrap_fixed(whitener * lf.gain_fixed);
  const PriorModel prior_w = PriorModel::identity(n, m);
  const InverseOperator white = mne_operator(lf_w, prior_w, lambda2);
  const Eigen::MatrixXd composed = white.w * whitener;

  CHECK((composed - direct.w).cwiseAbs().maxCoeff() <=
        1e-9 * direct.w.cwiseAbs().maxCoeff());
}

TEST_CASE("auto lambda2 follows the whitened-trace rule") {
  Rng rng(112);
  const Instance inst = random_instance(5, 9, rng);
  const double l2 = auto_lambda2(inst.lf, inst.prior, 3.0);
  const double trace =
      (inst.lf.gain_fixed * inst.lf.gain_fixed.transpose()).trace();
  CHECK(l2 == doctest::Approx(trace / (5.0 * 9.0)).epsilon(1e-10));
}
