#include "esiw/inverse.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace esiw {

namespace {

constexpr double kEigClip = 1e-12;

// Solves S X = B for symmetric PSD S. Cholesky first; on failure an
// eigendecomposition with relative clipping. When lambda2 == 0 a genuinely
// rank-deficient system is reported instead of silently regularized.
Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& s, const Eigen::MatrixXd& b,
                          double lambda2) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) return llt.solve(b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition of the sensor system failed");
  }
  const double max_eig = es.eigenvalues().cwiseAbs().maxCoeff();
  if (lambda2 == 0.0 && es.eigenvalues().minCoeff() <= kEigClip * max_eig) {
    throw NumericError(
        "sensor system is singular at lambda2 = 0; regularize with "
        "lambda2 > 0");
  }
  const Eigen::VectorXd clipped =
      es.eigenvalues().cwiseMax(kEigClip * max_eig);
  return es.eigenvectors() *
         (es.eigenvectors().transpose() * b).array().colwise()
             .operator/(clipped.array())
             .matrix();
}

const Eigen::MatrixXd& fixed_gain(const LeadField& lf) {
  if (!lf.has_fixed()) {
    throw ConfigError("inverse operators need the fixed-orientation gain");
  }
  return lf.gain_fixed;
}

}  // namespace

PriorModel PriorModel::identity(int n_sources, int n_channels) {
  PriorModel prior;
  prior.r_diag = Eigen::VectorXd::Ones(n_sources);
  prior.c = Eigen::MatrixXd::Identity(n_channels, n_channels);
  return prior;
}

void PriorModel::validate() const {
  if (r_diag.size() == 0 || c.rows() == 0 || c.rows() != c.cols()) {
    throw ConfigError("prior model has empty or non-square pieces");
  }
  if ((r_diag.array() < 0).any()) {
    throw ConfigError("source prior diagonal must be non-negative");
  }
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if (((c - c.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * scale) {
    throw ConfigError("noise covariance must be symmetric");
  }
}

InverseOperator mne_operator(const LeadField& lf, const PriorModel& prior,
                             double lambda2) {
  const Eigen::MatrixXd& k = fixed_gain(lf);
  prior.validate();
  if (lambda2 < 0) throw ConfigError("lambda2 must be >= 0");
  if (prior.r_diag.size() != k.cols() || prior.c.rows() != k.rows()) {
    throw DataError("prior dimensions do not match the leadfield");
  }

  // K R (columns of K scaled by r), then S = (K R) K^T + lambda2 C.
  Eigen::MatrixXd kr = k;
  kr.array().rowwise() *= prior.r_diag.transpose().array();
  Eigen::MatrixXd s = kr * k.transpose() + lambda2 * prior.c;
  s = (0.5 * (s + s.transpose())).eval();

  InverseOperator op;
  op.w = solve_spd(s, kr, lambda2).transpose();  // N x M
  op.method = "mne";
  op.lambda2 = lambda2;
  if (!op.w.allFinite()) {
    throw NumericError("inverse operator contains non-finite entries");
  }
  return op;
}

double objective_mne(const Eigen::MatrixXd& j_rows,
                     const Eigen::MatrixXd& phi_rows, const LeadField& lf,
                     const PriorModel& prior, double lambda2) {
  const Eigen::MatrixXd& k = fixed_gain(lf);
  prior.validate();
  if (j_rows.rows() != phi_rows.rows() || j_rows.cols() != k.cols() ||
      phi_rows.cols() != k.rows()) {
    throw DataError("objective dimensions are inconsistent");
  }
  if ((prior.r_diag.array() <= 0).any()) {
    throw NumericError("objective needs an invertible R (r_diag > 0)");
  }

  const Eigen::MatrixXd residual =
      phi_rows.transpose() - k * j_rows.transpose();  // M x F
  Eigen::LLT<Eigen::MatrixXd> llt(prior.c);
  if (llt.info() != Eigen::Success) {
    throw NumericError("noise covariance is not invertible");
  }
  const double data_term =
      (residual.array() * llt.solve(residual).array()).sum();
  const double prior_term =
      (j_rows.transpose().array().square().colwise() /
       prior.r_diag.array())
          .sum();
  return data_term + lambda2 * prior_term;
}

InverseOperator dspm_operator(const InverseOperator& mne,
                              const PriorModel& prior) {
  if (mne.w.cols() != prior.c.rows()) {
    throw DataError("dSPM prior does not match the operator");
  }
  const Eigen::VectorXd diag =
      ((mne.w * prior.c).array() * mne.w.array()).rowwise().sum();
  InverseOperator op = mne;
  op.method = "dspm";
  for (int n = 0; n < diag.size(); ++n) {
    if (!(diag[n] > 0)) {
      throw NumericError("dSPM noise normalization degenerate at source " +
                         std::to_string(n));
    }
    op.w.row(n) /= std::sqrt(diag[n]);
  }
  return op;
}

InverseOperator sloreta_operator(const InverseOperator& mne,
                                 const LeadField& lf) {
  const Eigen::MatrixXd& k = fixed_gain(lf);
  if (mne.w.rows() != k.cols() || mne.w.cols() != k.rows()) {
    throw DataError("sLORETA leadfield does not match the operator");
  }
  InverseOperator op = mne;
  op.method = "sloreta";
  for (int n = 0; n < op.w.rows(); ++n) {
    const double res = mne.w.row(n).dot(k.col(n));
    if (!(res > 0)) {
      throw NumericError("sLORETA resolution diagonal non-positive at source " +
                         std::to_string(n));
    }
    op.w.row(n) /= std::sqrt(res);
  }
  return op;
}

InverseOperator eloreta_operator(const LeadField& lf, const PriorModel& prior,
                                 double lambda2, double tol, int max_iter,
                                 Eigen::VectorXd* gamma_out) {
  const Eigen::MatrixXd& k = fixed_gain(lf);
  prior.validate();
  if (!(tol > 0)) throw ConfigError("eLORETA tolerance must be positive");
  if (max_iter < 1) throw ConfigError("eLORETA needs max_iter >= 1");
  const int n = static_cast<int>(k.cols());

  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd minv;
  bool converged = false;
  int iterations = 0;

  auto sensor_inverse = [&](const Eigen::VectorXd& g) {
    Eigen::MatrixXd kg = k;
    kg.array().rowwise() /= g.transpose().array();
    Eigen::MatrixXd s = kg * k.transpose() + lambda2 * prior.c;
    s = (0.5 * (s + s.transpose())).eval();
    return solve_spd(
        s, Eigen::MatrixXd::Identity(s.rows(), s.cols()), lambda2);
  };

  for (int it = 0; it < max_iter; ++it) {
    minv = sensor_inverse(gamma);
    const Eigen::VectorXd quad =
        ((minv * k).array() * k.array()).colwise().sum();
    if ((quad.array() <= 0).any() || !quad.allFinite()) {
      throw NumericError("eLORETA weight update left the positive cone");
    }
    const Eigen::VectorXd gamma_next = quad.cwiseSqrt();
    const double rel_change =
        ((gamma_next - gamma).cwiseAbs().array() / gamma.array()).maxCoeff();
    gamma = gamma_next;
    iterations = it + 1;
    if (rel_change < tol) {
      converged = true;
      break;
    }
  }

  minv = sensor_inverse(gamma);  // consistent with the final weights
  InverseOperator op;
  op.w = (minv * k).transpose();
  op.w.array().colwise() /= gamma.array();
  op.method = "eloreta";
  op.lambda2 = lambda2;
  op.converged = converged;
  op.iterations = iterations;
  if (gamma_out) *gamma_out = gamma;
  if (!op.w.allFinite()) {
    throw NumericError("eLORETA operator contains non-finite entries");
  }
  return op;
}

Eigen::MatrixXd apply_inverse(const InverseOperator& op,
                              const Eigen::MatrixXd& phi_rows) {
  if (phi_rows.cols() != op.w.cols()) {
    throw DataError("frame width " + std::to_string(phi_rows.cols()) +
                    " does not match operator channel count " +
                    std::to_string(op.w.cols()));
  }
  return phi_rows * op.w.transpose();
}

double auto_lambda2(const LeadField& lf, const PriorModel& prior,
                    double amplitude_snr) {
  const Eigen::MatrixXd& k = fixed_gain(lf);
  prior.validate();
  if (!(amplitude_snr > 0)) throw ConfigError("amplitude SNR must be positive");
  const Eigen::MatrixXd kw = inv_sqrt_psd(prior.c) * k;
  const double trace =
      (kw.array().square().colwise().sum() *
       prior.r_diag.transpose().array())
          .sum();
  return trace /
         (static_cast<double>(k.rows()) * amplitude_snr * amplitude_snr);
}

Eigen::MatrixXd inv_sqrt_psd(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition of the covariance failed");
  }
  const double max_eig = es.eigenvalues().maxCoeff();
  if (!(max_eig > 0)) throw NumericError("covariance has no positive mass");
  const Eigen::VectorXd clipped =
      es.eigenvalues().cwiseMax(kEigClip * max_eig);
  return es.eigenvectors() *
         clipped.array().rsqrt().matrix().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace esiw
