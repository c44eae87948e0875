#pragma once

#include <Eigen/Dense>
#include <string>

#include "esiw/leadfield.hpp"

namespace esiw {

// Diagonal source prior R and channel-noise covariance C.
struct PriorModel {
  Eigen::VectorXd r_diag;  // N, all >= 0
  Eigen::MatrixXd c;       // M x M, symmetric PSD

  static PriorModel identity(int n_sources, int n_channels);
  void validate() const;  // throws ConfigError
};

struct InverseOperator {
  Eigen::MatrixXd w;  // N x M
  std::string method;
  double lambda2 = 0;
  Eigen::MatrixXd whitener;  // M x M, C^{-1/2}; may be empty
  bool converged = true;     // eLORETA fixed point reached within max_iter
  int iterations = 0;
};

// W = R K^T (K R K^T + lambda2 C)^{-1}. At lambda2 = 0 a rank-deficient
// system raises NumericError telling the caller to regularize; otherwise an
// ill-conditioned solve falls back to eigenvalue clipping.
InverseOperator mne_operator(const LeadField& lf, const PriorModel& prior,
                             double lambda2);

// ||phi - K j||^2_{C^-1} + lambda2 ||j||^2_{R^-1} with
// ||P||_{C^-1} = sqrt(tr(P^T C^-1 P)). Frames are rows.
double objective_mne(const Eigen::MatrixXd& j_rows,
                     const Eigen::MatrixXd& phi_rows, const LeadField& lf,
                     const PriorModel& prior, double lambda2);

// Noise normalization: row n divided by sqrt((W C W^T)_nn).
InverseOperator dspm_operator(const InverseOperator& mne,
                              const PriorModel& prior);

// Resolution normalization: row n divided by sqrt((W K)_nn), requires a
// positive diagonal.
InverseOperator sloreta_operator(const InverseOperator& mne,
                                 const LeadField& lf);

// Fixed-point weight standardization: iterate
//   Minv = (K G^-1 K^T + lambda2 C)^-1,  g_n = sqrt(K_n^T Minv K_n)
// until the max relative change < tol, then W = G^-1 K^T Minv. Non-
// convergence is reported via the converged flag, not an exception. The
// converged per-source weights are exposed through gamma_out.
InverseOperator eloreta_operator(const LeadField& lf, const PriorModel& prior,
                                 double lambda2, double tol = 1e-6,
                                 int max_iter = 100,
                                 Eigen::VectorXd* gamma_out = nullptr);

// phi_rows (F x M) -> estimates (F x N).
Eigen::MatrixXd apply_inverse(const InverseOperator& op,
                              const Eigen::MatrixXd& phi_rows);

// Whitened-trace regularization default: tr(C^-1 K R K^T) / (M * snr^2)
// with amplitude SNR 3.
double auto_lambda2(const LeadField& lf, const PriorModel& prior,
                    double amplitude_snr = 3.0);

// Symmetric PSD inverse square root via eigendecomposition with relative
// eigenvalue clipping.
Eigen::MatrixXd inv_sqrt_psd(const Eigen::MatrixXd& c);

}  // namespace esiw
