#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "esiw/prewitt.hpp"
#include "esiw/rng.hpp"
#include "esiw/simulator.hpp"
#include "esiw/source_space.hpp"

namespace esiw {

struct EsbnHyper {
  int hidden = 256;    // H
  int features = 256;  // F
  int n_basis = 256;   // B
  double dropout = 0.2;
  double learning_rate = 1e-3;  // plain momentum-free update
  double weight_decay = 1e-4;   // applied to MLP and w_v, never to omega
  int batch_size = 128;
  int epochs = 30;
  double lambda_s1 = 1e-3;
  double lambda_s2 = 1e-4;
  double lambda_sim = 1e-3;
  std::uint64_t seed = 0;
};

// Three-layer MLP (M -> H -> H -> F, ReLU after layers 1 and 2, inverted
// dropout in train mode), coefficient map w_v and learnable basis omega.
// omega lives in normalized units; phi_scale / j_scale map physical sensor
// and source amplitudes into the unit range the optimizer sees.
struct EsbnModel {
  Eigen::MatrixXd w1;  // H x M
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // H x H
  Eigen::VectorXd b2;  // H
  Eigen::MatrixXd w3;  // F x H
  Eigen::VectorXd b3;  // F
  Eigen::MatrixXd w_v;    // B x F
  Eigen::MatrixXd omega;  // B x N
  double dropout_rate = 0.2;
  double phi_scale = 1.0;
  double j_scale = 1.0;
  EsbnHyper hyper;
  int epochs_trained = 0;

  int n_channels() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  int features() const { return static_cast<int>(w3.rows()); }
  int n_basis() const { return static_cast<int>(w_v.rows()); }
  int n_sources() const { return static_cast<int>(omega.cols()); }
};

// Inverted dropout masks for one batch; entries are 0 or 1/(1-rate) so
// evaluation needs no rescaling. Null masks mean "no dropout".
struct DropoutMasks {
  Eigen::MatrixXd m1;  // H x batch
  Eigen::MatrixXd m2;  // H x batch
};

DropoutMasks sample_dropout_masks(int hidden, int batch, double rate,
                                  Rng& rng);

struct EsbnGradients {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  Eigen::MatrixXd w_v, omega;

  static EsbnGradients zeros_like(const EsbnModel& m);
};

// Factorized channel-noise covariance; construction requires positive
// definiteness.
struct NoiseModel {
  Eigen::MatrixXd c;
  Eigen::LLT<Eigen::MatrixXd> llt;

  explicit NoiseModel(Eigen::MatrixXd c_in);
  Eigen::MatrixXd solve(const Eigen::MatrixXd& x) const;  // C^{-1} x
};

// Feature extraction for one physical sensor frame. In train mode dropout
// masks are drawn from `rng`.
Eigen::VectorXd mlp_forward(const EsbnModel& m, const Eigen::VectorXd& phi,
                            bool train_mode = false, Rng* rng = nullptr);

// Basis weights from features: w_v * q.
Eigen::VectorXd infer_weights(const EsbnModel& m, const Eigen::VectorXd& q);

// Full evaluation-mode estimate in physical units.
Eigen::VectorXd esbn_forward(const EsbnModel& m, const Eigen::VectorXd& phi);
Eigen::MatrixXd esbn_forward_batch(const EsbnModel& m,
                                   const Eigen::MatrixXd& phi_rows);

double penalty_s1(const Eigen::VectorXd& weights);
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
// sum_b ||V omega_b||_1
double edge_penalty(const EdgeOperator& op, const Eigen::MatrixXd& omega);
// sum over unordered pairs i<j of cosine_similarity(omega_i, omega_j)
double pairwise_similarity(const Eigen::MatrixXd& omega);
double penalty_s2(const EdgeOperator& op, const Eigen::MatrixXd& omega);

// Batch losses; frames are rows and in physical units. The data terms are
// means over the batch; regularizer weights come from m.hyper. Passing masks
// selects the train-mode forward path deterministically.
double loss_supervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                       const Eigen::MatrixXd& j_rows, const EdgeOperator& op,
                       const DropoutMasks* masks = nullptr);
double loss_unsupervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                         const Eigen::MatrixXd& gain_fixed,
                         const NoiseModel& noise, const EdgeOperator& op,
                         const DropoutMasks* masks = nullptr);

// Analytic gradients of the losses above for every parameter tensor.
// Returns the loss value. Throws NumericError on a non-finite loss.
double grad_supervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                       const Eigen::MatrixXd& j_rows, const EdgeOperator& op,
                       const DropoutMasks* masks, EsbnGradients& out,
                       int threads = 1);
double grad_unsupervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                         const Eigen::MatrixXd& gain_fixed,
                         const NoiseModel& noise, const EdgeOperator& op,
                         const DropoutMasks* masks, EsbnGradients& out,
                         int threads = 1, double* data_term_out = nullptr);

// Fresh model: scaled-normal MLP init, omega rows seeded with Gaussian blobs
// (plus tiny jitter) at uniformly sampled centers.
EsbnModel init_esbn(int n_channels, const EsbnHyper& hyper,
                    const SourceSpace& space, double sigma_s_mm,
                    double phi_scale, double j_scale, Rng& rng);

// Minibatch SGD on loss_supervised from epoch `epochs_trained` up to
// hyper.epochs. Weight decay touches the MLP and w_v only. All randomness
// (shuffles, dropout) derives from (hyper.seed, epoch, step), so resuming
// from a checkpoint continues the exact same trajectory. Returns the mean
// minibatch loss of each newly run epoch.
std::vector<double> train_supervised(EsbnModel& m,
                                     const Eigen::MatrixXd& phi_rows,
                                     const Eigen::MatrixXd& j_rows,
                                     const EdgeOperator& op,
                                     const EsbnHyper& hyper, int threads = 1);

// Same loop driven by loss_unsupervised on unlabeled frames. Returns the
// mean Mahalanobis sensor residual (data term only) per epoch.
std::vector<double> finetune_unsupervised(EsbnModel& m,
                                          const Eigen::MatrixXd& phi_rows,
                                          const LeadField& lf,
                                          const NoiseModel& noise,
                                          const EdgeOperator& op,
                                          const EsbnHyper& hyper,
                                          int threads = 1);

// Mean over frames of (phi - K jhat)^T C^{-1} (phi - K jhat).
double mean_mahalanobis_residual(const EsbnModel& m,
                                 const Eigen::MatrixXd& phi_rows,
                                 const Eigen::MatrixXd& gain_fixed,
                                 const NoiseModel& noise);

// Checkpoint container (kind 5); bit-exact round trip.
void save_esbn(const std::filesystem::path& path, const EsbnModel& m);
EsbnModel load_esbn(const std::filesystem::path& path);

}  // namespace esiw
