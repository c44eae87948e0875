#include "esiw/esbn.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "esiw/matrix_io.hpp"
#include "esiw/parallel.hpp"

namespace esiw {

namespace {

double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Intermediate activations for one batch, columns are frames, everything in
// normalized units.
struct ForwardCache {
  Eigen::MatrixXd phi_n;      // M x F
  Eigen::MatrixXd a1, h1d;    // H x F (h1d: after ReLU and mask)
  Eigen::MatrixXd a2, h2d;    // H x F
  Eigen::MatrixXd q;          // feat x F
  Eigen::MatrixXd mw;         // B x F
  Eigen::MatrixXd jn;         // N x F
};

void check_batch_dims(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                      const DropoutMasks* masks) {
  if (phi_rows.cols() != m.n_channels()) {
    throw DataError("frame width " + std::to_string(phi_rows.cols()) +
                    " does not match model channel count " +
                    std::to_string(m.n_channels()));
  }
  if (masks &&
      (masks->m1.rows() != m.hidden() || masks->m2.rows() != m.hidden() ||
       masks->m1.cols() != phi_rows.rows() ||
       masks->m2.cols() != phi_rows.rows())) {
    throw DataError("dropout mask shape does not match the batch");
  }
}

void forward_batch(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                   const DropoutMasks* masks, ForwardCache& c) {
  check_batch_dims(m, phi_rows, masks);
  c.phi_n = phi_rows.transpose() / m.phi_scale;
  c.a1 = (m.w1 * c.phi_n).colwise() + m.b1;
  c.h1d = c.a1.cwiseMax(0.0);
  if (masks) c.h1d = c.h1d.cwiseProduct(masks->m1);
  c.a2 = (m.w2 * c.h1d).colwise() + m.b2;
  c.h2d = c.a2.cwiseMax(0.0);
  if (masks) c.h2d = c.h2d.cwiseProduct(masks->m2);
  c.q = (m.w3 * c.h2d).colwise() + m.b3;
  c.mw = m.w_v * c.q;
  c.jn = m.omega.transpose() * c.mw;
}

// Row norms, normalized rows and their column sum; shared by the pairwise
// similarity value and gradient. sum_{i<j} cos(i,j) = (||sum_b u_b||^2 - B)/2.
struct SimilarityParts {
  Eigen::VectorXd norms;   // B
  Eigen::MatrixXd unit;    // B x N
  Eigen::RowVectorXd usum; // N
  double pair_sum = 0;
};

SimilarityParts similarity_parts(const Eigen::MatrixXd& omega) {
  SimilarityParts p;
  const int b = static_cast<int>(omega.rows());
  p.norms = omega.rowwise().norm();
  for (int i = 0; i < b; ++i) {
    if (p.norms[i] < 1e-12) {
      throw NumericError("basis row " + std::to_string(i) +
                         " has zero norm; cosine similarity undefined");
    }
  }
  p.unit = omega.array().colwise() / p.norms.array();
  p.usum = p.unit.colwise().sum();
  p.pair_sum = 0.5 * (p.usum.squaredNorm() - static_cast<double>(b));
  return p;
}

// d pair_sum / d omega_i = (usum - u_i - (r_i - 1) u_i) / s_i with
// r_i = u_i . usum.
Eigen::MatrixXd similarity_gradient(const SimilarityParts& p) {
  const Eigen::VectorXd r = p.unit * p.usum.transpose();  // B
  Eigen::MatrixXd g = (-p.unit).array().colwise() * r.array();
  g.rowwise() += p.usum;
  g = g.array().colwise() / p.norms.array();
  return g;
}

}  // namespace

DropoutMasks sample_dropout_masks(int hidden, int batch, double rate,
                                  Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  DropoutMasks masks;
  masks.m1.resize(hidden, batch);
  masks.m2.resize(hidden, batch);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (int c = 0; c < batch; ++c) {
    for (int r = 0; r < hidden; ++r) {
      masks.m1(r, c) = rng.uniform01() < keep ? scale : 0.0;
    }
  }
  for (int c = 0; c < batch; ++c) {
    for (int r = 0; r < hidden; ++r) {
      masks.m2(r, c) = rng.uniform01() < keep ? scale : 0.0;
    }
  }
  return masks;
}

EsbnGradients EsbnGradients::zeros_like(const EsbnModel& m) {
  EsbnGradients g;
  g.w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  g.w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  g.w3 = Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols());
  g.b1 = Eigen::VectorXd::Zero(m.b1.size());
  g.b2 = Eigen::VectorXd::Zero(m.b2.size());
  g.b3 = Eigen::VectorXd::Zero(m.b3.size());
  g.w_v = Eigen::MatrixXd::Zero(m.w_v.rows(), m.w_v.cols());
  g.omega = Eigen::MatrixXd::Zero(m.omega.rows(), m.omega.cols());
  return g;
}

NoiseModel::NoiseModel(Eigen::MatrixXd c_in) : c(std::move(c_in)) {
  if (c.rows() != c.cols() || c.rows() == 0) {
    throw ConfigError("noise covariance must be square");
  }
  llt.compute(c);
  if (llt.info() != Eigen::Success) {
    throw NumericError("noise covariance is not positive definite");
  }
}

Eigen::MatrixXd NoiseModel::solve(const Eigen::MatrixXd& x) const {
  return llt.solve(x);
}

Eigen::VectorXd mlp_forward(const EsbnModel& m, const Eigen::VectorXd& phi,
                            bool train_mode, Rng* rng) {
  if (!phi.allFinite()) throw DataError("sensor frame has non-finite entries");
  const bool dropout = train_mode && m.dropout_rate > 0.0;
  DropoutMasks masks;
  if (dropout) {
    if (!rng) throw ConfigError("train-mode forward needs an RNG for dropout");
    masks = sample_dropout_masks(m.hidden(), 1, m.dropout_rate, *rng);
  }
  ForwardCache c;
  forward_batch(m, phi.transpose(), dropout ? &masks : nullptr, c);
  return c.q.col(0);
}

Eigen::VectorXd infer_weights(const EsbnModel& m, const Eigen::VectorXd& q) {
  if (q.size() != m.features()) {
    throw DataError("feature length does not match w_v");
  }
  return m.w_v * q;
}

Eigen::VectorXd esbn_forward(const EsbnModel& m, const Eigen::VectorXd& phi) {
  ForwardCache c;
  forward_batch(m, phi.transpose(), nullptr, c);
  return m.j_scale * c.jn.col(0);
}

Eigen::MatrixXd esbn_forward_batch(const EsbnModel& m,
                                   const Eigen::MatrixXd& phi_rows) {
  ForwardCache c;
  forward_batch(m, phi_rows, nullptr, c);
  return m.j_scale * c.jn.transpose();
}

double penalty_s1(const Eigen::VectorXd& weights) {
  return weights.cwiseAbs().sum();
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DataError("cosine inputs differ in length");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) {
    throw NumericError("cosine similarity undefined for zero-norm input");
  }
  return a.dot(b) / (na * nb);
}

double edge_penalty(const EdgeOperator& op, const Eigen::MatrixXd& omega) {
  if (omega.cols() != op.n_sources) {
    throw DataError("basis width does not match the edge operator");
  }
  double total = 0.0;
  for (int b = 0; b < omega.rows(); ++b) {
    total += prewitt_edges(op, omega.row(b).transpose()).cwiseAbs().sum();
  }
  return total;
}

double pairwise_similarity(const Eigen::MatrixXd& omega) {
  if (omega.rows() < 1) throw ConfigError("need at least one basis row");
  return similarity_parts(omega).pair_sum;
}

double penalty_s2(const EdgeOperator& op, const Eigen::MatrixXd& omega) {
  return edge_penalty(op, omega) + pairwise_similarity(omega);
}

namespace {

struct LossTerms {
  double data = 0;  // mean over the batch
  double s1 = 0;    // mean over the batch
  double edge = 0;
  double sim = 0;

  double total(const EsbnHyper& h) const {
    return data + h.lambda_s1 * s1 + h.lambda_s2 * edge + h.lambda_sim * sim;
  }
};

double regularizer_terms(const EsbnModel& m, const EdgeOperator& op,
                         const ForwardCache& c, LossTerms& t) {
  const double f = static_cast<double>(c.phi_n.cols());
  t.s1 = c.mw.cwiseAbs().sum() / f;
  t.edge = edge_penalty(op, m.omega);
  t.sim = pairwise_similarity(m.omega);
  return f;
}

// Shared backward pass from dL/d(mw) through the coefficient map and MLP.
void backward_from_weights(const EsbnModel& m, const ForwardCache& c,
                           const DropoutMasks* masks,
                           const Eigen::MatrixXd& g_mw, EsbnGradients& out) {
  const Eigen::MatrixXd g_q = m.w_v.transpose() * g_mw;
  out.w_v = g_mw * c.q.transpose();
  out.w3 = g_q * c.h2d.transpose();
  out.b3 = g_q.rowwise().sum();
  Eigen::MatrixXd g_h = m.w3.transpose() * g_q;
  if (masks) g_h = g_h.cwiseProduct(masks->m2);
  const Eigen::MatrixXd g_a2 =
      g_h.cwiseProduct((c.a2.array() > 0.0).cast<double>().matrix());
  out.w2 = g_a2 * c.h1d.transpose();
  out.b2 = g_a2.rowwise().sum();
  Eigen::MatrixXd g_h1 = m.w2.transpose() * g_a2;
  if (masks) g_h1 = g_h1.cwiseProduct(masks->m1);
  const Eigen::MatrixXd g_a1 =
      g_h1.cwiseProduct((c.a1.array() > 0.0).cast<double>().matrix());
  out.w1 = g_a1 * c.phi_n.transpose();
  out.b1 = g_a1.rowwise().sum();
}

// Adds the gradients of the omega regularizers (edge L1 and pairwise cosine)
// and returns nothing; the corresponding loss terms are already in `t`.
void add_omega_regularizer_grads(const EsbnModel& m, const EdgeOperator& op,
                                 int threads, EsbnGradients& out) {
  const int b = m.n_basis();
  Eigen::MatrixXd edge_grad(b, m.n_sources());
  parallel_for(b, threads, [&](int row) {
    const Eigen::VectorXd resp =
        prewitt_edges(op, m.omega.row(row).transpose());
    edge_grad.row(row) =
        prewitt_edges_adjoint(op, resp.unaryExpr([](double x) {
          return sign0(x);
        })).transpose();
  });
  out.omega += m.hyper.lambda_s2 * edge_grad;
  out.omega += m.hyper.lambda_sim * similarity_gradient(similarity_parts(m.omega));
}

}  // namespace

double loss_supervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                       const Eigen::MatrixXd& j_rows, const EdgeOperator& op,
                       const DropoutMasks* masks) {
  if (j_rows.rows() != phi_rows.rows() || j_rows.cols() != m.n_sources()) {
    throw DataError("target shape does not match the model");
  }
  ForwardCache c;
  forward_batch(m, phi_rows, masks, c);
  LossTerms t;
  const double f = regularizer_terms(m, op, c, t);
  t.data = (c.jn - j_rows.transpose() / m.j_scale).squaredNorm() / f;
  const double loss = t.total(m.hyper);
  if (!std::isfinite(loss)) throw NumericError("supervised loss is non-finite");
  return loss;
}

double loss_unsupervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                         const Eigen::MatrixXd& gain_fixed,
                         const NoiseModel& noise, const EdgeOperator& op,
                         const DropoutMasks* masks) {
  if (gain_fixed.rows() != phi_rows.cols() ||
      gain_fixed.cols() != m.n_sources()) {
    throw DataError("leadfield shape does not match frames and model");
  }
  ForwardCache c;
  forward_batch(m, phi_rows, masks, c);
  LossTerms t;
  const double f = regularizer_terms(m, op, c, t);
  const Eigen::MatrixXd residual =
      phi_rows.transpose() - gain_fixed * (m.j_scale * c.jn);
  t.data = (residual.array() * noise.solve(residual).array()).sum() / f;
  const double loss = t.total(m.hyper);
  if (!std::isfinite(loss)) {
    throw NumericError("unsupervised loss is non-finite");
  }
  return loss;
}

double grad_supervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                       const Eigen::MatrixXd& j_rows, const EdgeOperator& op,
                       const DropoutMasks* masks, EsbnGradients& out,
                       int threads) {
  if (j_rows.rows() != phi_rows.rows() || j_rows.cols() != m.n_sources()) {
    throw DataError("target shape does not match the model");
  }
  ForwardCache c;
  forward_batch(m, phi_rows, masks, c);
  LossTerms t;
  const double f = regularizer_terms(m, op, c, t);

  const Eigen::MatrixXd diff = c.jn - j_rows.transpose() / m.j_scale;
  t.data = diff.squaredNorm() / f;
  const Eigen::MatrixXd g_jn = (2.0 / f) * diff;  // N x F

  Eigen::MatrixXd g_mw = m.omega * g_jn;
  g_mw += (m.hyper.lambda_s1 / f) *
          c.mw.unaryExpr([](double x) { return sign0(x); });
  out.omega = c.mw * g_jn.transpose();
  backward_from_weights(m, c, masks, g_mw, out);
  add_omega_regularizer_grads(m, op, threads, out);

  const double loss = t.total(m.hyper);
  if (!std::isfinite(loss)) throw NumericError("supervised loss is non-finite");
  return loss;
}

double grad_unsupervised(const EsbnModel& m, const Eigen::MatrixXd& phi_rows,
                         const Eigen::MatrixXd& gain_fixed,
                         const NoiseModel& noise, const EdgeOperator& op,
                         const DropoutMasks* masks, EsbnGradients& out,
                         int threads, double* data_term_out) {
  if (gain_fixed.rows() != phi_rows.cols() ||
      gain_fixed.cols() != m.n_sources()) {
    throw DataError("leadfield shape does not match frames and model");
  }
  ForwardCache c;
  forward_batch(m, phi_rows, masks, c);
  LossTerms t;
  const double f = regularizer_terms(m, op, c, t);

  const Eigen::MatrixXd residual =
      phi_rows.transpose() - gain_fixed * (m.j_scale * c.jn);  // M x F
  const Eigen::MatrixXd cinv_r = noise.solve(residual);
  t.data = (residual.array() * cinv_r.array()).sum() / f;
  const Eigen::MatrixXd g_jn =
      (-2.0 * m.j_scale / f) * (gain_fixed.transpose() * cinv_r);

  Eigen::MatrixXd g_mw = m.omega * g_jn;
  g_mw += (m.hyper.lambda_s1 / f) *
          c.mw.unaryExpr([](double x) { return sign0(x); });
  out.omega = c.mw * g_jn.transpose();
  backward_from_weights(m, c, masks, g_mw, out);
  add_omega_regularizer_grads(m, op, threads, out);

  if (data_term_out) *data_term_out = t.data;
  const double loss = t.total(m.hyper);
  if (!std::isfinite(loss)) {
    throw NumericError("unsupervised loss is non-finite");
  }
  return loss;
}

EsbnModel init_esbn(int n_channels, const EsbnHyper& hyper,
                    const SourceSpace& space, double sigma_s_mm,
                    double phi_scale, double j_scale, Rng& rng) {
  if (n_channels < 1 || hyper.hidden < 1 || hyper.features < 1 ||
      hyper.n_basis < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(phi_scale > 0) || !(j_scale > 0)) {
    throw ConfigError("data scales must be positive");
  }
  const int n = space.n_sources();

  EsbnModel m;
  m.hyper = hyper;
  m.dropout_rate = hyper.dropout;
  m.phi_scale = phi_scale;
  m.j_scale = j_scale;

  auto fill_normal = [&rng](Eigen::MatrixXd& w, double std) {
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) w(r, c) = std * rng.normal();
    }
  };
  m.w1.resize(hyper.hidden, n_channels);
  fill_normal(m.w1, std::sqrt(2.0 / n_channels));
  m.w2.resize(hyper.hidden, hyper.hidden);
  fill_normal(m.w2, std::sqrt(2.0 / hyper.hidden));
  m.w3.resize(hyper.features, hyper.hidden);
  fill_normal(m.w3, std::sqrt(1.0 / hyper.hidden));
  // the coefficient map starts at zero so the initial estimate is zero and
  // the first updates ramp the basis weights up from the data term
  m.w_v = Eigen::MatrixXd::Zero(hyper.n_basis, hyper.features);
  m.b1 = Eigen::VectorXd::Zero(hyper.hidden);
  m.b2 = Eigen::VectorXd::Zero(hyper.hidden);
  m.b3 = Eigen::VectorXd::Zero(hyper.features);

  // Basis rows start as Gaussian blobs at uniformly sampled centers (without
  // replacement while possible) plus tiny jitter for symmetry breaking.
  std::vector<int> centers;
  if (hyper.n_basis <= n) {
    std::set<int> used;
    while (static_cast<int>(used.size()) < hyper.n_basis) {
      used.insert(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    }
    centers.assign(used.begin(), used.end());
  } else {
    centers.resize(static_cast<std::size_t>(hyper.n_basis));
    for (auto& c : centers) {
      c = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    }
  }
  m.omega.resize(hyper.n_basis, n);
  for (int b = 0; b < hyper.n_basis; ++b) {
    m.omega.row(b) = gaussian_basis(centers[static_cast<std::size_t>(b)],
                                    sigma_s_mm, space, 1.0)
                         .transpose() /
                     j_scale;
    for (int s = 0; s < n; ++s) m.omega(b, s) += 1e-3 * rng.normal();
  }
  return m;
}

namespace {

void sgd_update(EsbnModel& m, const EsbnGradients& g) {
  const double lr = m.hyper.learning_rate;
  const double wd = m.hyper.weight_decay;
  m.w1 -= lr * (g.w1 + wd * m.w1);
  m.b1 -= lr * (g.b1 + wd * m.b1);
  m.w2 -= lr * (g.w2 + wd * m.w2);
  m.b2 -= lr * (g.b2 + wd * m.b2);
  m.w3 -= lr * (g.w3 + wd * m.w3);
  m.b3 -= lr * (g.b3 + wd * m.b3);
  m.w_v -= lr * (g.w_v + wd * m.w_v);
  m.omega -= lr * g.omega;  // no decay on the basis
}

std::vector<int> epoch_permutation(std::uint64_t seed, int epoch, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_stream(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    const int j =
        static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace

std::vector<double> train_supervised(EsbnModel& m,
                                     const Eigen::MatrixXd& phi_rows,
                                     const Eigen::MatrixXd& j_rows,
                                     const EdgeOperator& op,
                                     const EsbnHyper& hyper, int threads) {
  const int frames = static_cast<int>(phi_rows.rows());
  if (frames < 1) throw ConfigError("training needs a nonempty dataset");
  if (hyper.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  m.hyper = hyper;
  m.dropout_rate = hyper.dropout;

  std::vector<double> trace;
  EsbnGradients g = EsbnGradients::zeros_like(m);
  for (int epoch = m.epochs_trained; epoch < hyper.epochs; ++epoch) {
    const std::vector<int> perm = epoch_permutation(hyper.seed, epoch, frames);
    double epoch_loss = 0.0;
    int steps = 0;
    for (int start = 0; start < frames; start += hyper.batch_size, ++steps) {
      const int bs = std::min(hyper.batch_size, frames - start);
      Eigen::MatrixXd phi_b(bs, phi_rows.cols());
      Eigen::MatrixXd j_b(bs, j_rows.cols());
      for (int i = 0; i < bs; ++i) {
        const int src = perm[static_cast<std::size_t>(start + i)];
        phi_b.row(i) = phi_rows.row(src);
        j_b.row(i) = j_rows.row(src);
      }
      DropoutMasks masks;
      const DropoutMasks* masks_ptr = nullptr;
      if (hyper.dropout > 0.0) {
        Rng drop_rng(derive_stream(hyper.seed, "dropout",
                                   static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(steps)));
        masks = sample_dropout_masks(m.hidden(), bs, hyper.dropout, drop_rng);
        masks_ptr = &masks;
      }
      const double loss =
          grad_supervised(m, phi_b, j_b, op, masks_ptr, g, threads);
      sgd_update(m, g);
      epoch_loss += loss;
    }
    trace.push_back(epoch_loss / std::max(1, steps));
    m.epochs_trained = epoch + 1;
  }
  return trace;
}

std::vector<double> finetune_unsupervised(EsbnModel& m,
                                          const Eigen::MatrixXd& phi_rows,
                                          const LeadField& lf,
                                          const NoiseModel& noise,
                                          const EdgeOperator& op,
                                          const EsbnHyper& hyper,
                                          int threads) {
  if (!lf.has_fixed()) {
    throw ConfigError("fine-tuning needs the fixed-orientation gain");
  }
  const int frames = static_cast<int>(phi_rows.rows());
  if (frames < 1) throw ConfigError("fine-tuning needs a nonempty dataset");
  if (hyper.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  m.hyper = hyper;
  m.dropout_rate = hyper.dropout;

  std::vector<double> residual_trace;
  EsbnGradients g = EsbnGradients::zeros_like(m);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const std::vector<int> perm =
        epoch_permutation(derive_stream(hyper.seed, "finetune"), epoch, frames);
    double residual_sum = 0.0;
    for (int start = 0, step = 0; start < frames;
         start += hyper.batch_size, ++step) {
      const int bs = std::min(hyper.batch_size, frames - start);
      Eigen::MatrixXd phi_b(bs, phi_rows.cols());
      for (int i = 0; i < bs; ++i) {
        phi_b.row(i) = phi_rows.row(perm[static_cast<std::size_t>(start + i)]);
      }
      DropoutMasks masks;
      const DropoutMasks* masks_ptr = nullptr;
      if (hyper.dropout > 0.0) {
        Rng drop_rng(derive_stream(hyper.seed, "ft-dropout",
                                   static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(step)));
        masks = sample_dropout_masks(m.hidden(), bs, hyper.dropout, drop_rng);
        masks_ptr = &masks;
      }
      double data_term = 0.0;
      grad_unsupervised(m, phi_b, lf.gain_fixed, noise, op, masks_ptr, g,
                        threads, &data_term);
      sgd_update(m, g);
      residual_sum += data_term * bs;
    }
    residual_trace.push_back(residual_sum / frames);
  }
  return residual_trace;
}

double mean_mahalanobis_residual(const EsbnModel& m,
                                 const Eigen::MatrixXd& phi_rows,
                                 const Eigen::MatrixXd& gain_fixed,
                                 const NoiseModel& noise) {
  const Eigen::MatrixXd jhat = esbn_forward_batch(m, phi_rows);  // F x N
  const Eigen::MatrixXd residual =
      phi_rows.transpose() - gain_fixed * jhat.transpose();
  return (residual.array() * noise.solve(residual).array()).sum() /
         static_cast<double>(phi_rows.rows());
}

void save_esbn(const std::filesystem::path& path, const EsbnModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  container::write_prefix(os, ContainerKind::kModel);
  container::write_u32(os, static_cast<std::uint32_t>(m.n_channels()));
  container::write_u32(os, static_cast<std::uint32_t>(m.hidden()));
  container::write_u32(os, static_cast<std::uint32_t>(m.features()));
  container::write_u32(os, static_cast<std::uint32_t>(m.n_basis()));
  container::write_u32(os, static_cast<std::uint32_t>(m.n_sources()));
  container::write_f64(os, m.dropout_rate);
  container::write_f64(os, m.hyper.lambda_s1);
  container::write_f64(os, m.hyper.lambda_s2);
  container::write_f64(os, m.hyper.lambda_sim);
  container::write_f64(os, m.hyper.learning_rate);
  container::write_f64(os, m.hyper.weight_decay);
  container::write_u32(os, static_cast<std::uint32_t>(m.hyper.batch_size));
  container::write_u32(os, static_cast<std::uint32_t>(m.hyper.epochs));
  container::write_u32(os, static_cast<std::uint32_t>(m.epochs_trained));
  container::write_u64(os, m.hyper.seed);
  container::write_f64(os, m.phi_scale);
  container::write_f64(os, m.j_scale);
  container::write_matrix_block(os, m.w1);
  container::write_matrix_block(os, m.b1);
  container::write_matrix_block(os, m.w2);
  container::write_matrix_block(os, m.b2);
  container::write_matrix_block(os, m.w3);
  container::write_matrix_block(os, m.b3);
  container::write_matrix_block(os, m.w_v);
  container::write_matrix_block(os, m.omega);
  if (!os) throw DataError("failed while writing " + path.string());
}

EsbnModel load_esbn(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  const std::string ctx = path.filename().string();
  if (container::read_prefix(is, ctx) != ContainerKind::kModel) {
    throw DataError(ctx + ": not a model checkpoint container");
  }
  const std::uint32_t mch = container::read_u32(is, ctx);
  const std::uint32_t h = container::read_u32(is, ctx);
  const std::uint32_t feat = container::read_u32(is, ctx);
  const std::uint32_t b = container::read_u32(is, ctx);
  const std::uint32_t n = container::read_u32(is, ctx);

  EsbnModel m;
  m.hyper.hidden = static_cast<int>(h);
  m.hyper.features = static_cast<int>(feat);
  m.hyper.n_basis = static_cast<int>(b);
  m.dropout_rate = container::read_f64(is, ctx);
  m.hyper.dropout = m.dropout_rate;
  m.hyper.lambda_s1 = container::read_f64(is, ctx);
  m.hyper.lambda_s2 = container::read_f64(is, ctx);
  m.hyper.lambda_sim = container::read_f64(is, ctx);
  m.hyper.learning_rate = container::read_f64(is, ctx);
  m.hyper.weight_decay = container::read_f64(is, ctx);
  m.hyper.batch_size = static_cast<int>(container::read_u32(is, ctx));
  m.hyper.epochs = static_cast<int>(container::read_u32(is, ctx));
  m.epochs_trained = static_cast<int>(container::read_u32(is, ctx));
  m.hyper.seed = container::read_u64(is, ctx);
  m.phi_scale = container::read_f64(is, ctx);
  m.j_scale = container::read_f64(is, ctx);
  m.w1 = container::read_matrix_block(is, h, mch, ctx);
  m.b1 = container::read_matrix_block(is, h, 1, ctx);
  m.w2 = container::read_matrix_block(is, h, h, ctx);
  m.b2 = container::read_matrix_block(is, h, 1, ctx);
  m.w3 = container::read_matrix_block(is, feat, h, ctx);
  m.b3 = container::read_matrix_block(is, feat, 1, ctx);
  m.w_v = container::read_matrix_block(is, b, feat, ctx);
  m.omega = container::read_matrix_block(is, b, n, ctx);
  container::expect_eof(is, ctx);
  return m;
}

}  // namespace esiw
