#include "quadpose/gplvm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace quadpose {

namespace {

MatX pairwise_sq_dist(const MatX& a, const MatX& b) {
  const VecX an = a.rowwise().squaredNorm();
  const VecX bn = b.rowwise().squaredNorm();
  MatX d2 = -2.0 * a * b.transpose();
  d2.colwise() += an;
  d2.rowwise() += bn.transpose();
  return d2.cwiseMax(0.0);
}

Scalar median_pairwise_distance(const MatX& rows) {
  std::vector<Scalar> d;
  for (int i = 0; i < rows.rows(); ++i)
    for (int j = i + 1; j < rows.rows(); ++j)
      d.push_back((rows.row(i) - rows.row(j)).norm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  const Scalar med = d[d.size() / 2];
  return med > 1e-9 ? med : 1.0;
}

MatX rbf_matrix(const MatX& x, Scalar length) {
  return (-pairwise_sq_dist(x, x) / (2.0 * length * length)).array().exp().matrix();
}

}  // namespace

VecX GplvmNode::posterior_mean(const VecX& x) const {
  const Scalar len2 = kernel.length() * kernel.length();
  VecX k(frames());
  for (int i = 0; i < frames(); ++i) {
    const Scalar d2 = (latents.row(i).transpose() - x).squaredNorm();
    k[i] = kernel.signal() * std::exp(-0.5 * d2 / len2);
  }
  const VecX normalized = alpha.transpose() * k;
  return (normalized.array() * col_std.array() + col_mean.array()).matrix();
}

VecX GplvmNode::latent_from_data(const VecX& raw_row) const {
  const VecX z = ((raw_row - col_mean).array() / col_std.array()).matrix();
  VecX k(frames());
  for (int i = 0; i < frames(); ++i)
    k[i] = std::exp(-0.5 * (data.row(i).transpose() - z).squaredNorm() /
                    (bc_length * bc_length));
  return bc_weights.transpose() * k;
}

void GplvmNode::refresh_posterior() {
  MatX k = kernel.signal() * rbf_matrix(latents, kernel.length());
  k.diagonal().array() += kernel.noise() + kKernelJitter * kernel.signal();
  alpha = k.llt().solve(data);
}

Scalar gplvm_nll(const GplvmNode& shape, const MatX& k_bc, const VecX& params, VecX* grad) {
  const int f = shape.frames();
  const int q = shape.latent_dim;
  const int b = shape.data_dim();

  const Eigen::Map<const MatX> w(params.data(), f, q);
  RbfKernel kern;
  kern.log_signal = params[f * q];
  kern.log_length = params[f * q + 1];
  kern.log_noise = params[f * q + 2];

  const MatX x = k_bc * w;
  const MatX r2 = pairwise_sq_dist(x, x);
  const Scalar len2 = kern.length() * kern.length();
  const MatX k_rbf =
      kern.signal() * (-r2 / (2.0 * len2)).array().exp().matrix();
  MatX k = k_rbf;
  const Scalar diag_add = kern.noise() + kKernelJitter * kern.signal();
  k.diagonal().array() += diag_add;

  Eigen::LLT<MatX> llt(k);
  if (llt.info() != Eigen::Success) {
    // retreat: let the line search shrink away from this region
    if (grad) grad->setZero(params.size());
    return 1e30;
  }
  const MatX a = llt.solve(shape.data);
  Scalar logdet = 0.0;
  for (int i = 0; i < f; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  // unit-normal prior on the latents anchors the X/lengthscale gauge
  const Scalar nll = 0.5 * (b * f * std::log(2.0 * M_PI) + b * logdet +
                            (shape.data.array() * a.array()).sum()) +
                     0.5 * x.squaredNorm();
  if (!grad) return nll;

  const MatX k_inv = llt.solve(MatX::Identity(f, f));
  const MatX g = 0.5 * (b * k_inv - a * a.transpose());  // dNLL/dK

  grad->resize(params.size());
  const MatX m = g.cwiseProduct(k_rbf);
  // dNLL/dX = -(2/len^2) (diag(M 1) - M) X
  const MatX dx = (-2.0 / len2) * ((m.rowwise().sum().asDiagonal() * x) - m * x);
  Eigen::Map<MatX>(grad->data(), f, q) = k_bc.transpose() * dx;

  (*grad)[f * q] = m.sum() + diag_add * g.trace() -
                   kern.noise() * g.trace();  // d/dlog signal (incl. jitter term)
  (*grad)[f * q + 1] = (g.array() * k_rbf.array() * r2.array()).sum() / len2;
  (*grad)[f * q + 2] = kern.noise() * g.trace();
  return nll;
}

GplvmNode train_node(const MatX& raw, int latent_dim, const TrainOptions& options) {
  const int f = static_cast<int>(raw.rows());
  const int b = static_cast<int>(raw.cols());
  if (f < 2) throw ValidationError("train_node: needs at least 2 frames");
  if (latent_dim < 1) throw ValidationError("train_node: latent_dim must be >= 1");
  if (f < 2 * latent_dim)
    throw ValidationError("train_node: " + std::to_string(f) + " frames cannot support q=" +
                          std::to_string(latent_dim));

  GplvmNode node;
  node.latent_dim = latent_dim;
  node.col_mean = raw.colwise().mean().transpose();
  MatX centered = raw.rowwise() - node.col_mean.transpose();
  node.col_std.resize(b);
  bool any_signal = false;
  for (int j = 0; j < b; ++j) {
    const Scalar sd = std::sqrt(centered.col(j).squaredNorm() / f);
    node.col_std[j] = sd > 1e-10 ? sd : 1.0;
    if (sd > 1e-10) any_signal = true;
    centered.col(j) /= node.col_std[j];
  }
  if (!any_signal)
    throw ValidationError("train_node: rank-deficient data (all frames identical)");
  node.data = centered;

  // principal-component projection initializes the latents
  Eigen::JacobiSVD<MatX> svd(node.data, Eigen::ComputeThinU);
  MatX x0 = MatX::Zero(f, latent_dim);
  const int usable = std::min<int>(latent_dim, static_cast<int>(svd.singularValues().size()));
  for (int c = 0; c < usable; ++c) {
    VecX score = svd.matrixU().col(c) * svd.singularValues()[c];
    const Scalar sd = std::sqrt(score.squaredNorm() / f);
    if (sd > 1e-10) score /= sd;
    x0.col(c) = score;
  }

  node.bc_length = median_pairwise_distance(node.data);
  const MatX k_bc = rbf_matrix(node.data, node.bc_length);
  // ridge keeps the initial weights bounded when near-duplicate frames make
  // K_bc ill-conditioned; the model itself stays X = K_bc * W
  MatX k_init = k_bc;
  k_init.diagonal().array() += 1e-3;
  node.bc_weights = k_init.ldlt().solve(x0);
  x0 = k_bc * node.bc_weights;

  VecX params(f * latent_dim + 3);
  Eigen::Map<MatX>(params.data(), f, latent_dim) = node.bc_weights;
  params[f * latent_dim] = 0.0;  // log signal
  params[f * latent_dim + 1] = std::log(std::max(median_pairwise_distance(x0), 0.2));
  params[f * latent_dim + 2] = std::log(0.01);

  LbfgsOptions lopt;
  lopt.max_iterations = options.max_iterations;
  lopt.rel_tolerance = options.rel_tolerance;

  // phase 1: adapt the latents under pinned hyperparameters, so a poor early
  // kernel fit cannot collapse the embedding
  const VecX pinned = params.tail(3);
  const Objective weights_only = [&](const VecX& p, VecX* grad) {
    VecX full = p;
    full.tail(3) = pinned;
    const Scalar value = gplvm_nll(node, k_bc, full, grad);
    if (grad) grad->tail(3).setZero();
    return value;
  };
  LbfgsOptions phase1 = lopt;
  phase1.max_iterations = options.max_iterations / 2;
  params = minimize_lbfgs(weights_only, params, phase1).x;
  params.tail(3) = pinned;

  // phase 2: joint refinement of weights and hyperparameters
  const Objective joint = [&](const VecX& p, VecX* grad) {
    return gplvm_nll(node, k_bc, p, grad);
  };
  LbfgsResult fit = minimize_lbfgs(joint, params, lopt);

  auto apply = [&](const VecX& x) {
    node.bc_weights = Eigen::Map<const MatX>(x.data(), f, latent_dim);
    node.kernel.log_signal = x[f * latent_dim];
    node.kernel.log_length = x[f * latent_dim + 1];
    node.kernel.log_noise = x[f * latent_dim + 2];
    node.latents = k_bc * node.bc_weights;
    node.refresh_posterior();
  };
  apply(fit.x);

  // degenerate optimum (signal or lengthscale collapse) while the data still
  // has structure: fall back to the pinned-hyperparameter solution
  const Scalar latent_spread = median_pairwise_distance(node.latents);
  if (node.kernel.signal() < 1e-6 || node.kernel.length() < 0.02 * latent_spread) {
    VecX fallback = fit.x;
    Eigen::Map<MatX>(fallback.data(), f, latent_dim) =
        Eigen::Map<const MatX>(params.data(), f, latent_dim);
    fallback.tail(3) = pinned;
    apply(fallback);
  }
  return node;
}

}  // namespace quadpose
