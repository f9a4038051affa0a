#pragma once

#include "quadpose/optim.hpp"
#include "quadpose/types.hpp"

#include <string>

namespace quadpose {

struct RbfKernel {
  Scalar log_signal = 0.0;
  Scalar log_length = 0.0;
  Scalar log_noise = -4.6;  // exp ~ 0.01

  Scalar signal() const { return std::exp(log_signal); }
  Scalar length() const { return std::exp(log_length); }
  Scalar noise() const { return std::exp(log_noise); }
};

/// Positive-definiteness jitter, as a fraction of the signal variance.
constexpr Scalar kKernelJitter = 1e-6;

/// One GPLVM: RBF-kernel GP from latents to a normalized data block, with a
/// kernel-regression back constraint from data space to latent space.
struct GplvmNode {
  std::string name;
  int latent_dim = 2;
  MatX latents;      ///< f x q
  RbfKernel kernel;
  MatX data;         ///< f x b, column-normalized training block
  VecX col_mean;     ///< b, normalization stats of the raw block
  VecX col_std;
  int col_start = 0; ///< [start, end) columns of the parent data matrix
  int col_end = 0;

  MatX bc_weights;   ///< f x q; latents = K_bc(data) * bc_weights
  Scalar bc_length = 1.0;

  MatX alpha;        ///< K(latents)^-1 * data, cached for posterior means

  int frames() const { return static_cast<int>(data.rows()); }
  int data_dim() const { return static_cast<int>(data.cols()); }

  /// GP posterior mean at latent x, in raw (denormalized) units.
  VecX posterior_mean(const VecX& x) const;
  /// Back-constraint image of a raw data row.
  VecX latent_from_data(const VecX& raw_row) const;
  /// Recomputes alpha from latents/kernel/data (after deserialization).
  void refresh_posterior();
};

struct TrainOptions {
  int max_iterations = 500;
  Scalar rel_tolerance = 1e-6;
};

/// Trains a node on a raw data block: columns are normalized, latents start
/// at the principal-component projection, then back-constraint weights and
/// kernel hyperparameters are optimized by L-BFGS on the GP log-likelihood.
/// Throws on rank-deficient (constant) data.
GplvmNode train_node(const MatX& data_block, int latent_dim, const TrainOptions& options = {});

/// Negative log-likelihood and gradient of the training objective; exposed
/// for gradient verification.
Scalar gplvm_nll(const GplvmNode& node_shape, const MatX& k_bc, const VecX& params,
                 VecX* grad);

}  // namespace quadpose
