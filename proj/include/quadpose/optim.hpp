#pragma once

#include "quadpose/types.hpp"

#include <functional>

namespace quadpose {

/// Objective returning the value; fills *grad when non-null.
using Objective = std::function<Scalar(const VecX& x, VecX* grad)>;

struct LbfgsOptions {
  int max_iterations = 500;
  Scalar rel_tolerance = 1e-6;   ///< on the objective value change
  Scalar grad_tolerance = 1e-9;
  int history = 10;
};

struct LbfgsResult {
  VecX x;
  Scalar value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with Armijo backtracking. Monotone: the returned
/// value never exceeds the objective at x0.
LbfgsResult minimize_lbfgs(const Objective& objective, VecX x0, const LbfgsOptions& options = {});

/// Central-difference gradient wrapper for value-only objectives.
Objective with_numeric_gradient(std::function<Scalar(const VecX&)> value_fn, Scalar h = 1e-6);

/// Lloyd's k-means (squared euclidean) with k-means++ seeding, best of
/// `restarts` runs. Deterministic for a fixed seed. Returns k x dim centroids
/// (k clamped to the number of points).
MatX kmeans(const MatX& points, int k, int restarts, std::uint64_t seed);

}  // namespace quadpose
