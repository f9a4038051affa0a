#include "quadpose/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

namespace quadpose {

LbfgsResult minimize_lbfgs(const Objective& objective, VecX x0, const LbfgsOptions& options) {
  LbfgsResult result;
  const int n = static_cast<int>(x0.size());
  VecX x = std::move(x0);
  VecX grad(n);
  Scalar value = objective(x, &grad);

  std::deque<VecX> s_hist, y_hist;
  std::deque<Scalar> rho_hist;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (grad.norm() <= options.grad_tolerance) {
      result.converged = true;
      break;
    }

    // two-loop recursion
    VecX direction = -grad;
    std::vector<Scalar> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const Scalar gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      direction *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const Scalar beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha[i] - beta) * s_hist[i];
    }
    Scalar dg = direction.dot(grad);
    if (dg >= 0.0) {  // not a descent direction; restart from steepest descent
      direction = -grad;
      dg = -grad.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Armijo backtracking
    constexpr Scalar kC1 = 1e-4;
    Scalar step = 1.0;
    VecX x_new;
    Scalar value_new = value;
    VecX grad_new(n);
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = x + step * direction;
      value_new = objective(x_new, &grad_new);
      if (std::isfinite(value_new) && value_new <= value + kC1 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;  // no further progress along any tried step
      break;
    }

    const VecX s = x_new - x;
    const VecX y = grad_new - grad;
    const Scalar sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const Scalar change = std::abs(value - value_new);
    x = std::move(x_new);
    grad = grad_new;
    value = value_new;
    if (change <= options.rel_tolerance * std::max<Scalar>(1.0, std::abs(value))) {
      result.converged = true;
      break;
    }
  }

  result.x = std::move(x);
  result.value = value;
  return result;
}

Objective with_numeric_gradient(std::function<Scalar(const VecX&)> value_fn, Scalar h) {
  return [value_fn = std::move(value_fn), h](const VecX& x, VecX* grad) -> Scalar {
    if (grad) {
      VecX probe = x;
      for (int i = 0; i < x.size(); ++i) {
        const Scalar step = h * std::max<Scalar>(1.0, std::abs(x[i]));
        probe[i] = x[i] + step;
        const Scalar up = value_fn(probe);
        probe[i] = x[i] - step;
        const Scalar down = value_fn(probe);
        probe[i] = x[i];
        (*grad)[i] = (up - down) / (2.0 * step);
      }
    }
    return value_fn(x);
  };
}

namespace {

Scalar lloyd(const MatX& points, MatX& centroids, std::vector<int>& assignment) {
  const int n = static_cast<int>(points.rows());
  const int k = static_cast<int>(centroids.rows());
  assignment.assign(n, 0);
  Scalar inertia = 0.0;
  for (int pass = 0; pass < 100; ++pass) {
    bool changed = false;
    inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = assignment[i];
      Scalar best_d = std::numeric_limits<Scalar>::max();
      for (int c = 0; c < k; ++c) {
        const Scalar d = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != assignment[i]) changed = true;
      assignment[i] = best;
      inertia += best_d;
    }
    MatX sums = MatX::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assignment[i]) += points.row(i);
      ++counts[assignment[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) centroids.row(c) = sums.row(c) / counts[c];
    if (!changed) break;
  }
  return inertia;
}

}  // namespace

MatX kmeans(const MatX& points, int k, int restarts, std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  if (n == 0) throw ValidationError("kmeans: empty input");
  k = std::min(k, n);

  MatX best_centroids;
  Scalar best_inertia = std::numeric_limits<Scalar>::max();
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    // k-means++ seeding
    MatX centroids(k, points.cols());
    std::uniform_int_distribution<int> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));
    VecX d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const Scalar total = d2.sum();
      if (total <= 0.0) {
        centroids.row(c) = points.row(first(rng));
      } else {
        std::uniform_real_distribution<Scalar> u(0.0, total);
        Scalar target = u(rng), acc = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
        centroids.row(c) = points.row(pick);
      }
      d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assignment;
    const Scalar inertia = lloyd(points, centroids, assignment);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centroids = centroids;
    }
  }
  return best_centroids;
}

}  // namespace quadpose
