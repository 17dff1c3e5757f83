#pragma once

#include "ristcorr/common.hpp"

#include <vector>

namespace ristcorr {

// A differentiable point-set discrepancy. `grad_pred` is the gradient of
// `value` with respect to the predicted points.
struct LossValue {
  double value = 0.0;
  Points grad_pred;
  // emd_approx only: whether the marginal residual fell under tolerance
  // within the iteration budget.
  bool converged = true;
};

// Mean over N of the squared Euclidean distance between index-matched points.
// Zero iff pred == target. Gradient: 2 (pred - target) / N.
LossValue mse_paired(const Points& pred, const Points& target);

// Symmetric Chamfer distance with squared distances: mean over pred of the
// squared distance to the nearest target, plus mean over target of the squared
// distance to the nearest pred. Nearest-neighbor ties break to the lower
// index; the gradient follows the argmin matches.
LossValue chamfer(const Points& pred, const Points& target);

// Exact Earth Mover's Distance between equal-size sets: minimum over
// permutations of the mean (unsquared) Euclidean distance, solved by the
// Hungarian algorithm. The gradient treats the optimal matching as fixed.
// Throws std::invalid_argument on a size mismatch or when N exceeds
// `exact_cap` (use emd_approx beyond the cap).
LossValue emd_exact(const Points& pred, const Points& target, int exact_cap = 512);

// Entropic-regularized transport cost with uniform marginals and Euclidean
// ground cost, via log-domain Sinkhorn iterations. Upper-bounds emd_exact and
// converges to it as epsilon -> 0. `converged` is false if the marginal
// residual never fell below tolerance; the value is still returned.
// The gradient uses the converged plan held fixed, which matches the exact
// EMD gradient in the small-epsilon limit.
LossValue emd_approx(const Points& pred, const Points& target, double epsilon, int iters);

// Minimum-cost perfect matching on a square cost matrix; returns the column
// assigned to each row. O(n^3) shortest augmenting paths with potentials.
std::vector<int> solve_assignment(const Mat& cost);

}  // namespace ristcorr
