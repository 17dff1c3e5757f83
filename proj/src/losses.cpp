#include "ristcorr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ristcorr {

namespace {

void check_nonempty(const Points& pred, const Points& target) {
  if (pred.rows() < 1 || target.rows() < 1)
    throw std::invalid_argument("point sets must be non-empty");
}

}  // namespace

LossValue mse_paired(const Points& pred, const Points& target) {
  check_nonempty(pred, target);
  if (pred.rows() != target.rows())
    throw std::invalid_argument("mse_paired requires equal point counts, got " +
                                std::to_string(pred.rows()) + " vs " +
                                std::to_string(target.rows()));
  const double n = static_cast<double>(pred.rows());
  Points diff = pred - target;
  LossValue out;
  out.value = diff.rowwise().squaredNorm().sum() / n;
  out.grad_pred = 2.0 / n * diff;
  return out;
}

LossValue chamfer(const Points& pred, const Points& target) {
  check_nonempty(pred, target);
  const int n = static_cast<int>(pred.rows());
  const int m = static_cast<int>(target.rows());
  LossValue out;
  out.grad_pred = Points::Zero(n, 3);

  // pred -> target
  double sum_pt = 0.0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (pred.row(i) - target.row(0)).squaredNorm();
    for (int j = 1; j < m; ++j) {
      double d = (pred.row(i) - target.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    sum_pt += best_d;
    out.grad_pred.row(i) += 2.0 / n * (pred.row(i) - target.row(best));
  }

  // target -> pred
  double sum_tp = 0.0;
  for (int j = 0; j < m; ++j) {
    int best = 0;
    double best_d = (target.row(j) - pred.row(0)).squaredNorm();
    for (int i = 1; i < n; ++i) {
      double d = (target.row(j) - pred.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    sum_tp += best_d;
    out.grad_pred.row(best) += 2.0 / m * (pred.row(best) - target.row(j));
  }

  out.value = sum_pt / n + sum_tp / m;
  return out;
}

std::vector<int> solve_assignment(const Mat& cost) {
  if (cost.rows() != cost.cols() || cost.rows() < 1)
    throw std::invalid_argument("assignment requires a non-empty square cost matrix");
  const int n = static_cast<int>(cost.rows());
  const double kInf = std::numeric_limits<double>::infinity();

  // 1-based potentials / matching; p[j] = row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

LossValue emd_exact(const Points& pred, const Points& target, int exact_cap) {
  check_nonempty(pred, target);
  if (pred.rows() != target.rows())
    throw std::invalid_argument("emd_exact requires equal point counts, got " +
                                std::to_string(pred.rows()) + " vs " +
                                std::to_string(target.rows()));
  const int n = static_cast<int>(pred.rows());
  if (n > exact_cap)
    throw std::invalid_argument("emd_exact capped at N=" + std::to_string(exact_cap) +
                                ", got N=" + std::to_string(n) + "; use emd_approx");

  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (pred.row(i) - target.row(j)).norm();

  const auto match = solve_assignment(cost);
  LossValue out;
  out.grad_pred = Points::Zero(n, 3);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = match[i];
    const double d = cost(i, j);
    sum += d;
    if (d > 0.0) out.grad_pred.row(i) = (pred.row(i) - target.row(j)) / (n * d);
  }
  out.value = sum / n;
  return out;
}

LossValue emd_approx(const Points& pred, const Points& target, double epsilon, int iters) {
  check_nonempty(pred, target);
  if (pred.rows() != target.rows())
    throw std::invalid_argument("emd_approx requires equal point counts");
  if (epsilon <= 0.0) throw std::invalid_argument("emd_approx requires epsilon > 0");
  if (iters < 1) throw std::invalid_argument("emd_approx requires iters >= 1");

  const int n = static_cast<int>(pred.rows());
  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (pred.row(i) - target.row(j)).norm();

  // Log-domain Sinkhorn with uniform marginals 1/n.
  const double log_mass = std::log(1.0 / n);
  Vec f = Vec::Zero(n), g = Vec::Zero(n);
  auto lse_rows = [&](const Vec& pot, Vec& out) {
    // out_i = LSE_j((pot_j - cost_ij) / eps)
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) mx = std::max(mx, (pot(j) - cost(i, j)) / epsilon);
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += std::exp((pot(j) - cost(i, j)) / epsilon - mx);
      out(i) = mx + std::log(s);
    }
  };
  auto lse_cols = [&](const Vec& pot, Vec& out) {
    for (int j = 0; j < n; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) mx = std::max(mx, (pot(i) - cost(i, j)) / epsilon);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += std::exp((pot(i) - cost(i, j)) / epsilon - mx);
      out(j) = mx + std::log(s);
    }
  };

  const double tol = 1e-9;
  bool converged = false;
  Vec lse(n);
  for (int it = 0; it < iters; ++it) {
    lse_rows(g, lse);
    f = epsilon * (Vec::Constant(n, log_mass) - lse);
    lse_cols(f, lse);
    g = epsilon * (Vec::Constant(n, log_mass) - lse);
    // Row-marginal residual after the column update.
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += std::exp((f(i) + g(j) - cost(i, j)) / epsilon);
      err += std::abs(row - 1.0 / n);
    }
    if (err < tol) {
      converged = true;
      break;
    }
  }

  LossValue out;
  out.converged = converged;
  out.grad_pred = Points::Zero(n, 3);
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double plan = std::exp((f(i) + g(j) - cost(i, j)) / epsilon);
      value += plan * cost(i, j);
      if (cost(i, j) > 0.0)
        out.grad_pred.row(i) += plan * (pred.row(i) - target.row(j)) / cost(i, j);
    }
  }
  out.value = value;
  return out;
}

}  // namespace ristcorr
