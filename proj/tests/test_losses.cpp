#include <doctest.h>

#include "ristcorr/geometry.hpp"
#include "ristcorr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

using namespace ristcorr;

namespace {

Points random_points(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Points p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = gauss(rng);
  return p;
}

// Central finite differences of `f` with respect to `pred`.
Points fd_gradient(const std::function<double(const Points&)>& f, Points pred,
                   double h = 1e-6) {
  Points grad(pred.rows(), 3);
  for (int i = 0; i < pred.rows(); ++i)
    for (int j = 0; j < 3; ++j) {
      const double orig = pred(i, j);
      pred(i, j) = orig + h;
      const double up = f(pred);
      pred(i, j) = orig - h;
      const double down = f(pred);
      pred(i, j) = orig;
      grad(i, j) = (up - down) / (2 * h);
    }
  return grad;
}

double brute_force_chamfer(const Points& pred, const Points& target) {
  double a = 0.0, b = 0.0;
  for (int i = 0; i < pred.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < target.rows(); ++j)
      best = std::min(best, (pred.row(i) - target.row(j)).squaredNorm());
    a += best;
  }
  for (int j = 0; j < target.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pred.rows(); ++i)
      best = std::min(best, (pred.row(i) - target.row(j)).squaredNorm());
    b += best;
  }
  return a / pred.rows() + b / target.rows();
}

double brute_force_emd(const Points& pred, const Points& target) {
  const int n = static_cast<int>(pred.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += (pred.row(i) - target.row(perm[i])).norm();
    best = std::min(best, total / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("paired MSE of identical clouds is zero") {
  Rng rng(1);
  const Points p = random_points(10, rng);
  const LossValue loss = mse_paired(p, p);
  CHECK(loss.value == 0.0);
  CHECK(loss.grad_pred.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("paired MSE hand case: unit offset gives 1") {
  Points pred(1, 3), target(1, 3);
  pred << 0, 0, 0;
  target << 1, 0, 0;
  CHECK(mse_paired(pred, target).value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("paired MSE rejects shape mismatches") {
  Rng rng(2);
  CHECK_THROWS_AS(mse_paired(random_points(3, rng), random_points(4, rng)),
                  std::invalid_argument);
}

TEST_CASE("paired MSE gradient matches finite differences") {
  Rng rng(3);
  const Points pred = random_points(8, rng);
  const Points target = random_points(8, rng);
  const LossValue loss = mse_paired(pred, target);
  const Points fd = fd_gradient(
      [&](const Points& p) { return mse_paired(p, target).value; }, pred);
  CHECK(relative_error(loss.grad_pred, fd) < 1e-6);
}

TEST_CASE("chamfer of identical clouds is zero") {
  Rng rng(4);
  const Points p = random_points(9, rng);
  CHECK(chamfer(p, p).value < 1e-12);
}

TEST_CASE("chamfer hand case") {
  Points pred(1, 3), target(2, 3);
  pred << 0, 0, 0;
  target << 1, 0, 0, -1, 0, 0;
  // pred side: nearest target at squared distance 1. target side: both at 1.
  CHECK(chamfer(pred, target).value == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("chamfer matches the brute-force oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Points pred = random_points(8, rng);
    const Points target = random_points(8, rng);
    CHECK(chamfer(pred, target).value ==
          doctest::Approx(brute_force_chamfer(pred, target)).epsilon(1e-14));
  }
}

TEST_CASE("chamfer rejects empty clouds") {
  Rng rng(6);
  const Points p = random_points(3, rng);
  const Points empty(0, 3);
  CHECK_THROWS_AS(chamfer(empty, p), std::invalid_argument);
  CHECK_THROWS_AS(chamfer(p, empty), std::invalid_argument);
}

TEST_CASE("chamfer gradient matches finite differences") {
  Rng rng(7);
  const Points pred = random_points(8, rng);
  const Points target = random_points(6, rng);
  const LossValue loss = chamfer(pred, target);
  const Points fd = fd_gradient(
      [&](const Points& p) { return chamfer(p, target).value; }, pred);
  CHECK(relative_error(loss.grad_pred, fd) < 1e-6);
}

TEST_CASE("exact EMD of identical clouds is zero") {
  Rng rng(8);
  const Points p = random_points(12, rng);
  CHECK(emd_exact(p, p).value < 1e-12);
}

TEST_CASE("exact EMD finds the crossing assignment") {
  Points pred(2, 3), target(2, 3);
  pred << 0, 0, 0, 1, 0, 0;
  target << 1, 0, 0, 0, 0, 0;
  CHECK(emd_exact(pred, target).value < 1e-12);
}

TEST_CASE("exact EMD equals the exhaustive permutation minimum") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 6;
    const Points pred = random_points(n, rng);
    const Points target = random_points(n, rng);
    CHECK(emd_exact(pred, target).value ==
          doctest::Approx(brute_force_emd(pred, target)).epsilon(1e-12));
  }
}

TEST_CASE("exact EMD enforces its preconditions") {
  Rng rng(10);
  CHECK_THROWS_AS(emd_exact(random_points(3, rng), random_points(4, rng)),
                  std::invalid_argument);
  CHECK_THROWS_AS(emd_exact(random_points(9, rng), random_points(9, rng), 8),
                  std::invalid_argument);
}

TEST_CASE("exact EMD never exceeds the identity matching cost") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Points pred = random_points(10, rng);
    const Points target = random_points(10, rng);
    double identity_cost = 0.0;
    for (int i = 0; i < 10; ++i) identity_cost += (pred.row(i) - target.row(i)).norm();
    identity_cost /= 10;
    CHECK(emd_exact(pred, target).value <= identity_cost + 1e-12);
  }
}

TEST_CASE("exact EMD gradient matches finite differences") {
  Rng rng(12);
  const Points pred = random_points(7, rng);
  const Points target = random_points(7, rng);
  const LossValue loss = emd_exact(pred, target);
  const Points fd = fd_gradient(
      [&](const Points& p) { return emd_exact(p, target).value; }, pred);
  CHECK(relative_error(loss.grad_pred, fd) < 1e-6);
}

TEST_CASE("approximate EMD vanishes on identical clouds") {
  Rng rng(13);
  const Points p = random_points(10, rng);
  CHECK(emd_approx(p, p, 0.01, 500).value <= 1e-3);
}

TEST_CASE("approximate EMD tracks the exact solver at small epsilon") {
  Rng rng(14);
  const Points pred = random_points(16, rng);
  const Points target = random_points(16, rng);
  const double exact = emd_exact(pred, target).value;
  const double approx = emd_approx(pred, target, 0.005, 4000).value;
  CHECK(std::abs(approx - exact) / exact < 0.05);
}

TEST_CASE("approximate EMD gap shrinks as epsilon decreases") {
  Rng rng(15);
  const Points pred = random_points(12, rng);
  const Points target = random_points(12, rng);
  const double exact = emd_exact(pred, target).value;
  double prev_gap = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.05, 0.02, 0.01}) {
    const double gap = std::abs(emd_approx(pred, target, eps, 6000).value - exact);
    CHECK(gap <= prev_gap + 1e-6);
    prev_gap = gap;
  }
}

TEST_CASE("approximate EMD flags nonconvergence but still returns a value") {
  Rng rng(16);
  const Points pred = random_points(14, rng);
  const Points target = random_points(14, rng, 3.0);
  const LossValue starved = emd_approx(pred, target, 0.001, 1);
  CHECK_FALSE(starved.converged);
  CHECK(std::isfinite(starved.value));
}

TEST_CASE("all losses are rotation invariant") {
  Rng rng(17);
  const Points pred = random_points(10, rng);
  const Points target = random_points(10, rng);
  const Rotation r = sample_uniform_rotation(rng);
  const Points pred_r = rotate_points(pred, r);
  const Points target_r = rotate_points(target, r);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  CHECK(rel(mse_paired(pred_r, target_r).value, mse_paired(pred, target).value) < 1e-5);
  CHECK(rel(chamfer(pred_r, target_r).value, chamfer(pred, target).value) < 1e-5);
  CHECK(rel(emd_exact(pred_r, target_r).value, emd_exact(pred, target).value) < 1e-5);
}

TEST_CASE("assignment solver matches brute force on small costs") {
  Rng rng(18);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 5;
    Mat cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = unit(rng);
    const std::vector<int> assignment = solve_assignment(cost);
    double got = 0.0;
    for (int i = 0; i < n; ++i) got += cost(i, assignment[i]);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += cost(i, perm[i]);
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

}  // TEST_SUITE
