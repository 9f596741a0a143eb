#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flagflow/liebm.hpp"

using namespace flagflow;

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 100; ++i) {
    const double va = a.normal();
    CHECK(va == b.normal());  // bit-identical
    (void)c.normal();
  }
  RngStream a2(42, 7), c2(42, 8);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) any_diff = any_diff || (a2.normal() != c2.normal());
  CHECK(any_diff);
}

TEST_CASE("rng uniform and normal moments") {
  RngStream rng(3, 0);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(sum_sq / n - 1.0) < 4.0 * std::sqrt(2.0 / double(n)));
}

TEST_CASE("skew increment is exactly skew-Hermitian") {
  RngStream rng(11, 0);
  const LieIncrement inc = sample_skew_increment(5, 0.01, rng);
  for (int p = 0; p < 5; ++p) {
    CHECK(inc.dA(p, p).real() == 0.0);  // bitwise
    for (int q = 0; q < 5; ++q) CHECK(inc.dA(q, p) == -std::conj(inc.dA(p, q)));
  }
  CHECK_THROWS_AS(sample_skew_increment(1, 0.01, rng), InvalidDimension);
  CHECK_THROWS_AS(sample_skew_increment(3, 0.0, rng), InvalidStep);
}

TEST_CASE("increment mean is zero within Monte Carlo error") {
  RngStream rng(12, 0);
  const int draws = 100000;
  const double dt = 0.01;
  CMat mean(2, 2);
  for (int d = 0; d < draws; ++d) mean += sample_skew_increment(2, dt, rng).dA;
  mean *= cdouble(1.0 / draws);
  // Entry standard errors: off-diagonal sqrt(dt/draws) per part, diagonal
  // sqrt(2 dt / draws) on the imaginary part.
  const double se_off = std::sqrt(dt / draws);
  const double se_diag = std::sqrt(2.0 * dt / draws);
  CHECK(std::abs(mean(0, 1).real()) < 4.0 * se_off);
  CHECK(std::abs(mean(0, 1).imag()) < 4.0 * se_off);
  CHECK(std::abs(mean(0, 0).imag()) < 4.0 * se_diag);
  CHECK(std::abs(mean(1, 1).imag()) < 4.0 * se_diag);
}

TEST_CASE("full-matrix covariation E[dA dA] = -2n I dt") {
  RngStream rng(13, 0);
  const int draws = 100000, n = 2;
  const double dt = 0.01;
  CMat mean(n, n);
  std::vector<double> sq(n * n, 0.0);
  for (int d = 0; d < draws; ++d) {
    const LieIncrement inc = sample_skew_increment(n, dt, rng);
    const CMat prod = inc.dA * inc.dA;
    mean += prod;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) sq[i * n + j] += std::norm(prod(i, j));
  }
  mean *= cdouble(1.0 / draws);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double target = (i == j) ? -2.0 * n * dt : 0.0;
      const double var = sq[i * n + j] / draws - std::norm(mean(i, j));
      const double se = std::sqrt(std::max(var, 1e-30) / draws);
      CHECK(std::abs(mean(i, j).real() - target) < 3.5 * se);
      CHECK(std::abs(mean(i, j).imag()) < 3.5 * se);
    }
}

TEST_CASE("block covariation vanishes for i != r") {
  // n = 4 split into m = 2 blocks: E[dA_11 dA_12] = 0.
  RngStream rng(14, 0);
  const int draws = 100000;
  const double dt = 0.01;
  CMat mean(2, 2);
  double sq = 0.0;
  for (int d = 0; d < draws; ++d) {
    const LieIncrement inc = sample_skew_increment(4, dt, rng);
    const CMat prod = inc.dA.block(0, 0, 2, 2) * inc.dA.block(0, 2, 2, 2);
    mean += prod;
    sq += std::norm(prod(0, 0));
  }
  mean *= cdouble(1.0 / draws);
  const double se = std::sqrt(sq / draws / draws);
  CHECK(std::abs(mean(0, 0)) < 4.0 * se);
}

TEST_CASE("step_unitary zero increment and drift") {
  RngStream rng(15, 0);
  const UnitaryMatrix u = haar_unitary(3, rng);
  const LieIncrement zero{3, 1e-3, CMat::zero(3, 3)};
  CHECK((step_unitary(u, zero).mat() - u.mat()).frob_norm() < 1e-15);

  // E[(U_dt - U)/dt] at U = I equals -n I + O(dt), here n = 2.
  const int draws = 100000;
  const double dt = 1e-3;
  const UnitaryMatrix eye = UnitaryMatrix(CMat::identity(2));
  CMat mean(2, 2);
  std::vector<double> sq(4, 0.0);
  for (int d = 0; d < draws; ++d) {
    const LieIncrement inc = sample_skew_increment(2, dt, rng);
    const CMat diff = step_unitary(eye, inc).mat() - eye.mat();
    mean += diff;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) sq[i * 2 + j] += std::norm(diff(i, j));
  }
  mean *= cdouble(1.0 / (draws * dt));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double target = (i == j) ? -2.0 : 0.0;
      const double se = std::sqrt(sq[i * 2 + j] / draws) / (std::sqrt(double(draws)) * dt);
      CHECK(std::abs(mean(i, j).real() - target) < 3.5 * se + 0.05);
      CHECK(std::abs(mean(i, j).imag()) < 3.5 * se + 0.05);
    }
}

TEST_CASE("path unitarity residual stays small") {
  RngStream rng(16, 0);
  UnitaryMatrix u = UnitaryMatrix(CMat::identity(4));
  double max_res = 0.0;
  std::vector<PathObserver> obs;
  obs.push_back([&](int, double, const UnitaryMatrix& v, const LieIncrement&) {
    max_res = std::max(max_res, v.residual());
  });
  simulate_unitary_path(u, 2.0, 1e-3, rng, obs, {64});
  CHECK(max_res < 1e-10);
}

TEST_CASE("simulate_unitary_path step count and determinism") {
  RngStream rng1(17, 3), rng2(17, 3);
  const UnitaryMatrix u0 = UnitaryMatrix(CMat::identity(2));
  int steps = 0;
  std::vector<PathObserver> counter;
  counter.push_back([&](int, double, const UnitaryMatrix&, const LieIncrement&) { ++steps; });
  simulate_unitary_path(u0, 1e-3, 1e-3, rng1, counter);
  CHECK(steps == 1);  // T = dt -> exactly one step

  RngStream ra(99, 5), rb(99, 5);
  const UnitaryMatrix ua = simulate_unitary_path(u0, 0.1, 1e-3, ra, {});
  const UnitaryMatrix ub = simulate_unitary_path(u0, 0.1, 1e-3, rb, {});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(ua.mat()(i, j) == ub.mat()(i, j));  // bit-identical
}

TEST_CASE("split_increment halves sum to the parent draw") {
  RngStream rng(18, 0);
  const LieIncrement inc = sample_skew_increment(3, 0.01, rng);
  const auto [left, right] = split_increment(inc, rng);
  CHECK(left.dt == doctest::Approx(0.005));
  CHECK((left.dA + right.dA - inc.dA).frob_norm() < 1e-15);
  CHECK(skew_hermiticity_residual(left.dA) < 1e-15);
}

TEST_CASE("haar_unitary is unitary and seed-stable") {
  RngStream rng(21, 4), rng2(21, 4);
  const UnitaryMatrix u = haar_unitary(5, rng);
  CHECK(u.residual() < 1e-12);
  const UnitaryMatrix v = haar_unitary(5, rng2);
  CHECK((u.mat() - v.mat()).frob_norm() == 0.0);
}
