#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "flagflow/functionals.hpp"
#include "flagflow/liebm.hpp"

using namespace flagflow;

namespace {

UnitaryMatrix hadamard2() {
  CMat u(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  u(0, 0) = s;
  u(0, 1) = s;
  u(1, 0) = -s;
  u(1, 1) = s;
  return UnitaryMatrix(u);
}

UnitaryMatrix block_hadamard4() {
  CMat u(4, 4);
  const double s = 1.0 / std::sqrt(2.0);
  for (int d = 0; d < 2; ++d) {
    u(d, d) = s;
    u(d, d + 2) = s;
    u(d + 2, d) = -s;
    u(d + 2, d + 2) = s;
  }
  return UnitaryMatrix(u);
}

FlagPoint scalar_point(double w1_re, double w1_im, double w2_re, double w2_im) {
  FlagPoint w{FlagDims(1, 1), {CMat(1, 1), CMat(1, 1)}};
  w.w[0](0, 0) = cdouble(w1_re, w1_im);
  w.w[1](0, 0) = cdouble(w2_re, w2_im);
  return w;
}

} // namespace

TEST_CASE("area_increment vanishes without motion and on real paths") {
  const FlagPoint w = scalar_point(-1.0, 0.0, 1.0, 0.0);
  const SimplexPoint mid = radial_from_chart(w);
  const auto zero = area_increment(w, w, mid);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);

  const FlagPoint w2 = scalar_point(-1.1, 0.0, 0.9, 0.0);  // real-valued move
  FlagPoint wm{w.dims, {0.5 * (w.w[0] + w2.w[0]), 0.5 * (w.w[1] + w2.w[1])}};
  const auto real_move = area_increment(w, w2, radial_from_chart(wm));
  CHECK(std::abs(real_move[0]) < 1e-15);
  CHECK(std::abs(real_move[1]) < 1e-15);

  CHECK_THROWS_AS(area_increment(w, FlagPoint{FlagDims(1, 2), {}}, mid), ChartMismatch);
}

TEST_CASE("area_increment reproduces the circular-arc element") {
  // w_1(s) = e^{is} c: da_1 = |c|^2/(1+|c|^2) ds + O(ds^2). The second
  // column rides along on the chart as w_2 = -1/conj(w_1).
  const double c = 0.7;
  const double ds = 1e-4;
  auto point_at = [&](double s) {
    const cdouble w1 = c * std::exp(cdouble(0.0, s));
    const cdouble w2 = -1.0 / std::conj(w1);
    return scalar_point(w1.real(), w1.imag(), w2.real(), w2.imag());
  };
  const FlagPoint a = point_at(0.0), b = point_at(ds);
  FlagPoint mid{a.dims, {0.5 * (a.w[0] + b.w[0]), 0.5 * (a.w[1] + b.w[1])}};
  const auto da = area_increment(a, b, radial_from_chart(mid));
  const double expected = c * c / (1.0 + c * c) * ds;
  CHECK(da[0] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("stiefel_blocks basics and consistency with the radial map") {
  const FlagDims dims(1, 1);
  const auto z_id = stiefel_blocks(UnitaryMatrix(CMat::identity(2)), dims);
  CHECK(std::abs(z_id[0](0, 0)) == 0.0);
  CHECK(std::abs(z_id[1](0, 0) - cdouble(1.0)) == 0.0);

  RngStream rng(51, 0);
  const FlagDims dims2(2, 1);
  const UnitaryMatrix u = haar_unitary(4, rng);
  const auto z = stiefel_blocks(u, dims2);
  CMat sum(2, 2);
  for (const auto& zj : z) sum += zj * zj.adjoint();
  CHECK((sum - CMat::identity(2)).frob_norm() < 1e-12);

  const SimplexPoint lam = radial_from_unitary(u, dims2);
  for (int j = 0; j < 2; ++j)
    CHECK((hermitian_part(z[j] * z[j].adjoint()) - lam.lambda[j]).frob_norm() < 1e-14);
}

TEST_CASE("winding_update unwraps a full revolution") {
  FunctionalState state(FlagDims(1, 1));
  const int steps = 63;
  for (int i = 0; i <= steps; ++i) {
    const double t = 2.0 * std::numbers::pi * i / steps;
    std::vector<CMat> z(2, CMat(1, 1));
    z[0](0, 0) = std::exp(cdouble(0.0, t));
    z[1](0, 0) = 1.0;
    winding_update(state, z);
  }
  CHECK(state.theta[0] == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-12));
  CHECK(std::abs(state.theta[1]) < 1e-12);
}

TEST_CASE("winding_update guards") {
  FunctionalState state(FlagDims(1, 1));
  std::vector<CMat> z(2, CMat(1, 1));
  z[0](0, 0) = 1.0;
  z[1](0, 0) = 1.0;
  winding_update(state, z);
  z[0](0, 0) = std::exp(cdouble(0.0, 1.6));  // past pi/2
  CHECK_THROWS_AS(winding_update(state, z), StepTooLarge);
  z[0](0, 0) = 1e-12;
  CHECK_THROWS_AS(winding_update(state, z), SingularBlock);
}

TEST_CASE("pathwise modulus identity |det Z|^2 = det Lambda") {
  RngStream rng(52, 0);
  const FlagDims dims(2, 1);
  UnitaryMatrix u = haar_unitary(4, rng);
  double worst = 0.0;
  std::vector<PathObserver> obs;
  obs.push_back([&](int, double, const UnitaryMatrix& v, const LieIncrement&) {
    const auto z = stiefel_blocks(v, dims);
    const SimplexPoint lam = radial_from_unitary(v, dims);
    for (int j = 0; j < 2; ++j) {
      const double mod2 = std::exp(2.0 * det_arg(z[j]).log_modulus);
      const double dl = std::exp(det_arg(lam.lambda[j]).log_modulus);
      worst = std::max(worst, std::abs(mod2 - dl));
    }
  });
  simulate_unitary_path(u, 0.2, 1e-3, rng, obs);
  CHECK(worst < 1e-12);
}

TEST_CASE("connection_form_increment is zero without motion") {
  RngStream rng(53, 1);
  const FlagDims dims(2, 1);
  const UnitaryMatrix m0 = haar_unitary(4, rng);
  for (double eta : connection_form_increment(m0, m0, dims)) CHECK(eta == 0.0);
}

TEST_CASE("connection_form_increment normalization on vertical moves") {
  RngStream rng(53, 0);
  for (const FlagDims dims : {FlagDims(1, 1), FlagDims(2, 1)}) {
    const int n = dims.n();
    const UnitaryMatrix m0 = haar_unitary(n, rng);
    const double eps = 1e-4;
    for (int j = 0; j < dims.blocks(); ++j) {
      CMat gen(n, n);  // i eps E_jj / m
      for (int d = 0; d < dims.m; ++d)
        gen(j * dims.m + d, j * dims.m + d) = cdouble(0.0, eps / dims.m);
      const UnitaryMatrix m1 = UnitaryMatrix::unchecked(m0.mat() * expm(gen));
      const auto eta = connection_form_increment(m0, m1, dims);
      for (int l = 0; l < dims.blocks(); ++l) {
        const double target = (l == j) ? eps : 0.0;
        CHECK(std::abs(eta[l] - target) < 5.0 * eps * eps);
      }
    }
  }
}

TEST_CASE("connection increments recover the fiber Brownian motion") {
  // Brownian path of the torus bundle in the trivialization: phases
  // theta_j = -a_j + beta_j with independent beta of quadratic variation
  // 2m t per component (the measured fiber-metric scale). The connection
  // increments must recover the beta increments, so eta(t) is a Brownian
  // motion with realized QV slope 2m.
  RngStream rng(54, 0);
  const FlagDims dims(2, 1);
  const int m = dims.m;
  const double rate = 2.0 * m;
  const double dt = 5e-4;
  const int steps = 1200;

  UnitaryMatrix u = block_hadamard4();
  FlagPoint w = project_affine(u, dims);
  SimplexPoint lam = radial_from_chart(w);
  std::vector<double> theta(dims.blocks(), 0.0);

  auto assemble = [&](const FlagPoint& wp, const SimplexPoint& lp,
                      const std::vector<double>& th) {
    CMat mmat(dims.n(), dims.n());
    for (int j = 0; j < dims.blocks(); ++j) {
      const cdouble phase = std::exp(cdouble(0.0, th[j] / m));
      mmat.set_block(0, j * m, phase * chart_section(wp, lp, j));
    }
    return UnitaryMatrix::unchecked(mmat);
  };

  UnitaryMatrix m_prev = assemble(w, lam, theta);
  double qv0 = 0.0, qv1 = 0.0, coupling_err = 0.0;
  long included = 0;
  for (int s = 0; s < steps; ++s) {
    const LieIncrement inc = sample_skew_increment(dims.n(), dt, rng);
    const UnitaryMatrix u_next = step_unitary(u, inc);
    const FlagPoint w_next = project_affine(u_next, dims);
    const SimplexPoint lam_next = radial_from_chart(w_next);
    FlagPoint w_mid{dims, {}};
    for (int j = 0; j < dims.blocks(); ++j)
      w_mid.w.push_back(0.5 * (w.w[j] + w_next.w[j]));
    const auto da = area_increment(w, w_next, radial_from_chart(w_mid));
    std::vector<double> dbeta(dims.blocks());
    for (int j = 0; j < dims.blocks(); ++j) {
      dbeta[j] = std::sqrt(rate * dt) * rng.normal();
      theta[j] += -da[j] + dbeta[j];
    }
    const UnitaryMatrix m_next = assemble(w_next, lam_next, theta);
    // Radial-dip steps violate the unwrap-scale guard that production paths
    // refine under; exclude them here (the exclusion depends only on the
    // w-path, which is independent of beta, so beta statistics stay fair).
    const bool guarded = std::abs(da[0]) < 0.3 && std::abs(da[1]) < 0.3;
    if (guarded) {
      const auto eta = connection_form_increment(m_prev, m_next, dims);
      qv0 += eta[0] * eta[0];
      qv1 += eta[1] * eta[1];
      coupling_err += (eta[0] - dbeta[0]) * (eta[0] - dbeta[0]);
      ++included;
    }
    u = u_next;
    w = w_next;
    lam = lam_next;
    m_prev = m_next;
  }
  REQUIRE(included > 0.9 * steps);
  const double horizon = included * dt;
  CHECK(coupling_err < 0.01 * rate * horizon);  // eta increments track beta
  CHECK(qv0 / horizon == doctest::Approx(rate).epsilon(0.2));
  CHECK(qv1 / horizon == doctest::Approx(rate).epsilon(0.2));
}

TEST_CASE("exp_martingale_update trivial cases") {
  const FlagDims dims(1, 1);
  FunctionalState state(dims, {0.0, 0.0});
  const SimplexPoint a = radial_from_unitary(hadamard2(), dims);
  SimplexPoint b = a;
  b.lambda[0](0, 0) = 0.3;
  b.lambda[1](0, 0) = 0.7;
  exp_martingale_update(state, a, b, 1e-3);
  CHECK(state.martingale() == doctest::Approx(1.0));  // u = 0 -> D constant

  FunctionalState state2(dims, {0.5, -0.3});
  exp_martingale_update(state2, a, b, 0.0);  // zero elapsed time
  CHECK(state2.martingale() == doctest::Approx(1.0));
}

TEST_CASE("exponential martingale has unit mean") {
  // Small dt: the raw per-step update has no dip refinement, and the clock
  // integral bias near radial dips scales with the step.
  const FlagDims dims(1, 1);
  const std::vector<double> u_freq{0.5, -0.3};
  const double t = 0.2, dt = 2e-4;
  const int n_paths = 2500;
  double sum = 0.0, sum_sq = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    RngStream rng(55, std::uint64_t(p));
    UnitaryMatrix u = hadamard2();
    SimplexPoint lam = radial_from_unitary(u, dims);
    FunctionalState fs(dims, u_freq);
    const long steps = std::lround(t / dt);
    for (long s = 0; s < steps; ++s) {
      const LieIncrement inc = sample_skew_increment(2, dt, rng);
      const UnitaryMatrix u_next = step_unitary(u, inc);
      const SimplexPoint lam_next = radial_from_unitary(u_next, dims);
      exp_martingale_update(fs, lam, lam_next, dt);
      u = u_next;
      lam = lam_next;
    }
    const double d = fs.martingale();
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / n_paths;
  const double se = std::sqrt((sum_sq / n_paths - mean * mean) / n_paths);
  CHECK(std::abs(mean - 1.0) < 3.0 * se + 5e-3);
}

TEST_CASE("horizontal lift: static path leaves the state unchanged") {
  const FlagDims dims(2, 1);
  const UnitaryMatrix u = block_hadamard4();
  const FlagPoint w = project_affine(u, dims);
  const SimplexPoint lam = radial_from_chart(w);
  HorizontalLiftState lift(w, lam);
  const CMat x0 = lift.x;
  horizontal_lift_step(lift, w, w, lam, lam, std::vector<double>(2, 0.0));
  CHECK((lift.x - x0).frob_norm() < 1e-14);
  CHECK(lift.max_det_residual() < 1e-14);
}

TEST_CASE("horizontal lift stays unitary, special, and over the base path") {
  RngStream rng(56, 0);
  const FlagDims dims(2, 1);
  UnitaryMatrix u = block_hadamard4();
  FlagPoint w = project_affine(u, dims);
  SimplexPoint lam = radial_from_chart(w);
  HorizontalLiftState lift(w, lam);
  const double dt = 2e-4;
  double max_unit = 0.0, max_det = 0.0, max_proj = 0.0, max_eta = 0.0;
  for (int s = 0; s < 300; ++s) {
    const LieIncrement inc = sample_skew_increment(4, dt, rng);
    const UnitaryMatrix u_next = step_unitary(u, inc);
    const FlagPoint w_next = project_affine(u_next, dims);
    const SimplexPoint lam_next = radial_from_chart(w_next);
    FlagPoint w_mid{dims, {}};
    for (int j = 0; j < 2; ++j) w_mid.w.push_back(0.5 * (w.w[j] + w_next.w[j]));
    const auto da = area_increment(w, w_next, radial_from_chart(w_mid));
    const UnitaryMatrix x_prev = UnitaryMatrix::unchecked(lift.x);
    horizontal_lift_step(lift, w, w_next, lam, lam_next, da);
    max_unit = std::max(max_unit, unitarity_residual(lift.x));
    max_det = std::max(max_det, lift.max_det_residual());
    const FlagPoint wx = project_affine(UnitaryMatrix::unchecked(lift.x), dims);
    for (int j = 0; j < 2; ++j)
      max_proj = std::max(max_proj, (wx.w[j] - w_next.w[j]).frob_norm());
    // The lift is horizontal for the flag fibration, hence also horizontal
    // for the torus bundle: connection increments vanish along it.
    const auto eta =
        connection_form_increment(x_prev, UnitaryMatrix::unchecked(lift.x), dims);
    for (double e : eta) max_eta = std::max(max_eta, std::abs(e));
    u = u_next;
    w = w_next;
    lam = lam_next;
  }
  CHECK(max_unit < 1e-8);
  CHECK(max_det < 1e-8);
  CHECK(max_proj < 1e-8);
  CHECK(max_eta < 5e-4);  // O(dt^{3/2}) midpoint residue per step
}
