#include "flagflow/functionals.hpp"

#include <cmath>
#include <numbers>

namespace flagflow {

FunctionalState::FunctionalState(FlagDims dims_, std::vector<double> u_)
    : dims(dims_),
      a(dims_.blocks(), 0.0),
      theta(dims_.blocks(), 0.0),
      last_arg(dims_.blocks(), 0.0),
      u(std::move(u_)) {
  if (u.empty()) u.assign(dims.blocks(), 0.0);
  if (int(u.size()) != dims.blocks())
    throw DimensionMismatch("FunctionalState: u must have k+1 components");
}

double FunctionalState::martingale() const { return std::exp(log_d); }

std::vector<double> area_increment(const FlagPoint& w_prev, const FlagPoint& w_next,
                                   const SimplexPoint& lambda_mid) {
  const FlagDims dims = w_prev.dims;
  if (dims.m != w_next.dims.m || dims.k != w_next.dims.k ||
      dims.m != lambda_mid.dims.m || dims.k != lambda_mid.dims.k)
    throw ChartMismatch("area_increment: dimension mismatch");

  std::vector<double> da(dims.blocks(), 0.0);
  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat delta = w_next.w[j] - w_prev.w[j];
    const CMat mid = 0.5 * (w_next.w[j] + w_prev.w[j]);
    const CMat arg = skew_part(delta.adjoint() * mid - mid.adjoint() * delta);
    const cdouble t = (lambda_mid.lambda[j] * arg).trace();
    const cdouble val = cdouble(0.0, 0.5) * t;
    if (std::abs(val.imag()) > 1e-12 * (1.0 + std::abs(t)))
      throw RuntimeFailure("area_increment: trace argument lost skew symmetry");
    da[j] = val.real();
  }
  return da;
}

std::vector<CMat> stiefel_blocks(const UnitaryMatrix& u, FlagDims dims) {
  const int n = dims.n();
  if (u.dim() != n) throw DimensionMismatch("stiefel_blocks: dims do not match U");
  std::vector<CMat> z;
  z.reserve(dims.blocks());
  for (int j = 0; j < dims.blocks(); ++j)
    z.push_back(u.mat().block(n - dims.m, j * dims.m, dims.m, dims.m));
  return z;
}

void winding_update(FunctionalState& state, const std::vector<CMat>& z, double chart_guard) {
  const int kb = state.dims.blocks();
  if (int(z.size()) != kb) throw DimensionMismatch("winding_update: block count mismatch");
  std::vector<double> args(kb);
  for (int j = 0; j < kb; ++j) {
    DetArg d{};
    try {
      d = det_arg(z[j]);
    } catch (const SingularMatrix&) {
      throw SingularBlock("winding_update: det Z_j underflow");
    }
    if (std::exp(d.log_modulus) <= chart_guard)
      throw SingularBlock("winding_update: |det Z_j| at or below chart guard");
    args[j] = d.principal_arg;
  }
  if (!state.has_args) {
    state.last_arg = args;
    state.has_args = true;
    return;
  }
  std::vector<double> delta(kb);
  for (int j = 0; j < kb; ++j) {
    double dj = std::remainder(args[j] - state.last_arg[j], 2.0 * std::numbers::pi);
    if (dj <= -std::numbers::pi) dj = std::numbers::pi;
    if (std::abs(dj) >= 0.5 * std::numbers::pi)
      throw StepTooLarge("winding_update: phase increment at or above pi/2");
    delta[j] = dj;
  }
  for (int j = 0; j < kb; ++j) {
    state.theta[j] += delta[j];
    state.last_arg[j] = args[j];
  }
}

std::vector<double> connection_form_increment(const UnitaryMatrix& m_prev,
                                              const UnitaryMatrix& m_next, FlagDims dims) {
  const int n = dims.n();
  if (m_prev.dim() != n || m_next.dim() != n)
    throw DimensionMismatch("connection_form_increment: dims do not match");
  const CMat mid = unitary_project(0.5 * (m_prev.mat() + m_next.mat()));
  const CMat delta = m_next.mat() - m_prev.mat();
  std::vector<double> eta(dims.blocks(), 0.0);
  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat mcol = mid.block(0, j * dims.m, n, dims.m);
    const CMat dcol = delta.block(0, j * dims.m, n, dims.m);
    eta[j] = (mcol.adjoint() * dcol).trace().imag();
  }
  return eta;
}

namespace {

double log_det_hermitian(const CMat& h) {
  const DetArg d = det_arg(h);
  return d.log_modulus;  // Hermitian PD: argument is zero up to roundoff
}

double trace_inverse(const CMat& h, double eig_floor) {
  const EigH e = eigh(h);
  double s = 0.0;
  for (double lam : e.eigenvalues) {
    if (lam < eig_floor) throw SingularBlock("trace_inverse: eigenvalue below eig_floor");
    s += 1.0 / lam;
  }
  return s;
}

} // namespace

void exp_martingale_update(FunctionalState& state, const SimplexPoint& lambda_prev,
                           const SimplexPoint& lambda_next, double dt) {
  const FlagDims dims = state.dims;
  if (lambda_prev.dims.m != dims.m || lambda_next.dims.m != dims.m ||
      lambda_prev.dims.k != dims.k || lambda_next.dims.k != dims.k)
    throw ChartMismatch("exp_martingale_update: dimension mismatch");
  if (dt == 0.0) return;
  if (!(dt > 0.0)) throw InvalidStep("exp_martingale_update: dt must be nonnegative");

  const int m = dims.m;
  const int n = dims.n();
  const int kb = dims.blocks();
  const auto& u = state.u;

  double abs_u = 0.0;
  for (double uj : u) abs_u += std::abs(uj);
  double cross = 0.0;
  for (int j = 0; j < kb; ++j)
    for (int l = 0; l < kb; ++l)
      if (j != l) cross += std::abs(u[j] * u[l]);

  double log_factor = m * (n - m) * abs_u * dt + 0.5 * m * cross * dt;
  const double min_log_det = m * std::log(kEigFloor);
  for (int j = 0; j < kb; ++j) {
    if (u[j] == 0.0) continue;
    const double ld_prev = log_det_hermitian(lambda_prev.lambda[j]);
    const double ld_next = log_det_hermitian(lambda_next.lambda[j]);
    if (ld_prev < min_log_det || ld_next < min_log_det)
      throw SingularBlock("exp_martingale_update: det Lambda_j below eig_floor^m");
    const CMat mid = 0.5 * (lambda_prev.lambda[j] + lambda_next.lambda[j]);
    const double tr_inv = trace_inverse(mid, kEigFloor);
    log_factor += 0.5 * std::abs(u[j]) * (ld_next - ld_prev);
    log_factor -= 0.5 * u[j] * u[j] * (tr_inv - m) * dt;
  }
  state.log_d += log_factor;
}

CMat chart_section(const FlagPoint& w, const SimplexPoint& lambda, int j) {
  const int n = w.dims.n();
  const int m = w.dims.m;
  CMat c(n, m);
  c.set_block(0, 0, w.w[j]);
  c.set_block(n - m, 0, CMat::identity(m));
  return c * herm_power(lambda.lambda[j], 0.5);
}

HorizontalLiftState::HorizontalLiftState(const FlagPoint& w0, const SimplexPoint& lambda0)
    : dims(w0.dims), x(dims.n(), dims.n()) {
  for (int j = 0; j < dims.blocks(); ++j) {
    theta.push_back(CMat::identity(dims.m));
    phase.push_back(0.0);
    x.set_block(0, j * dims.m, chart_section(w0, lambda0, j));
  }
}

double HorizontalLiftState::max_det_residual() const {
  double worst = 0.0;
  for (const auto& t : theta) {
    const DetArg d = det_arg(t);
    const cdouble det = std::exp(cdouble(d.log_modulus, d.principal_arg));
    worst = std::max(worst, std::abs(det - cdouble(1.0)));
  }
  return worst;
}

void horizontal_lift_step(HorizontalLiftState& lift, const FlagPoint& w_prev,
                          const FlagPoint& w_next, const SimplexPoint& lambda_prev,
                          const SimplexPoint& lambda_next, const std::vector<double>& da) {
  const FlagDims dims = lift.dims;
  const int m = dims.m;
  if (int(da.size()) != dims.blocks())
    throw DimensionMismatch("horizontal_lift_step: da size mismatch");

  FlagPoint w_mid{dims, {}};
  SimplexPoint lam_mid{dims, {}};
  for (int j = 0; j < dims.blocks(); ++j) {
    w_mid.w.push_back(0.5 * (w_prev.w[j] + w_next.w[j]));
    lam_mid.lambda.push_back(hermitian_part(0.5 * (lambda_prev.lambda[j] + lambda_next.lambda[j])));
  }

  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat s_mid = chart_section(w_mid, lam_mid, j);
    const CMat ds = chart_section(w_next, lambda_next, j) - chart_section(w_prev, lambda_prev, j);
    CMat incr = cdouble(-1.0) * (s_mid.adjoint() * ds);
    const cdouble phase_term(0.0, da[j] / m);
    for (int d = 0; d < m; ++d) incr(d, d) += phase_term;
    incr = skew_part(incr);
    if (incr.frob_norm() >= 0.1)
      throw StepTooLarge("horizontal_lift_step: connection increment too large");
    CMat th = expm(incr) * lift.theta[j];
    // Renormalize to det = 1 by the principal m-th root.
    const DetArg d = det_arg(th);
    const cdouble root = std::exp(cdouble(d.log_modulus / m, d.principal_arg / m));
    th *= cdouble(1.0) / root;
    lift.theta[j] = th;
    lift.phase[j] -= da[j] / m;
  }

  ++lift.steps;
  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat col = chart_section(w_next, lambda_next, j) * lift.theta[j];
    const cdouble ph = std::exp(cdouble(0.0, lift.phase[j]));
    lift.x.set_block(0, j * dims.m, ph * col);
  }
  if (lift.proj_interval > 0 && lift.steps % lift.proj_interval == 0)
    lift.x = unitary_project(lift.x);
}

} // namespace flagflow
