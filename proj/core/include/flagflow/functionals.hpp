#pragma once

#include <vector>

#include "flagflow/flag.hpp"

namespace flagflow {

/// Accumulated path functionals, single-path-local: stochastic areas a,
/// unwrapped winding angles theta (with the last principal argument kept for
/// unwrapping), and the exponential martingale D (stored as log D, with
/// frequency vector u).
struct FunctionalState {
  explicit FunctionalState(FlagDims dims_, std::vector<double> u_ = {});

  FlagDims dims;
  std::vector<double> a;
  std::vector<double> theta;
  std::vector<double> last_arg;
  std::vector<double> u;
  double log_d = 0.0;
  bool has_args = false;

  double martingale() const;  // D > 0
};

/// Stratonovich midpoint rule for the area increments
///   da_j = (i/2) Tr(Lambda_j (dw_j^* w_j - w_j^* dw_j)).
/// lambda_mid must be evaluated at the midpoint chart value
/// (w_prev + w_next)/2. The trace argument is skew-Hermitian so each
/// increment is real; the imaginary residual is asserted below 1e-12 and
/// discarded.
std::vector<double> area_increment(const FlagPoint& w_prev, const FlagPoint& w_next,
                                   const SimplexPoint& lambda_mid);

/// Bottom row blocks Z_j = U_{(k+1)j}; the stacked row block lies on the
/// Stiefel manifold: sum_j Z_j Z_j^* = I_m.
std::vector<CMat> stiefel_blocks(const UnitaryMatrix& u, FlagDims dims);

/// Unwraps arg det Z_j against the previous principal argument (adding the
/// 2 pi multiple minimizing |delta|) and accumulates into theta. The first
/// call seeds last_arg without moving theta. Enforces |delta| < pi/2.
void winding_update(FunctionalState& state, const std::vector<CMat>& z,
                    double chart_guard = kChartGuard);

/// Connection increment of the canonical torus bundle in midpoint form:
///   eta_j = Im Tr(Mbar_{.j}^* dM_{.j}),  Mbar = unitary_project((M_prev+M_next)/2),
/// normalized so a vertical move M exp(i eps E_jj / m) yields +eps in slot j.
/// Vanishes along flag-horizontal paths and recovers the fiber Brownian
/// motion along Brownian paths of the bundle.
std::vector<double> connection_form_increment(const UnitaryMatrix& m_prev,
                                              const UnitaryMatrix& m_next, FlagDims dims);

/// Multiplies D by the one-step factor of the exponential martingale
///   D_t = exp(m(n-m)|u| t + (m/2) sum_{j != l} |u_j u_l| t)
///         prod_j (det Lambda_j(t)/det Lambda_j(0))^{|u_j|/2}
///               exp(-(u_j^2/2) int (Tr Lambda_j^{-1} - m) ds),
/// with the time integral taken at the midpoint. E[D_t] = 1.
void exp_martingale_update(FunctionalState& state, const SimplexPoint& lambda_prev,
                           const SimplexPoint& lambda_next, double dt);

/// Horizontal lift of a chart path through the unitary group: per column,
/// X_{.j} = e^{i phase_j} S_j(w) Theta_j with S_j(w) = (w_j; I_m) Lambda_j^{1/2},
/// phase_j = -a_j / m and Theta_j in SU(m) driven by
///   dTheta_j = ( -S_j^* o dS_j + (i/m) o da_j I ) Theta_j.
struct HorizontalLiftState {
  explicit HorizontalLiftState(const FlagPoint& w0, const SimplexPoint& lambda0);

  FlagDims dims;
  std::vector<CMat> theta;     // SU(m) blocks
  std::vector<double> phase;   // -a_j / m, accumulated
  CMat x;                      // reconstructed horizontal path
  long steps = 0;
  int proj_interval = 64;

  double max_det_residual() const;  // max_j |det Theta_j - 1|
};

/// One midpoint step of the lift. da is the area increment of the same step.
/// Throws StepTooLarge when the connection increment norm reaches 0.1.
void horizontal_lift_step(HorizontalLiftState& lift, const FlagPoint& w_prev,
                          const FlagPoint& w_next, const SimplexPoint& lambda_prev,
                          const SimplexPoint& lambda_next, const std::vector<double>& da);

/// The n x m column section S_j(w) = (w_j stacked on I_m) Lambda_j^{1/2}.
CMat chart_section(const FlagPoint& w, const SimplexPoint& lambda, int j);

} // namespace flagflow
