#pragma once

#include <functional>
#include <vector>

#include "flagflow/flag.hpp"
#include "flagflow/liebm.hpp"

namespace flagflow {

/// Index of a Jacobi process on the simplex of Hermitian matrices.
/// kappa has k+1 entries, each > m/2 - 1. kappa = (m/2, ..., m/2) is the
/// radial process of the chart Brownian motion.
struct JacobiIndex {
  std::vector<double> kappa;
  int m = 1;

  JacobiIndex(std::vector<double> kappa_, int m_);

  int blocks() const { return int(kappa.size()); }
  int n() const { return blocks() * m; }
  double total() const;  // |kappa|
  static JacobiIndex radial(FlagDims dims);  // (m/2, ..., m/2)
};

struct JacobiState {
  SimplexPoint point;
  double time = 0.0;
};

/// Symmetrize, clip the spectrum into [0,1], rebalance the block sum onto
/// the identity, clip once more. Gross violations (||sum - I||_F > 0.1) are
/// errors, not repairs.
SimplexPoint repair_simplex(const std::vector<CMat>& raw, FlagDims dims);

/// Euler-Maruyama step of
///   dL_j = L_j^{1/2} sum_{l!=j} dg*_{lj} L_l^{1/2}
///        + sum_{l!=j} L_l^{1/2} dg_{lj} L_j^{1/2}
///        + 2((kappa_j + m/2) I - (|kappa| + n/2) L_j) dt,
/// with dg_{lj} (l<j) independent complex Gaussian m x m blocks normalized
/// like the off-diagonal blocks of a u(n) Brownian increment and
/// dg_{jl} = -dg*_{lj}; followed by repair_simplex. Throws BoundaryContact
/// when the state is not interior (min eigenvalue < 10 * eig_floor).
JacobiState step_jacobi(const JacobiState& state, const JacobiIndex& idx, double dt,
                        RngStream& rng);

/// The SDE-consistent generator applied to f by central finite differences
/// over the independent real parameters of the first k blocks (the last
/// block is I - sum). Richardson-extrapolated, so the truncation error is
/// O(h^4).
double jacobi_generator_apply(const std::function<double(const SimplexPoint&)>& f,
                              const SimplexPoint& lam, const JacobiIndex& idx, double h);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo dual of jacobi_generator_apply:
/// (E[f(L_dt)] - f(L_0))/dt over N one-step simulations.
McEstimate jacobi_mc_generator_oracle(const std::function<double(const SimplexPoint&)>& f,
                                      const SimplexPoint& lam, const JacobiIndex& idx,
                                      double dt, int n_samples, RngStream& rng);

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

/// Stationary Beta parameters of the scalar marginal (m = 1 only):
/// a = kappa_j + 1/2, b = |kappa| + (k+1)/2 - kappa_j - 1/2, solved from the
/// stationarity condition of the marginal generator.
BetaParams stationary_beta_params(const JacobiIndex& idx, int j);

} // namespace flagflow
