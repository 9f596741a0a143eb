#pragma once

#include <functional>
#include <vector>

#include "flagflow/matcore.hpp"

namespace flagflow {

inline constexpr double kChartTol = 1e-8;
inline constexpr double kChartGuard = 1e-8;

/// Block geometry of the flag manifold: k+1 column blocks of size m,
/// ambient dimension n = (k+1) m.
struct FlagDims {
  int m = 1;
  int k = 1;

  FlagDims() = default;
  FlagDims(int m_, int k_) : m(m_), k(k_) {
    if (m < 1 || k < 1) throw InvalidDimension("FlagDims: need m >= 1 and k >= 1");
  }
  int n() const { return (k + 1) * m; }
  int blocks() const { return k + 1; }
};

/// Affine chart point: k+1 blocks w_j of shape (n-m) x m. Chart points
/// satisfy w_j^* w_l = -I_m for j != l; finite-difference probes are allowed
/// to sit slightly off that constraint, so the residual is queryable rather
/// than enforced on construction.
struct FlagPoint {
  FlagDims dims;
  std::vector<CMat> w;

  double chart_residual() const;
};

/// Radial point: k+1 Hermitian PSD m x m blocks summing to I_m.
struct SimplexPoint {
  FlagDims dims;
  std::vector<CMat> lambda;

  double sum_residual() const;          // ||sum Lambda_j - I||_F
  double min_eigenvalue() const;        // over all blocks
  double max_eigenvalue() const;
  bool satisfies_invariants() const;
};

SimplexPoint barycenter_simplex(FlagDims dims);

/// w_j = (stack of the upper k row blocks of column j) * U_{(k+1)j}^{-1}.
/// Throws OutsideChart when any bottom block has |det| below chart_guard.
FlagPoint project_affine(const UnitaryMatrix& u, FlagDims dims,
                         double chart_guard = kChartGuard);

/// Lambda_j = Z_j Z_j^* with Z_j the bottom row block of column j.
SimplexPoint radial_from_unitary(const UnitaryMatrix& u, FlagDims dims);

/// Lambda_j = (I_m + w_j^* w_j)^{-1}.
SimplexPoint radial_from_chart(const FlagPoint& w);

/// Predicted per-unit-time covariations of the chart-coordinate Brownian
/// motion at a chart point (half the Laplace-Beltrami coefficients once the
/// operator's ordered double counting is folded in):
///   mixed(j; p,q,r,s) = E[dw_{j,pq} d conj(w_{j,rs})]/dt
///                     = 2 (I + w_j w_j^*)_{pr} (I + w_j^* w_j)_{sq}
///   holo(j,l; p,q,r,s) = E[dw_{j,pq} dw_{l,rs}]/dt
///                      = -2 (w_l - w_j)_{ps} (w_j - w_l)_{rq}   (j != l)
/// Same-column holomorphic covariations vanish; anti-holomorphic tables are
/// the complex conjugates of holo.
class FlagQvTables {
 public:
  FlagQvTables(FlagDims dims, std::vector<CMat> p, std::vector<CMat> q,
               std::vector<CMat> w);

  cdouble mixed(int j, int p, int q, int r, int s) const;
  cdouble holo(int j, int l, int p, int q, int r, int s) const;

  FlagDims dims() const { return dims_; }

 private:
  FlagDims dims_;
  std::vector<CMat> p_;  // I + w_j w_j^*
  std::vector<CMat> q_;  // I + w_j^* w_j
  std::vector<CMat> w_;
};

FlagQvTables flag_qv_predict(const FlagPoint& w);

/// Half the Laplace-Beltrami operator applied to f at w: central finite
/// differences in all real chart coordinates assembled into Wirtinger second
/// derivatives and contracted with flag_qv_predict. f must be evaluable in an
/// h-ball around w (probes leave the chart constraint set). O(h^2) accurate.
double flag_generator_apply(const std::function<double(const FlagPoint&)>& f,
                            const FlagPoint& w, double h);

} // namespace flagflow
