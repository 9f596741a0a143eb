#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "flagflow/errors.hpp"

namespace flagflow {

using cdouble = std::complex<double>;

inline constexpr double kEigFloor = 1e-12;

/// Dense row-major complex matrix. Sized for the small blocks this library
/// works with (n <= 64); no view machinery, everything by value.
class CMat {
 public:
  CMat() = default;
  CMat(int rows, int cols) : rows_(rows), cols_(cols), a_(std::size_t(rows) * cols) {}

  static CMat zero(int rows, int cols) { return CMat(rows, cols); }
  static CMat identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  cdouble& operator()(int i, int j) { return a_[std::size_t(i) * cols_ + j]; }
  const cdouble& operator()(int i, int j) const { return a_[std::size_t(i) * cols_ + j]; }

  CMat adjoint() const;
  CMat transpose() const;
  CMat conjugate() const;

  CMat block(int i0, int j0, int r, int c) const;
  void set_block(int i0, int j0, const CMat& b);

  cdouble trace() const;
  double frob_norm() const;
  double max_abs() const;
  bool all_finite() const;

  CMat& operator+=(const CMat& o);
  CMat& operator-=(const CMat& o);
  CMat& operator*=(cdouble s);

  friend CMat operator+(CMat a, const CMat& b) { a += b; return a; }
  friend CMat operator-(CMat a, const CMat& b) { a -= b; return a; }
  friend CMat operator*(cdouble s, CMat a) { a *= s; return a; }
  friend CMat operator*(CMat a, cdouble s) { a *= s; return a; }
  friend CMat operator*(const CMat& a, const CMat& b);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<cdouble> a_;
};

inline constexpr double kUnitaryTol = 1e-10;

/// An n x n complex matrix constrained to the unitary group. The checked
/// constructor enforces ||U*U - I||_F <= 1e-10; `unchecked` is for integrator
/// steps that preserve the invariant by construction.
class UnitaryMatrix {
 public:
  explicit UnitaryMatrix(CMat m);
  static UnitaryMatrix unchecked(CMat m);

  const CMat& mat() const { return m_; }
  int dim() const { return m_.rows(); }
  double residual() const;  // ||U*U - I||_F

 private:
  struct NoCheck {};
  UnitaryMatrix(CMat m, NoCheck) : m_(std::move(m)) {}
  CMat m_;
};

// Symmetry helpers.
CMat hermitian_part(const CMat& m);   // (M + M*)/2
CMat skew_part(const CMat& m);        // (M - M*)/2
double hermiticity_residual(const CMat& m);       // ||M - M*||_max
double skew_hermiticity_residual(const CMat& m);  // ||M + M*||_max
double unitarity_residual(const CMat& m);         // ||M*M - I||_F
bool is_hermitian(const CMat& m, double rel_tol = 1e-12);

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending, `vectors` has eigenvectors in columns.
struct EigH {
  std::vector<double> eigenvalues;
  CMat vectors;
};
EigH eigh(const CMat& h);

/// V diag(lambda_i^p) V* through the spectral decomposition. For p < 0 every
/// eigenvalue must clear `eig_floor`.
CMat herm_power(const CMat& h, double p, double eig_floor = kEigFloor);

/// log|det M| and the principal argument of det M in (-pi, pi], accumulated
/// factor-by-factor from a partially pivoted LU so the modulus never
/// overflows. Ties at -pi are reported as +pi.
struct DetArg {
  double log_modulus;
  double principal_arg;
};
DetArg det_arg(const CMat& m);

/// Unitary polar factor M (M*M)^{-1/2}.
CMat unitary_project(const CMat& m);

/// Clamp the spectrum into [lo, hi], keeping eigenvectors.
CMat eig_clip(const CMat& h, double lo, double hi);

/// Matrix exponential, scaling-and-squaring with Pade(13).
CMat expm(const CMat& a);

/// Solve A X = B by partially pivoted LU.
CMat lu_solve(const CMat& a, const CMat& b);

} // namespace flagflow
