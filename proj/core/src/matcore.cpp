#include "flagflow/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flagflow {

CMat CMat::identity(int n) {
  CMat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMat CMat::adjoint() const {
  CMat r(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(j, i) = std::conj((*this)(i, j));
  return r;
}

CMat CMat::transpose() const {
  CMat r(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
  return r;
}

CMat CMat::conjugate() const {
  CMat r(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r(i, j) = std::conj((*this)(i, j));
  return r;
}

CMat CMat::block(int i0, int j0, int r, int c) const {
  CMat b(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) b(i, j) = (*this)(i0 + i, j0 + j);
  return b;
}

void CMat::set_block(int i0, int j0, const CMat& b) {
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) (*this)(i0 + i, j0 + j) = b(i, j);
}

cdouble CMat::trace() const {
  cdouble t = 0.0;
  for (int i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
  return t;
}

double CMat::frob_norm() const {
  double s = 0.0;
  for (const auto& v : a_) s += std::norm(v);
  return std::sqrt(s);
}

double CMat::max_abs() const {
  double s = 0.0;
  for (const auto& v : a_) s = std::max(s, std::abs(v));
  return s;
}

bool CMat::all_finite() const {
  for (const auto& v : a_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

CMat& CMat::operator+=(const CMat& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionMismatch("CMat += size mismatch");
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
  return *this;
}

CMat& CMat::operator-=(const CMat& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionMismatch("CMat -= size mismatch");
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
  return *this;
}

CMat& CMat::operator*=(cdouble s) {
  for (auto& v : a_) v *= s;
  return *this;
}

CMat operator*(const CMat& a, const CMat& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("CMat * inner dimension mismatch");
  CMat r(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const cdouble aik = a(i, k);
      if (aik == cdouble(0.0)) continue;
      for (int j = 0; j < b.cols(); ++j) r(i, j) += aik * b(k, j);
    }
  }
  return r;
}

UnitaryMatrix::UnitaryMatrix(CMat m) : m_(std::move(m)) {
  if (!m_.square()) throw DimensionMismatch("UnitaryMatrix must be square");
  if (unitarity_residual(m_) > kUnitaryTol)
    throw InvalidStep("UnitaryMatrix: ||U*U - I||_F exceeds 1e-10");
}

UnitaryMatrix UnitaryMatrix::unchecked(CMat m) {
  return UnitaryMatrix(std::move(m), NoCheck{});
}

double UnitaryMatrix::residual() const { return unitarity_residual(m_); }

CMat hermitian_part(const CMat& m) {
  CMat r(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) r(i, j) = 0.5 * (m(i, j) + std::conj(m(j, i)));
  return r;
}

CMat skew_part(const CMat& m) {
  CMat r(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) r(i, j) = 0.5 * (m(i, j) - std::conj(m(j, i)));
  return r;
}

double hermiticity_residual(const CMat& m) {
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) s = std::max(s, std::abs(m(i, j) - std::conj(m(j, i))));
  return s;
}

double skew_hermiticity_residual(const CMat& m) {
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) s = std::max(s, std::abs(m(i, j) + std::conj(m(j, i))));
  return s;
}

double unitarity_residual(const CMat& m) {
  return (m.adjoint() * m - CMat::identity(m.cols())).frob_norm();
}

bool is_hermitian(const CMat& m, double rel_tol) {
  if (!m.square()) return false;
  return hermiticity_residual(m) <= rel_tol * (1.0 + m.max_abs());
}

namespace {

double off_diag_frob(const CMat& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) s += std::norm(a(i, j));
  return std::sqrt(s);
}

} // namespace

EigH eigh(const CMat& h) {
  if (!h.square()) throw DimensionMismatch("eigh needs a square matrix");
  if (!is_hermitian(h)) throw NotHermitian("eigh: input fails the Hermitian invariant");

  const int n = h.rows();
  CMat a = hermitian_part(h);
  CMat v = CMat::identity(n);

  const double scale = std::max(a.frob_norm(), 1e-300);
  const double tol = 1e-13 * scale;
  const int max_sweeps = 64;

  for (int sweep = 0; sweep < max_sweeps && off_diag_frob(a) > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const cdouble apq = a(p, q);
        const double beta = std::abs(apq);
        if (beta <= 1e-300) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        const double alpha = a(p, p).real();
        const double gamma = a(q, q).real();
        const cdouble phase = apq / beta;

        const double tau = (gamma - alpha) / (2.0 * beta);
        const double hyp = std::sqrt(tau * tau + 1.0);
        const double t = (tau >= 0.0) ? -1.0 / (tau + hyp) : 1.0 / (-tau + hyp);
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        // Plane rotation U: U(p,p)=c, U(p,q)=-s e^{i phi}, U(q,p)=s e^{-i phi}, U(q,q)=c.
        const cdouble upq = -s * phase;
        const cdouble uqp = s * std::conj(phase);

        for (int r = 0; r < n; ++r) {  // A <- A U, V <- V U
          const cdouble arp = a(r, p), arq = a(r, q);
          a(r, p) = arp * c + arq * uqp;
          a(r, q) = arp * upq + arq * c;
          const cdouble vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp * c + vrq * uqp;
          v(r, q) = vrp * upq + vrq * c;
        }
        for (int cc = 0; cc < n; ++cc) {  // A <- U* A
          const cdouble apc = a(p, cc), aqc = a(q, cc);
          a(p, cc) = c * apc + std::conj(uqp) * aqc;
          a(q, cc) = std::conj(upq) * apc + c * aqc;
        }

        a(p, p) = c * c * alpha + 2.0 * c * s * beta + s * s * gamma;
        a(q, q) = s * s * alpha - 2.0 * c * s * beta + c * c * gamma;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  if (off_diag_frob(a) > tol * 10.0)
    throw NoConvergence("eigh: Jacobi sweeps did not converge");

  EigH out;
  out.eigenvalues.resize(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return a(x, x).real() < a(y, y).real(); });
  out.vectors = CMat(n, n);
  for (int j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]).real();
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

CMat herm_power(const CMat& h, double p, double eig_floor) {
  if (!h.square()) throw DimensionMismatch("herm_power needs a square matrix");
  if (!is_hermitian(h)) throw NotHermitian("herm_power: input fails the Hermitian invariant");
  EigH e = eigh(h);
  const int n = h.rows();
  if (p < 0.0) {
    for (double lam : e.eigenvalues)
      if (lam < eig_floor)
        throw SingularMatrix("herm_power: eigenvalue below eig_floor for negative power");
  }
  CMat d(n, n);
  for (int i = 0; i < n; ++i) {
    const double lam = e.eigenvalues[i];
    d(i, i) = (lam <= 0.0 && p > 0.0) ? 0.0 : std::pow(lam, p);
  }
  return hermitian_part(e.vectors * d * e.vectors.adjoint());
}

DetArg det_arg(const CMat& m) {
  if (!m.square()) throw DimensionMismatch("det_arg needs a square matrix");
  const int n = m.rows();
  CMat a = m;
  double log_mod = 0.0;
  double arg = 0.0;
  int swaps = 0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::abs(a(i, k));
      if (v > best) { best = v; piv = i; }
    }
    if (best < 1e-300) throw SingularMatrix("det_arg: pivot modulus underflow");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      ++swaps;
    }
    const cdouble pivot = a(k, k);
    log_mod += std::log(std::abs(pivot));
    arg += std::arg(pivot);
    for (int i = k + 1; i < n; ++i) {
      const cdouble f = a(i, k) / pivot;
      if (f == cdouble(0.0)) continue;
      for (int j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  arg += std::numbers::pi * (swaps % 2);
  arg = std::remainder(arg, 2.0 * std::numbers::pi);  // (-pi, pi], ties to +pi
  if (arg <= -std::numbers::pi) arg = std::numbers::pi;
  return {log_mod, arg};
}

CMat unitary_project(const CMat& m) {
  if (!m.square()) throw DimensionMismatch("unitary_project needs a square matrix");
  const CMat gram = hermitian_part(m.adjoint() * m);
  return m * herm_power(gram, -0.5);
}

CMat eig_clip(const CMat& h, double lo, double hi) {
  if (lo > hi) throw InvalidStep("eig_clip: lo > hi");
  if (!h.square()) throw DimensionMismatch("eig_clip needs a square matrix");
  EigH e = eigh(h);
  bool inside = true;
  for (double lam : e.eigenvalues)
    if (lam < lo || lam > hi) { inside = false; break; }
  if (inside) return h;
  const int n = h.rows();
  CMat d(n, n);
  for (int i = 0; i < n; ++i) d(i, i) = std::clamp(e.eigenvalues[i], lo, hi);
  return hermitian_part(e.vectors * d * e.vectors.adjoint());
}

namespace {

// Forward/back substitution on an LU factorization computed in place.
struct Lu {
  CMat lu;
  std::vector<int> perm;
};

Lu lu_factor(const CMat& a) {
  const int n = a.rows();
  Lu f{a, {}};
  f.perm.resize(n);
  for (int i = 0; i < n; ++i) f.perm[i] = i;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(f.lu(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::abs(f.lu(i, k));
      if (v > best) { best = v; piv = i; }
    }
    if (best < 1e-300) throw SingularMatrix("lu_factor: pivot modulus underflow");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
    }
    const cdouble pivot = f.lu(k, k);
    for (int i = k + 1; i < n; ++i) {
      const cdouble m = f.lu(i, k) / pivot;
      f.lu(i, k) = m;
      if (m == cdouble(0.0)) continue;
      for (int j = k + 1; j < n; ++j) f.lu(i, j) -= m * f.lu(k, j);
    }
  }
  return f;
}

} // namespace

CMat lu_solve(const CMat& a, const CMat& b) {
  if (!a.square() || a.rows() != b.rows())
    throw DimensionMismatch("lu_solve: shape mismatch");
  const int n = a.rows();
  const Lu f = lu_factor(a);
  CMat x(n, b.cols());
  for (int c = 0; c < b.cols(); ++c) {
    std::vector<cdouble> y(n);
    for (int i = 0; i < n; ++i) {
      cdouble s = b(f.perm[i], c);
      for (int j = 0; j < i; ++j) s -= f.lu(i, j) * y[j];
      y[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      cdouble s = y[i];
      for (int j = i + 1; j < n; ++j) s -= f.lu(i, j) * x(j, c);
      x(i, c) = s / f.lu(i, i);
    }
  }
  return x;
}

CMat expm(const CMat& a) {
  if (!a.square()) throw DimensionMismatch("expm needs a square matrix");
  const int n = a.rows();
  static const double b[] = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};
  const double theta13 = 5.371920351148152;

  const double nrm = a.frob_norm();
  int s = 0;
  if (nrm > theta13) s = int(std::ceil(std::log2(nrm / theta13)));
  CMat as = a;
  if (s > 0) as *= cdouble(std::ldexp(1.0, -s));

  const CMat eye = CMat::identity(n);
  const CMat a2 = as * as;
  const CMat a4 = a2 * a2;
  const CMat a6 = a4 * a2;

  CMat u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
  u += b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye;
  u = as * u;
  CMat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
  v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye;

  CMat r = lu_solve(v - u, v + u);
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

} // namespace flagflow
