#include "flagflow/flag.hpp"

#include <cmath>
#include <limits>

namespace flagflow {

double FlagPoint::chart_residual() const {
  const int kb = dims.blocks();
  const CMat eye = CMat::identity(dims.m);
  double worst = 0.0;
  for (int j = 0; j < kb; ++j)
    for (int l = 0; l < kb; ++l) {
      if (j == l) continue;
      worst = std::max(worst, (w[j].adjoint() * w[l] + eye).frob_norm());
    }
  return worst;
}

double SimplexPoint::sum_residual() const {
  CMat s(dims.m, dims.m);
  for (const auto& b : lambda) s += b;
  return (s - CMat::identity(dims.m)).frob_norm();
}

double SimplexPoint::min_eigenvalue() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& b : lambda) {
    const EigH e = eigh(b);
    lo = std::min(lo, e.eigenvalues.front());
  }
  return lo;
}

double SimplexPoint::max_eigenvalue() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& b : lambda) {
    const EigH e = eigh(b);
    hi = std::max(hi, e.eigenvalues.back());
  }
  return hi;
}

bool SimplexPoint::satisfies_invariants() const {
  return min_eigenvalue() >= -1e-10 && max_eigenvalue() <= 1.0 + 1e-10 &&
         sum_residual() <= 1e-8;
}

SimplexPoint barycenter_simplex(FlagDims dims) {
  SimplexPoint s{dims, {}};
  const double w = 1.0 / dims.blocks();
  for (int j = 0; j < dims.blocks(); ++j)
    s.lambda.push_back(w * CMat::identity(dims.m));
  return s;
}

FlagPoint project_affine(const UnitaryMatrix& u, FlagDims dims, double chart_guard) {
  const int n = dims.n();
  if (u.dim() != n) throw DimensionMismatch("project_affine: dims do not match U");
  const int m = dims.m;
  const int top = n - m;
  FlagPoint out{dims, {}};
  out.w.reserve(dims.blocks());
  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat zj = u.mat().block(top, j * m, m, m);
    try {
      const DetArg d = det_arg(zj);
      if (std::exp(d.log_modulus) < chart_guard)
        throw OutsideChart("project_affine: |det Z_j| below chart guard");
    } catch (const SingularMatrix&) {
      throw OutsideChart("project_affine: bottom block singular");
    }
    const CMat wj = u.mat().block(0, j * m, top, m);
    // w_j = W_j Z_j^{-1} = (Z_j^T \ W_j^T)^T
    out.w.push_back(lu_solve(zj.transpose(), wj.transpose()).transpose());
  }
  return out;
}

SimplexPoint radial_from_unitary(const UnitaryMatrix& u, FlagDims dims) {
  const int n = dims.n();
  if (u.dim() != n) throw DimensionMismatch("radial_from_unitary: dims do not match U");
  const int m = dims.m;
  SimplexPoint out{dims, {}};
  out.lambda.reserve(dims.blocks());
  for (int j = 0; j < dims.blocks(); ++j) {
    const CMat zj = u.mat().block(n - m, j * m, m, m);
    out.lambda.push_back(hermitian_part(zj * zj.adjoint()));
  }
  return out;
}

SimplexPoint radial_from_chart(const FlagPoint& w) {
  const int m = w.dims.m;
  SimplexPoint out{w.dims, {}};
  out.lambda.reserve(w.dims.blocks());
  const CMat eye = CMat::identity(m);
  for (const auto& wj : w.w) {
    const CMat gram = hermitian_part(eye + wj.adjoint() * wj);
    out.lambda.push_back(herm_power(gram, -1.0));
  }
  return out;
}

FlagQvTables::FlagQvTables(FlagDims dims, std::vector<CMat> p, std::vector<CMat> q,
                           std::vector<CMat> w)
    : dims_(dims), p_(std::move(p)), q_(std::move(q)), w_(std::move(w)) {}

cdouble FlagQvTables::mixed(int j, int p, int q, int r, int s) const {
  return 2.0 * p_[j](p, r) * q_[j](s, q);
}

cdouble FlagQvTables::holo(int j, int l, int p, int q, int r, int s) const {
  if (j == l) return 0.0;
  return -2.0 * (w_[l](p, s) - w_[j](p, s)) * (w_[j](r, q) - w_[l](r, q));
}

FlagQvTables flag_qv_predict(const FlagPoint& w) {
  const int top = w.dims.n() - w.dims.m;
  std::vector<CMat> p, q;
  for (const auto& wj : w.w) {
    p.push_back(hermitian_part(CMat::identity(top) + wj * wj.adjoint()));
    q.push_back(hermitian_part(CMat::identity(w.dims.m) + wj.adjoint() * wj));
  }
  return FlagQvTables(w.dims, std::move(p), std::move(q), w.w);
}

namespace {

// Real coordinate index bookkeeping for the chart blocks: coordinate
// 2*(entry index) is the real part, +1 the imaginary part.
struct ChartCoords {
  FlagDims dims;
  int top;
  int per_block;  // complex entries per block

  int n_complex() const { return dims.blocks() * per_block; }
  int n_real() const { return 2 * n_complex(); }

  void locate(int c, int& j, int& p, int& q) const {
    j = c / per_block;
    const int e = c % per_block;
    p = e / dims.m;
    q = e % dims.m;
  }
};

FlagPoint perturb(const FlagPoint& w0, const ChartCoords& cc,
                  const std::vector<double>& dx) {
  FlagPoint w = w0;
  for (int c = 0; c < cc.n_complex(); ++c) {
    const double re = dx[2 * c], im = dx[2 * c + 1];
    if (re == 0.0 && im == 0.0) continue;
    int j, p, q;
    cc.locate(c, j, p, q);
    w.w[j](p, q) += cdouble(re, im);
  }
  return w;
}

} // namespace

double flag_generator_apply(const std::function<double(const FlagPoint&)>& f,
                            const FlagPoint& w, double h) {
  if (!(h >= 1e-5 && h <= 1e-2))
    throw DegenerateStep("flag_generator_apply: h outside [1e-5, 1e-2]");
  const ChartCoords cc{w.dims, w.dims.n() - w.dims.m,
                       (w.dims.n() - w.dims.m) * w.dims.m};
  const int nr = cc.n_real();

  std::vector<double> dx(nr, 0.0);
  auto eval = [&](int a, double ha, int b, double hb) {
    dx[a] += ha;
    if (b >= 0) dx[b] += hb;
    const double v = f(perturb(w, cc, dx));
    dx[a] = 0.0;
    if (b >= 0) dx[b] = 0.0;
    return v;
  };

  const double f0 = f(w);
  // Real Hessian by central differences.
  std::vector<double> hess(std::size_t(nr) * nr, 0.0);
  for (int a = 0; a < nr; ++a) {
    hess[std::size_t(a) * nr + a] = (eval(a, h, -1, 0) - 2.0 * f0 + eval(a, -h, -1, 0)) / (h * h);
    for (int b = a + 1; b < nr; ++b) {
      const double v = (eval(a, h, b, h) - eval(a, h, b, -h) - eval(a, -h, b, h) +
                        eval(a, -h, b, -h)) /
                       (4.0 * h * h);
      hess[std::size_t(a) * nr + b] = v;
      hess[std::size_t(b) * nr + a] = v;
    }
  }
  auto hxx = [&](int a, int b) { return hess[std::size_t(a) * nr + b]; };

  // Wirtinger second derivatives between complex coordinates a=(x,y), b=(x',y'):
  //   d2f/dz dz'    = 1/4 (f_xx' - f_yy' - i f_xy' - i f_yx')
  //   d2f/dz dzbar' = 1/4 (f_xx' + f_yy' + i f_xy' - i f_yx')
  auto wirt_holo = [&](int ca, int cb) {
    const int x = 2 * ca, y = 2 * ca + 1, xp = 2 * cb, yp = 2 * cb + 1;
    return 0.25 * cdouble(hxx(x, xp) - hxx(y, yp), -hxx(x, yp) - hxx(y, xp));
  };
  auto wirt_mixed = [&](int ca, int cb) {
    const int x = 2 * ca, y = 2 * ca + 1, xp = 2 * cb, yp = 2 * cb + 1;
    return 0.25 * cdouble(hxx(x, xp) + hxx(y, yp), hxx(x, yp) - hxx(y, xp));
  };

  const FlagQvTables tables = flag_qv_predict(w);
  cdouble acc = 0.0;
  for (int ca = 0; ca < cc.n_complex(); ++ca) {
    int j, p, q;
    cc.locate(ca, j, p, q);
    for (int cb = 0; cb < cc.n_complex(); ++cb) {
      int l, r, s;
      cc.locate(cb, l, r, s);
      if (j == l) {
        acc += tables.mixed(j, p, q, r, s) * wirt_mixed(ca, cb);
      } else {
        acc += 0.5 * tables.holo(j, l, p, q, r, s) * wirt_holo(ca, cb);
        acc += 0.5 * std::conj(tables.holo(j, l, p, q, r, s)) * std::conj(wirt_holo(ca, cb));
      }
    }
  }
  return acc.real();
}

} // namespace flagflow
