#include "flagflow/jacobi.hpp"

#include <cmath>

namespace flagflow {

JacobiIndex::JacobiIndex(std::vector<double> kappa_, int m_)
    : kappa(std::move(kappa_)), m(m_) {
  if (m < 1 || kappa.size() < 2)
    throw InvalidDimension("JacobiIndex: need m >= 1 and at least two blocks");
  for (double kj : kappa)
    if (!(kj > 0.5 * m - 1.0))
      throw ConfigInvalid("JacobiIndex: kappa_j must exceed m/2 - 1");
}

double JacobiIndex::total() const {
  double s = 0.0;
  for (double kj : kappa) s += kj;
  return s;
}

JacobiIndex JacobiIndex::radial(FlagDims dims) {
  return JacobiIndex(std::vector<double>(dims.blocks(), 0.5 * dims.m), dims.m);
}

SimplexPoint repair_simplex(const std::vector<CMat>& raw, FlagDims dims) {
  const int kb = dims.blocks();
  if (int(raw.size()) != kb) throw DimensionMismatch("repair_simplex: block count mismatch");
  const CMat eye = CMat::identity(dims.m);

  CMat sum(dims.m, dims.m);
  for (const auto& b : raw) sum += hermitian_part(b);
  if ((sum - eye).frob_norm() > 0.1)
    throw IrreparableState("repair_simplex: block sum too far from identity");

  SimplexPoint out{dims, {}};
  out.lambda.reserve(kb);
  for (const auto& b : raw) out.lambda.push_back(eig_clip(hermitian_part(b), 0.0, 1.0));

  // Alternate the sum rebalance with the spectral clip; a clip that moved an
  // eigenvalue re-breaks the sum, so iterate to the joint fixed point
  // (alternating projections between two convex sets).
  for (int iter = 0; iter < 200; ++iter) {
    CMat excess(dims.m, dims.m);
    for (const auto& b : out.lambda) excess += b;
    excess -= eye;
    if (excess.frob_norm() <= 1e-10) return out;
    excess *= cdouble(1.0 / kb);
    for (auto& b : out.lambda) b = eig_clip(hermitian_part(b - excess), 0.0, 1.0);
  }
  if (out.sum_residual() > 1e-8)
    throw IrreparableState("repair_simplex: rebalance did not converge");
  return out;
}

JacobiState step_jacobi(const JacobiState& state, const JacobiIndex& idx, double dt,
                        RngStream& rng) {
  const FlagDims dims = state.point.dims;
  const int kb = dims.blocks();
  const int m = dims.m;
  if (idx.m != m || idx.blocks() != kb)
    throw DimensionMismatch("step_jacobi: index does not match state");
  if (!(dt > 0.0)) throw InvalidStep("step_jacobi: dt must be positive");

  // Spectral square roots; the interiority precondition rides along.
  std::vector<CMat> sqrt_blocks(kb);
  for (int j = 0; j < kb; ++j) {
    const EigH e = eigh(state.point.lambda[j]);
    if (e.eigenvalues.front() < 10.0 * kEigFloor)
      throw BoundaryContact("step_jacobi: state not interior");
    CMat d(m, m);
    for (int i = 0; i < m; ++i) d(i, i) = std::sqrt(std::max(e.eigenvalues[i], 0.0));
    sqrt_blocks[j] = hermitian_part(e.vectors * d * e.vectors.adjoint());
  }

  // Fresh noise blocks dg_{lj} for l < j, with dg_{jl} = -dg*_{lj}.
  const double sd = std::sqrt(dt);
  std::vector<std::vector<CMat>> gamma(kb, std::vector<CMat>(kb));
  for (int l = 0; l < kb; ++l)
    for (int j = l + 1; j < kb; ++j) {
      CMat g(m, m);
      for (int p = 0; p < m; ++p)
        for (int q = 0; q < m; ++q) g(p, q) = cdouble(rng.normal() * sd, rng.normal() * sd);
      gamma[l][j] = g;
      gamma[j][l] = cdouble(-1.0) * g.adjoint();
    }

  const double abs_kappa = idx.total();
  const double half_n = 0.5 * idx.n();
  std::vector<CMat> raw(kb);
  for (int j = 0; j < kb; ++j) {
    CMat next = state.point.lambda[j];
    for (int l = 0; l < kb; ++l) {
      if (l == j) continue;
      next += sqrt_blocks[j] * gamma[l][j].adjoint() * sqrt_blocks[l];
      next += sqrt_blocks[l] * gamma[l][j] * sqrt_blocks[j];
    }
    CMat drift = (2.0 * (idx.kappa[j] + 0.5 * m)) * CMat::identity(m);
    drift -= (2.0 * (abs_kappa + half_n)) * state.point.lambda[j];
    next += dt * drift;
    raw[j] = next;
  }
  return JacobiState{repair_simplex(raw, dims), state.time + dt};
}

namespace {

// Independent real parameters of the first k blocks; the last block is
// eliminated as I - sum. Per block: m diagonal entries, then (Re, Im) of
// each strictly upper entry.
struct SimplexCoords {
  FlagDims dims;

  int per_block() const { return dims.m * dims.m; }
  int count() const { return dims.k * per_block(); }

  // Maps coordinate a to (block j, alpha, beta, is_imag); alpha == beta for
  // diagonal coordinates.
  void locate(int a, int& j, int& alpha, int& beta, bool& imag) const {
    j = a / per_block();
    int e = a % per_block();
    const int m = dims.m;
    if (e < m) {
      alpha = beta = e;
      imag = false;
      return;
    }
    e -= m;
    const int pair = e / 2;
    imag = (e % 2) == 1;
    // pair index over alpha < beta in row-major order
    int idx = 0;
    for (int al = 0; al < m; ++al)
      for (int be = al + 1; be < m; ++be, ++idx)
        if (idx == pair) {
          alpha = al;
          beta = be;
          return;
        }
    throw DimensionMismatch("SimplexCoords: bad coordinate");
  }
};

SimplexPoint reconstruct(const SimplexPoint& base, const SimplexCoords& sc,
                         const std::vector<double>& dx) {
  SimplexPoint p = base;
  const int m = sc.dims.m;
  for (int a = 0; a < sc.count(); ++a) {
    if (dx[a] == 0.0) continue;
    int j, al, be;
    bool imag;
    sc.locate(a, j, al, be, imag);
    if (al == be) {
      p.lambda[j](al, al) += dx[a];
    } else if (!imag) {
      p.lambda[j](al, be) += dx[a];
      p.lambda[j](be, al) += dx[a];
    } else {
      p.lambda[j](al, be) += cdouble(0.0, dx[a]);
      p.lambda[j](be, al) += cdouble(0.0, -dx[a]);
    }
  }
  CMat last = CMat::identity(m);
  for (int j = 0; j < sc.dims.k; ++j) last -= p.lambda[j];
  p.lambda[sc.dims.k] = last;
  return p;
}

// Complex covariation tables E[dL_{j,ab} dL_{l,cd}]/dt of the SDE.
cdouble complex_cov(const SimplexPoint& lam, int j, int l, int a, int b, int c, int d) {
  const CMat& Lj = lam.lambda[j];
  const CMat& Ll = lam.lambda[l];
  if (j == l) {
    const cdouble i_ad = (a == d ? 1.0 : 0.0) - Lj(a, d);
    const cdouble i_cb = (c == b ? 1.0 : 0.0) - Lj(c, b);
    return 2.0 * (i_ad * Lj(c, b) + Lj(a, d) * i_cb);
  }
  return -2.0 * (Ll(a, d) * Lj(c, b) + Lj(a, d) * Ll(c, b));
}

double real_cov(const SimplexPoint& lam, const SimplexCoords& sc, int a, int b) {
  int ja, al_a, be_a, jb, al_b, be_b;
  bool im_a, im_b;
  sc.locate(a, ja, al_a, be_a, im_a);
  sc.locate(b, jb, al_b, be_b, im_b);
  // P = dL_{ja,(al_a,be_a)}, Q = dL_{jb,(al_b,be_b)};
  // conj(Q) = dL_{jb,(be_b,al_b)} by Hermitian symmetry.
  const cdouble pq = complex_cov(lam, ja, jb, al_a, be_a, al_b, be_b);
  const cdouble pqbar = complex_cov(lam, ja, jb, al_a, be_a, be_b, al_b);
  if (!im_a && !im_b) return 0.5 * (pq + pqbar).real();
  if (!im_a && im_b) return 0.5 * (pq - pqbar).imag();
  if (im_a && !im_b) return 0.5 * (pq + pqbar).imag();
  return 0.5 * (pqbar - pq).real();
}

double generator_fd_once(const std::function<double(const SimplexPoint&)>& f,
                         const SimplexPoint& lam, const JacobiIndex& idx, double h) {
  const SimplexCoords sc{lam.dims};
  const int nx = sc.count();
  std::vector<double> dx(nx, 0.0);
  auto eval = [&](int a, double ha, int b, double hb) {
    dx[a] += ha;
    if (b >= 0) dx[b] += hb;
    const double v = f(reconstruct(lam, sc, dx));
    dx[a] = 0.0;
    if (b >= 0) dx[b] = 0.0;
    return v;
  };
  const double f0 = f(lam);

  const double abs_kappa = idx.total();
  const double half_n = 0.5 * idx.n();
  double acc = 0.0;
  for (int a = 0; a < nx; ++a) {
    int j, al, be;
    bool imag;
    sc.locate(a, j, al, be, imag);
    const cdouble drift = 2.0 * ((idx.kappa[j] + 0.5 * idx.m) * ((al == be) ? 1.0 : 0.0) -
                                 (abs_kappa + half_n) * lam.lambda[j](al, be));
    const double drift_a = imag ? drift.imag() : drift.real();
    const double grad_a = (eval(a, h, -1, 0) - eval(a, -h, -1, 0)) / (2.0 * h);
    acc += drift_a * grad_a;

    const double haa = (eval(a, h, -1, 0) - 2.0 * f0 + eval(a, -h, -1, 0)) / (h * h);
    acc += 0.5 * real_cov(lam, sc, a, a) * haa;
    for (int b = a + 1; b < nx; ++b) {
      const double hab = (eval(a, h, b, h) - eval(a, h, b, -h) - eval(a, -h, b, h) +
                          eval(a, -h, b, -h)) /
                         (4.0 * h * h);
      acc += real_cov(lam, sc, a, b) * hab;
    }
  }
  return acc;
}

} // namespace

double jacobi_generator_apply(const std::function<double(const SimplexPoint&)>& f,
                              const SimplexPoint& lam, const JacobiIndex& idx, double h) {
  if (!(h >= 1e-5 && h <= 1e-2))
    throw DegenerateStep("jacobi_generator_apply: h outside [1e-5, 1e-2]");
  if (idx.m != lam.dims.m || idx.blocks() != lam.dims.blocks())
    throw DimensionMismatch("jacobi_generator_apply: index does not match point");
  const double coarse = generator_fd_once(f, lam, idx, h);
  const double fine = generator_fd_once(f, lam, idx, 0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

McEstimate jacobi_mc_generator_oracle(const std::function<double(const SimplexPoint&)>& f,
                                      const SimplexPoint& lam, const JacobiIndex& idx,
                                      double dt, int n_samples, RngStream& rng) {
  const double f0 = f(lam);
  const JacobiState start{lam, 0.0};
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const JacobiState next = step_jacobi(start, idx, dt, rng);
    const double v = (f(next.point) - f0) / dt;
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n_samples;
  const double var = std::max(sum_sq / n_samples - mean * mean, 0.0);
  return {mean, std::sqrt(var / n_samples)};
}

BetaParams stationary_beta_params(const JacobiIndex& idx, int j) {
  if (idx.m != 1)
    throw Unsupported("stationary_beta_params: closed form implemented for m = 1 only");
  if (j < 0 || j >= idx.blocks())
    throw DimensionMismatch("stationary_beta_params: bad block index");
  const double a = idx.kappa[j] + 0.5;
  const double b = idx.total() + 0.5 * idx.blocks() - idx.kappa[j] - 0.5;
  return {a, b};
}

} // namespace flagflow
