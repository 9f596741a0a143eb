#include "flagflow/liebm.hpp"

#include <cmath>
#include <numbers>

namespace flagflow {

namespace {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = std::uint64_t(a) * b;
  hi = std::uint32_t(p >> 32);
  lo = std::uint32_t(p);
}

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

} // namespace

void RngStream::refill() {
  std::uint32_t x0 = std::uint32_t(counter_);
  std::uint32_t x1 = std::uint32_t(counter_ >> 32);
  std::uint32_t x2 = std::uint32_t(stream_index_);
  std::uint32_t x3 = std::uint32_t(stream_index_ >> 32);
  std::uint32_t k0 = std::uint32_t(master_seed_);
  std::uint32_t k1 = std::uint32_t(master_seed_ >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, x0, hi0, lo0);
    mulhilo(kPhiloxM1, x2, hi1, lo1);
    const std::uint32_t y0 = hi1 ^ x1 ^ k0;
    const std::uint32_t y1 = lo1;
    const std::uint32_t y2 = hi0 ^ x3 ^ k1;
    const std::uint32_t y3 = lo0;
    x0 = y0; x1 = y1; x2 = y2; x3 = y3;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  buf_[0] = x0; buf_[1] = x1; buf_[2] = x2; buf_[3] = x3;
  buf_pos_ = 0;
  ++counter_;
}

std::uint32_t RngStream::next_u32() {
  if (buf_pos_ >= 4) refill();
  return buf_[buf_pos_++];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t lo = next_u32();
  const std::uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double RngStream::uniform01() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = double(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

LieIncrement sample_skew_increment(int n, double dt, RngStream& rng) {
  if (n < 2) throw InvalidDimension("sample_skew_increment: n must be >= 2");
  if (!(dt > 0.0)) throw InvalidStep("sample_skew_increment: dt must be positive");
  const double sd = std::sqrt(dt);
  const double sd_diag = std::sqrt(2.0 * dt);
  CMat dA(n, n);
  for (int p = 0; p < n; ++p) {
    dA(p, p) = cdouble(0.0, rng.normal() * sd_diag);
    for (int q = p + 1; q < n; ++q) {
      const cdouble z(rng.normal() * sd, rng.normal() * sd);
      dA(p, q) = z;
      dA(q, p) = -std::conj(z);
    }
  }
  return {n, dt, std::move(dA)};
}

std::pair<LieIncrement, LieIncrement> split_increment(const LieIncrement& inc, RngStream& rng) {
  // Halves G/2 + xi and G/2 - xi with Var(xi) = dt/2 per real component,
  // which is a fresh draw at step dt/4.
  LieIncrement xi = sample_skew_increment(inc.n, inc.dt / 4.0, rng);
  LieIncrement left{inc.n, inc.dt / 2.0, 0.5 * inc.dA + xi.dA};
  LieIncrement right{inc.n, inc.dt / 2.0, 0.5 * inc.dA - xi.dA};
  return {std::move(left), std::move(right)};
}

UnitaryMatrix step_unitary(const UnitaryMatrix& u, const LieIncrement& inc) {
  if (u.dim() != inc.n) throw DimensionMismatch("step_unitary: dimension mismatch");
  return UnitaryMatrix::unchecked(u.mat() * expm(inc.dA));
}

UnitaryMatrix simulate_unitary_path(const UnitaryMatrix& u0, double T, double dt,
                                    RngStream& rng, const std::vector<PathObserver>& observers,
                                    const PathOptions& opts) {
  if (!(T > 0.0) || !(dt > 0.0) || dt > T * (1.0 + 1e-12))
    throw InvalidStep("simulate_unitary_path: need 0 < dt <= T");
  const long n_steps = std::lround(std::ceil(T / dt - 1e-12));
  UnitaryMatrix u = u0;
  for (long k = 1; k <= n_steps; ++k) {
    const LieIncrement inc = sample_skew_increment(u0.dim(), dt, rng);
    u = step_unitary(u, inc);
    if (opts.proj_interval > 0 && k % opts.proj_interval == 0)
      u = UnitaryMatrix::unchecked(unitary_project(u.mat()));
    for (const auto& obs : observers) obs(int(k), double(k) * dt, u, inc);
  }
  return u;
}

UnitaryMatrix haar_unitary(int n, RngStream& rng) {
  CMat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = cdouble(rng.normal(), rng.normal());
  // Modified Gram-Schmidt with positive diagonal R gives the Haar factor.
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      cdouble r = 0.0;
      for (int row = 0; row < n; ++row) r += std::conj(g(row, i)) * g(row, j);
      for (int row = 0; row < n; ++row) g(row, j) -= r * g(row, i);
    }
    double nv = 0.0;
    for (int row = 0; row < n; ++row) nv += std::norm(g(row, j));
    nv = std::sqrt(nv);
    for (int row = 0; row < n; ++row) g(row, j) /= nv;
  }
  return UnitaryMatrix::unchecked(unitary_project(g));
}

} // namespace flagflow
