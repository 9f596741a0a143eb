#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flagflow/matcore.hpp"

namespace flagflow {

/// Counter-based random stream (Philox4x32-10) keyed by
/// (master_seed, stream_index, counter). Two streams with distinct keys are
/// independent; identical keys reproduce identical output bit-for-bit, which
/// is what makes parallel path fan-out reproducible.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : master_seed_(master_seed), stream_index_(stream_index) {}

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }
  std::uint64_t counter() const { return counter_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  double uniform01();       // [0, 1)
  double normal();          // standard Gaussian, Box-Muller

 private:
  void refill();

  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::uint64_t counter_ = 0;
  std::uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// One Brownian increment on u(n). dA is exactly skew-Hermitian by
/// construction: off-diagonal entries (p<q) are (x+iy) sqrt(dt) with x,y
/// standard Gaussians and entry (q,p) = -conj(entry (p,q)); diagonal entries
/// are i z sqrt(2 dt). This is the unique normalization with block
/// covariation E[dA_ij dA_jr] = -2m delta_ir I_m dt for every m | n.
struct LieIncrement {
  int n = 0;
  double dt = 0.0;
  CMat dA;
};

LieIncrement sample_skew_increment(int n, double dt, RngStream& rng);

/// Split an increment over [0, dt] into two bridge-consistent halves over
/// [0, dt/2] and [dt/2, dt] (their sum has the law of the original draw).
std::pair<LieIncrement, LieIncrement> split_increment(const LieIncrement& inc, RngStream& rng);

/// One step of dU = U o dA: the group exponential U expm(dA).
UnitaryMatrix step_unitary(const UnitaryMatrix& u, const LieIncrement& inc);

struct PathOptions {
  int proj_interval = 64;  // re-unitarize via the polar factor this often
};

using PathObserver =
    std::function<void(int step, double time, const UnitaryMatrix& u, const LieIncrement& inc)>;

/// ceil(T/dt) steps of step_unitary. Observers see (step index, time, U, dA)
/// after each step and may accumulate functionals; their exceptions
/// propagate. Deterministic given (u0, T, dt, rng key).
UnitaryMatrix simulate_unitary_path(const UnitaryMatrix& u0, double T, double dt,
                                    RngStream& rng, const std::vector<PathObserver>& observers,
                                    const PathOptions& opts = {});

/// Haar-distributed unitary from QR of a complex Gaussian matrix.
UnitaryMatrix haar_unitary(int n, RngStream& rng);

} // namespace flagflow
