#include "flagflow/experiments.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <thread>

namespace flagflow {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MeanVar {
  long n = 0;
  double sum = 0.0, sum_sq = 0.0;
  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(sum_sq / n - m * m, 0.0) / n);
  }
};

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::max(1u, std::min(std::thread::hardware_concurrency(),
                                            unsigned(count)));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::string> rows;

  void add_row(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    rows.push_back(std::move(line));
  }
  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out << ',';
      out << header[i];
    }
    out << '\n';
    for (const auto& r : rows) out << r << '\n';
  }
};

// Aggregated z-score verdict for families of Monte Carlo statistics: a few
// 3-sigma outliers are expected in large families, gross outliers are not.
struct ZFamily {
  long total = 0;
  long over3 = 0;
  double max_abs = 0.0;
  void add(double z) {
    ++total;
    if (std::abs(z) > 3.0) ++over3;
    max_abs = std::max(max_abs, std::abs(z));
  }
  bool pass() const {
    const long allowed = std::max<long>(2, long(0.015 * double(total)));
    return over3 <= allowed && max_abs < 6.0;
  }
  nlohmann::json to_json() const {
    return {{"n_statistics", total},
            {"n_over_3se", over3},
            {"max_abs_z", max_abs},
            {"pass", pass()}};
  }
};

nlohmann::json check(const std::string& name, double value, double target,
                     double tolerance, bool pass) {
  return {{"name", name}, {"value", value}, {"target", target},
          {"tolerance", tolerance}, {"pass", pass}};
}

// ---------------------------------------------------------------------------
// Flag path driver: a unitary Brownian path observed through the chart, with
// functional accumulation and local bridge refinement when an increment
// guard (phase unwrap, large area increment, lift connection norm) trips.
// Chart-guard violations flag the path without retry.
// ---------------------------------------------------------------------------

struct DriverOptions {
  bool track_area = false;
  bool track_winding = false;
  bool track_martingale = false;
  bool track_lift = false;
  bool track_qv_integral = false;  // int (Tr Lambda_j^{-1} - m) ds
  std::vector<double> u;
  double area_guard = 0.5;
  double logdet_guard = 0.5;
  int max_depth = 14;
  int proj_interval = 64;
  double chart_guard = kChartGuard;

  // Predictable (adapted) refinement: choose the substep from the pre-step
  // state so realized covariation sums stay unbiased. The reactive guards
  // above look at the sampled increment itself, which is fine for path
  // functionals but selection-biases QV statistics.
  bool predictable_refine = false;
  double qv_step_target = 0.0025;  // max_j (Tr Lambda_j^{-1} - m) * dt_local
  int predictable_cap = 30;
};

class FlagPathDriver {
 public:
  FlagPathDriver(const UnitaryMatrix& u0, FlagDims dims, DriverOptions opt)
      : dims_(dims),
        opt_(std::move(opt)),
        u_(u0),
        w_(project_affine(u0, dims, opt_.chart_guard)),
        lam_(radial_from_unitary(u0, dims)),
        fs_(dims, opt_.u),
        qv_integral_(dims.blocks(), 0.0),
        area_qv_(std::size_t(dims.blocks()) * dims.blocks(), 0.0) {
    if (opt_.track_winding) winding_update(fs_, bottom_blocks(u_), opt_.chart_guard);
    if (opt_.track_qv_integral) integrand_ = trace_inv_minus_m(lam_);
    if (opt_.track_lift) lift_ = std::make_unique<HorizontalLiftState>(w_, lam_);
  }

  bool macro_step(double dt, RngStream& rng) {
    if (flagged_) return false;
    bool ok;
    if (opt_.predictable_refine) {
      ok = advance_predictable(dt, 0, rng);
    } else {
      const LieIncrement inc = sample_skew_increment(dims_.n(), dt, rng);
      ok = advance(inc, 0, rng);
    }
    if (ok) time_ += dt;
    return ok;
  }

  double time() const { return time_; }
  bool flagged() const { return flagged_; }
  const std::string& flag_reason() const { return flag_reason_; }
  const FunctionalState& functionals() const { return fs_; }
  const FlagPoint& chart_point() const { return w_; }
  const SimplexPoint& radial_point() const { return lam_; }
  const UnitaryMatrix& unitary() const { return u_; }
  const std::vector<double>& qv_integral() const { return qv_integral_; }
  double area_qv(int j, int l) const { return area_qv_[std::size_t(j) * dims_.blocks() + l]; }
  double max_unitarity_residual() const { return max_unit_res_; }
  double max_modulus_residual() const { return max_modulus_res_; }
  long guard_exhaustions() const { return guard_exhaustions_; }
  const HorizontalLiftState* lift() const { return lift_.get(); }

 private:
  std::vector<CMat> bottom_blocks(const UnitaryMatrix& u) const {
    std::vector<CMat> z;
    z.reserve(dims_.blocks());
    const int n = dims_.n();
    for (int j = 0; j < dims_.blocks(); ++j)
      z.push_back(u.mat().block(n - dims_.m, j * dims_.m, dims_.m, dims_.m));
    return z;
  }

  std::vector<double> trace_inv_minus_m(const SimplexPoint& lam) const {
    std::vector<double> c(dims_.blocks());
    for (int j = 0; j < dims_.blocks(); ++j) {
      const EigH e = eigh(lam.lambda[j]);
      double s = 0.0;
      for (double ev : e.eigenvalues) {
        if (ev < kEigFloor) throw SingularBlock("integrand: eigenvalue below eig_floor");
        s += 1.0 / ev;
      }
      c[j] = s - dims_.m;
    }
    return c;
  }

  bool fail(const std::string& reason) {
    flagged_ = true;
    flag_reason_ = reason;
    return false;
  }

  // Halve the substep while the pre-step diffusion rate of the areas says
  // the increment would be too coarse, then sample fresh. The decision never
  // looks at the sampled increment, so realized covariation sums over the
  // committed substeps are unbiased.
  bool advance_predictable(double dt, int depth, RngStream& rng) {
    double rate = 0.0;
    for (double c : integrand_) rate = std::max(rate, c);
    if (rate * dt > opt_.qv_step_target && depth < opt_.predictable_cap) {
      return advance_predictable(0.5 * dt, depth + 1, rng) &&
             advance_predictable(0.5 * dt, depth + 1, rng);
    }
    if (rate * dt > opt_.qv_step_target) ++guard_exhaustions_;
    const LieIncrement inc = sample_skew_increment(dims_.n(), dt, rng);
    return advance(inc, 0, rng);
  }

  bool advance(const LieIncrement& inc, int depth, RngStream& rng) {
    UnitaryMatrix u_next = step_unitary(u_, inc);
    FlagPoint w_next{dims_, {}};
    try {
      w_next = project_affine(u_next, dims_, opt_.chart_guard);
    } catch (const OutsideChart&) {
      return fail("chart-guard");
    }
    const SimplexPoint lam_next = radial_from_unitary(u_next, dims_);

    // Soft guards ask for local refinement but may be accepted at the depth
    // cap (the functional error per event is bounded by the guard scale);
    // strict guards (phase unwrap, lift connection norm) flag the path when
    // refinement cannot resolve them.
    const bool at_cap = depth >= opt_.max_depth;
    std::vector<double> da;
    bool soft_refine = false;
    if (opt_.track_area || opt_.track_lift) {
      FlagPoint w_mid{dims_, {}};
      for (int j = 0; j < dims_.blocks(); ++j)
        w_mid.w.push_back(0.5 * (w_.w[j] + w_next.w[j]));
      da = area_increment(w_, w_next, radial_from_chart(w_mid));
      for (double v : da)
        if (std::abs(v) >= opt_.area_guard) soft_refine = true;
    }
    if (opt_.track_martingale || opt_.track_qv_integral) {
      // Radial dips move log det Lambda violently within one step; resolve
      // them locally so the clock integrals stay accurate.
      for (int j = 0; j < dims_.blocks() && !soft_refine; ++j) {
        const double prev_ld = det_arg(lam_.lambda[j]).log_modulus;
        const double next_ld = det_arg(lam_next.lambda[j]).log_modulus;
        if (std::abs(next_ld - prev_ld) >= opt_.logdet_guard) soft_refine = true;
      }
    }
    if (soft_refine && !at_cap) {
      auto [left, right] = split_increment(inc, rng);
      return advance(left, depth + 1, rng) && advance(right, depth + 1, rng);
    }
    if (soft_refine) ++guard_exhaustions_;

    FunctionalState fs_next = fs_;
    std::unique_ptr<HorizontalLiftState> lift_next;
    bool strict_refine = false;
    try {
      if (opt_.track_winding) winding_update(fs_next, bottom_blocks(u_next), opt_.chart_guard);
      if (opt_.track_lift) {
        lift_next = std::make_unique<HorizontalLiftState>(*lift_);
        horizontal_lift_step(*lift_next, w_, w_next, lam_, lam_next, da);
      }
    } catch (const StepTooLarge&) {
      strict_refine = true;
    } catch (const SingularBlock&) {
      return fail("singular-block");
    }
    if (strict_refine) {
      if (at_cap) return fail("max-refinement-depth");
      auto [left, right] = split_increment(inc, rng);
      return advance(left, depth + 1, rng) && advance(right, depth + 1, rng);
    }

    // Commit.
    if (opt_.track_area) {
      for (int j = 0; j < dims_.blocks(); ++j) {
        fs_next.a[j] += da[j];
        for (int l = 0; l < dims_.blocks(); ++l)
          area_qv_[std::size_t(j) * dims_.blocks() + l] += da[j] * da[l];
      }
    }
    if (opt_.track_martingale) {
      try {
        exp_martingale_update(fs_next, lam_, lam_next, inc.dt);
      } catch (const SingularBlock&) {
        return fail("martingale-singular");
      }
    }
    if (opt_.track_qv_integral) {
      std::vector<double> integrand_next;
      try {
        integrand_next = trace_inv_minus_m(lam_next);
      } catch (const SingularBlock&) {
        return fail("integrand-singular");
      }
      for (int j = 0; j < dims_.blocks(); ++j)
        qv_integral_[j] += 0.5 * (integrand_[j] + integrand_next[j]) * inc.dt;
      integrand_ = std::move(integrand_next);
    }
    if (opt_.track_winding) {
      // Pathwise modulus identity |det Z_j|^2 = det Lambda_j.
      const auto z = bottom_blocks(u_next);
      for (int j = 0; j < dims_.blocks(); ++j) {
        const double mod2 = std::exp(2.0 * det_arg(z[j]).log_modulus);
        const double det_lam = std::exp(det_arg(lam_next.lambda[j]).log_modulus);
        max_modulus_res_ = std::max(max_modulus_res_, std::abs(mod2 - det_lam));
      }
    }

    fs_ = std::move(fs_next);
    if (lift_next) lift_ = std::move(lift_next);
    u_ = u_next;
    w_ = std::move(w_next);
    lam_ = lam_next;
    ++substeps_;
    if (opt_.proj_interval > 0 && substeps_ % opt_.proj_interval == 0)
      u_ = UnitaryMatrix::unchecked(unitary_project(u_.mat()));
    max_unit_res_ = std::max(max_unit_res_, u_.residual());
    return true;
  }

  FlagDims dims_;
  DriverOptions opt_;
  UnitaryMatrix u_;
  FlagPoint w_;
  SimplexPoint lam_;
  FunctionalState fs_;
  std::vector<double> qv_integral_;
  std::vector<double> integrand_;
  std::vector<double> area_qv_;
  std::unique_ptr<HorizontalLiftState> lift_;
  double time_ = 0.0;
  long substeps_ = 0;
  long guard_exhaustions_ = 0;
  bool flagged_ = false;
  std::string flag_reason_;
  double max_unit_res_ = 0.0;
  double max_modulus_res_ = 0.0;
};

// Interior nudge for Jacobi paths that were clipped onto the simplex
// boundary: lifts every eigenvalue to 2e-11 (statistically invisible, keeps
// the step precondition satisfiable).
SimplexPoint lift_interior(const SimplexPoint& p) {
  SimplexPoint out = p;
  for (auto& b : out.lambda) b = eig_clip(b, 2.0 * 10.0 * kEigFloor, 1.0);
  return out;
}

struct JacobiPathResult {
  JacobiState state;
  long nudges = 0;
  bool flagged = false;
};

JacobiPathResult run_jacobi_path(const SimplexPoint& start, const JacobiIndex& idx,
                                 double T, double dt, RngStream& rng,
                                 const std::function<void(long, const JacobiState&)>& observer) {
  JacobiPathResult out{JacobiState{start, 0.0}, 0, false};
  const long n_steps = std::lround(std::ceil(T / dt - 1e-12));
  for (long s = 1; s <= n_steps; ++s) {
    bool done = false;
    for (int attempt = 0; attempt < 8 && !done; ++attempt) {
      try {
        out.state = step_jacobi(out.state, idx, dt, rng);
        done = true;
      } catch (const BoundaryContact&) {
        out.state.point = lift_interior(out.state.point);
        ++out.nudges;
      }
    }
    if (!done) {
      out.flagged = true;
      return out;
    }
    if (observer) observer(s, out.state);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct RunOutput {
  Csv csv;
  nlohmann::json estimators;
  nlohmann::json checks = nlohmann::json::array();
  long flagged = 0;
  nlohmann::json flag_details = nlohmann::json::array();
};

bool thin_keep(long step, long n_steps, int thin) {
  return step == 0 || step == n_steps || (thin > 0 && step % thin == 0);
}

// --------------------------- unitary-qv ------------------------------------

RunOutput run_unitary_qv(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  const int n = dims.n(), m = dims.m;
  out.csv.header = {"path_index", "step", "time", "unitarity_residual"};

  // Unitarity preservation along one path.
  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  double max_res = 0.0;
  RngStream rng_path(cfg.master_seed, 0);
  std::vector<PathObserver> observers;
  observers.push_back([&](int step, double t, const UnitaryMatrix& u, const LieIncrement&) {
    const double res = u.residual();
    max_res = std::max(max_res, res);
    if (thin_keep(step, n_steps, cfg.thin))
      out.csv.add_row({"0", std::to_string(step), fmt17(t), fmt17(res)});
  });
  UnitaryMatrix u0 = dft_start(dims);
  out.csv.add_row({"0", "0", fmt17(0.0), fmt17(u0.residual())});
  simulate_unitary_path(u0, cfg.T, cfg.dt, rng_path, observers, {64});

  // Realized block covariation E[dA_ij dA_jr]/dt against -2m delta_ir I_m.
  const int kb = dims.blocks();
  const double qv_dt = 0.01;
  RngStream rng_inc(cfg.master_seed, 1);
  const int draws = cfg.n_paths;
  std::vector<MeanVar> stats(std::size_t(kb) * kb * kb * m * m * 2);
  auto stat_at = [&](int i, int j, int r, int p, int q, int part) -> MeanVar& {
    return stats[((((std::size_t(i) * kb + j) * kb + r) * m + p) * m + q) * 2 + part];
  };
  for (int d = 0; d < draws; ++d) {
    const LieIncrement inc = sample_skew_increment(n, qv_dt, rng_inc);
    for (int i = 0; i < kb; ++i)
      for (int j = 0; j < kb; ++j) {
        const CMat bij = inc.dA.block(i * m, j * m, m, m);
        for (int r = 0; r < kb; ++r) {
          const CMat bjr = inc.dA.block(j * m, r * m, m, m);
          const CMat prod = bij * bjr;
          for (int p = 0; p < m; ++p)
            for (int q = 0; q < m; ++q) {
              stat_at(i, j, r, p, q, 0).add(prod(p, q).real() / qv_dt);
              stat_at(i, j, r, p, q, 1).add(prod(p, q).imag() / qv_dt);
            }
        }
      }
  }
  ZFamily family;
  for (int i = 0; i < kb; ++i)
    for (int j = 0; j < kb; ++j)
      for (int r = 0; r < kb; ++r)
        for (int p = 0; p < m; ++p)
          for (int q = 0; q < m; ++q)
            for (int part = 0; part < 2; ++part) {
              const double target =
                  (part == 0 && i == r && p == q) ? -2.0 * m : 0.0;
              MeanVar& s = stat_at(i, j, r, p, q, part);
              const double se = s.se();
              if (se > 0.0) family.add((s.mean() - target) / se);
            }

  out.estimators["unitarity_residual_max"] = max_res;
  out.estimators["block_qv"] = family.to_json();
  out.estimators["block_qv"]["n_draws"] = draws;
  out.checks.push_back(check("unitarity_residual_max", max_res, 0.0, 1e-10, max_res < 1e-10));
  out.checks.push_back(check("block_qv_z_family", family.max_abs, 0.0, 3.0, family.pass()));
  return out;
}

// --------------------------- flag-generator --------------------------------

RunOutput run_flag_generator(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  const int n = dims.n(), m = dims.m, kb = dims.blocks();
  const int top = n - m;
  const int entries = top * m;
  const int n_points = 5;
  const double delta = cfg.dt;
  const int n_mc = cfg.n_paths;

  out.csv.header = {"path_index", "step",       "time",           "cov_max_abs_z",
                    "cov_over_3se", "cov_n_stats", "drift_max_abs_z"};

  ZFamily cov_family, drift_family;
  nlohmann::json points = nlohmann::json::array();

  for (int point = 0; point < n_points; ++point) {
    RngStream rng_point(cfg.master_seed, 100 + point);
    UnitaryMatrix u0 = haar_unitary(n, rng_point);
    for (int attempt = 0; attempt < 200; ++attempt) {
      bool good = true;
      try {
        const auto z = stiefel_blocks(u0, dims);
        for (const auto& zj : z)
          if (std::exp(det_arg(zj).log_modulus) < 0.05) good = false;
      } catch (const SingularMatrix&) {
        good = false;
      }
      if (good) break;
      u0 = haar_unitary(n, rng_point);
    }
    const FlagPoint w0 = project_affine(u0, dims);
    const FlagQvTables tables = flag_qv_predict(w0);

    // Accumulate products of one-step increments; mixed = dw conj(dw'),
    // holo = dw dw'.
    const std::size_t pair_count = std::size_t(kb) * kb * entries * entries;
    std::vector<MeanVar> mixed_re(pair_count), mixed_im(pair_count);
    std::vector<MeanVar> holo_re(pair_count), holo_im(pair_count);
    std::vector<MeanVar> drift_re(std::size_t(kb) * entries), drift_im(std::size_t(kb) * entries);
    auto pair_idx = [&](int j, int l, int e, int f) {
      return ((std::size_t(j) * kb + l) * entries + e) * entries + f;
    };

    RngStream rng_mc(cfg.master_seed, 1000 + point);
    std::vector<cdouble> dw(std::size_t(kb) * entries);
    for (int s = 0; s < n_mc; ++s) {
      const LieIncrement inc = sample_skew_increment(n, delta, rng_mc);
      const UnitaryMatrix u1 = step_unitary(u0, inc);
      const FlagPoint w1 = project_affine(u1, dims);
      for (int j = 0; j < kb; ++j)
        for (int p = 0; p < top; ++p)
          for (int q = 0; q < m; ++q)
            dw[std::size_t(j) * entries + p * m + q] = w1.w[j](p, q) - w0.w[j](p, q);
      for (int j = 0; j < kb; ++j)
        for (int e = 0; e < entries; ++e) {
          const cdouble a = dw[std::size_t(j) * entries + e];
          drift_re[std::size_t(j) * entries + e].add(a.real() / delta);
          drift_im[std::size_t(j) * entries + e].add(a.imag() / delta);
          for (int l = 0; l < kb; ++l)
            for (int f = 0; f < entries; ++f) {
              const cdouble b = dw[std::size_t(l) * entries + f];
              const cdouble mx = a * std::conj(b) / delta;
              const cdouble hl = a * b / delta;
              const std::size_t idx = pair_idx(j, l, e, f);
              mixed_re[idx].add(mx.real());
              mixed_im[idx].add(mx.imag());
              holo_re[idx].add(hl.real());
              holo_im[idx].add(hl.imag());
            }
        }
    }

    ZFamily point_cov;
    for (int j = 0; j < kb; ++j)
      for (int l = 0; l < kb; ++l)
        for (int e = 0; e < entries; ++e)
          for (int f = 0; f < entries; ++f) {
            const int p = e / m, q = e % m, r = f / m, s2 = f % m;
            const cdouble mx_target = (j == l) ? tables.mixed(j, p, q, r, s2) : cdouble(0.0);
            const cdouble hl_target = tables.holo(j, l, p, q, r, s2);
            const std::size_t idx = pair_idx(j, l, e, f);
            auto push = [&](MeanVar& sgl, double target) {
              const double se = sgl.se();
              if (se > 0.0) {
                const double z = (sgl.mean() - target) / se;
                point_cov.add(z);
                cov_family.add(z);
              }
            };
            push(mixed_re[idx], mx_target.real());
            push(mixed_im[idx], mx_target.imag());
            push(holo_re[idx], hl_target.real());
            push(holo_im[idx], hl_target.imag());
          }
    ZFamily point_drift;
    for (std::size_t i = 0; i < drift_re.size(); ++i) {
      if (drift_re[i].se() > 0.0) {
        point_drift.add(drift_re[i].mean() / drift_re[i].se());
        drift_family.add(drift_re[i].mean() / drift_re[i].se());
      }
      if (drift_im[i].se() > 0.0) {
        point_drift.add(drift_im[i].mean() / drift_im[i].se());
        drift_family.add(drift_im[i].mean() / drift_im[i].se());
      }
    }
    points.push_back({{"point", point},
                      {"cov", point_cov.to_json()},
                      {"drift", point_drift.to_json()}});
    out.csv.add_row({std::to_string(point), "0", fmt17(delta), fmt17(point_cov.max_abs),
                     std::to_string(point_cov.over3), std::to_string(point_cov.total),
                     fmt17(point_drift.max_abs)});
  }

  const bool drift_pass = drift_family.max_abs < 6.5 &&
                          drift_family.over3 <= std::max<long>(2, long(0.015 * drift_family.total));
  out.estimators["points"] = points;
  out.estimators["cov_family"] = cov_family.to_json();
  out.estimators["drift_family"] = drift_family.to_json();
  out.checks.push_back(check("covariation_z_family", cov_family.max_abs, 0.0, 3.0, cov_family.pass()));
  out.checks.push_back(check("martingale_drift_z_family", drift_family.max_abs, 0.0, 4.0, drift_pass));
  return out;
}

// --------------------------- radial-match ----------------------------------

RunOutput run_radial_match(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  out.csv.header = {"path_index", "step", "time", "route", "tr_lambda1", "tr_lambda1_sq"};

  std::vector<double> times;
  for (double t : {0.25, 1.0, 4.0})
    if (t <= cfg.T * (1.0 + 1e-9)) times.push_back(t);
  std::vector<long> steps_at;
  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  for (double t : times) steps_at.push_back(std::lround(t / cfg.dt));

  const int n_paths = cfg.n_paths;
  struct PathRowChunk {
    std::vector<std::array<double, 2>> moments;  // per sample time
    bool flagged = false;
  };
  std::vector<PathRowChunk> route_a(n_paths), route_b(n_paths);

  const UnitaryMatrix u0 = dft_start(dims);
  parallel_for(n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    FlagPathDriver driver(u0, dims, opt);
    auto& chunk = route_a[p];
    chunk.moments.resize(times.size(), {0.0, 0.0});
    std::size_t next_sample = 0;
    for (long s = 1; s <= n_steps && next_sample < times.size(); ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        chunk.flagged = true;
        return;
      }
      if (s == steps_at[next_sample]) {
        const CMat& l1 = driver.radial_point().lambda[0];
        double tr2 = 0.0;
        for (int i = 0; i < dims.m; ++i)
          for (int j = 0; j < dims.m; ++j) tr2 += std::norm(l1(i, j));
        chunk.moments[next_sample] = {l1.trace().real(), tr2};
        ++next_sample;
      }
    }
  });

  const JacobiIndex idx = JacobiIndex::radial(dims);
  const SimplexPoint start = barycenter_simplex(dims);
  parallel_for(n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(n_paths + p));
    auto& chunk = route_b[p];
    chunk.moments.resize(times.size(), {0.0, 0.0});
    std::size_t next_sample = 0;
    auto observer = [&](long s, const JacobiState& st) {
      if (next_sample < times.size() && s == steps_at[next_sample]) {
        const CMat& l1 = st.point.lambda[0];
        double tr2 = 0.0;
        for (int i = 0; i < dims.m; ++i)
          for (int j = 0; j < dims.m; ++j) tr2 += std::norm(l1(i, j));
        chunk.moments[next_sample] = {l1.trace().real(), tr2};
        ++next_sample;
      }
    };
    const JacobiPathResult r = run_jacobi_path(start, idx, cfg.T, cfg.dt, rng, observer);
    chunk.flagged = r.flagged;
  });

  nlohmann::json moments = nlohmann::json::array();
  bool all_pass = true;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (int moment = 0; moment < 2; ++moment) {
      MeanVar a, b;
      for (const auto& c : route_a)
        if (!c.flagged) a.add(c.moments[ti][moment]);
      for (const auto& c : route_b)
        if (!c.flagged) b.add(c.moments[ti][moment]);
      const double se = std::sqrt(a.se() * a.se() + b.se() * b.se());
      const double z = se > 0.0 ? (a.mean() - b.mean()) / se : 0.0;
      const bool pass = std::abs(z) <= 3.0;
      all_pass = all_pass && pass;
      moments.push_back({{"time", times[ti]},
                         {"moment", moment == 0 ? "tr_lambda1" : "tr_lambda1_sq"},
                         {"projected_mean", a.mean()},
                         {"projected_se", a.se()},
                         {"jacobi_mean", b.mean()},
                         {"jacobi_se", b.se()},
                         {"z", z},
                         {"pass", pass}});
    }
  }
  for (int p = 0; p < n_paths; ++p) {
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      if (!route_a[p].flagged)
        out.csv.add_row({std::to_string(p), std::to_string(steps_at[ti]), fmt17(times[ti]), "0",
                         fmt17(route_a[p].moments[ti][0]), fmt17(route_a[p].moments[ti][1])});
    }
  }
  for (int p = 0; p < n_paths; ++p) {
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      if (!route_b[p].flagged)
        out.csv.add_row({std::to_string(n_paths + p), std::to_string(steps_at[ti]),
                         fmt17(times[ti]), "1", fmt17(route_b[p].moments[ti][0]),
                         fmt17(route_b[p].moments[ti][1])});
    }
  }
  for (const auto& c : route_a) out.flagged += c.flagged ? 1 : 0;
  for (const auto& c : route_b) out.flagged += c.flagged ? 1 : 0;
  out.estimators["moments"] = moments;
  out.checks.push_back(check("radial_jacobi_moment_match", all_pass ? 0.0 : 1.0, 0.0, 3.0, all_pass));
  return out;
}

// --------------------------- jacobi-stationary -----------------------------

RunOutput run_jacobi_stationary(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  out.csv.header = {"path_index", "step", "time", "lambda_1"};
  const JacobiIndex idx(std::vector<double>(dims.blocks(), 0.5), 1);
  const BetaParams beta = stationary_beta_params(idx, 0);
  const SimplexPoint start = barycenter_simplex(dims);
  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));

  std::vector<double> samples(cfg.n_paths, 0.0);
  std::vector<char> flagged(cfg.n_paths, 0);
  std::vector<long> nudges(cfg.n_paths, 0);
  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    const JacobiPathResult r = run_jacobi_path(start, idx, cfg.T, cfg.dt, rng, nullptr);
    flagged[p] = r.flagged ? 1 : 0;
    nudges[p] = r.nudges;
    samples[p] = r.state.point.lambda[0](0, 0).real();
  });

  std::vector<double> clean;
  long total_nudges = 0;
  for (int p = 0; p < cfg.n_paths; ++p) {
    total_nudges += nudges[p];
    if (flagged[p]) {
      ++out.flagged;
      continue;
    }
    clean.push_back(samples[p]);
    out.csv.add_row({std::to_string(p), std::to_string(n_steps), fmt17(cfg.T), fmt17(samples[p])});
  }
  const TestReport ks = ks_test(clean, [&](double x) { return beta_cdf(x, beta.a, beta.b); }, 0.01);
  out.estimators["beta_a"] = beta.a;
  out.estimators["beta_b"] = beta.b;
  out.estimators["ks_statistic"] = ks.statistic;
  out.estimators["ks_p"] = ks.p_approx;
  out.estimators["n_samples"] = ks.n_samples;
  out.estimators["boundary_nudges"] = total_nudges;
  out.checks.push_back(check("stationary_ks_p", ks.p_approx, 1.0, 0.01, ks.pass));
  return out;
}

// --------------------------- area-covariation ------------------------------

RunOutput run_area_covariation(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  const int kb = dims.blocks();
  out.csv.header = {"path_index", "step", "time"};
  for (int j = 0; j < kb; ++j) out.csv.header.push_back("a_" + std::to_string(j + 1));
  for (int j = 0; j < kb; ++j)
    out.csv.header.push_back("qv_integrand_" + std::to_string(j + 1));

  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  const UnitaryMatrix u0 = dft_start(dims);
  bool all_pass = true;
  nlohmann::json paths = nlohmann::json::array();

  struct PathData {
    std::vector<std::string> rows_flat;
    nlohmann::json summary;
    bool flagged = false;
    std::string flag_reason;
    bool pass = true;
  };
  std::vector<PathData> per_path(cfg.n_paths);

  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    opt.track_area = true;
    opt.track_qv_integral = true;
    // The pathwise QV/clock comparison needs an adapted partition: substeps
    // chosen from the pre-step state (reactive guards would bias the sums).
    opt.predictable_refine = true;
    opt.area_guard = 1e300;
    opt.logdet_guard = 1e300;
    FlagPathDriver driver(u0, dims, opt);
    PathData& data = per_path[p];
    auto emit = [&](long step) {
      std::string row = std::to_string(p) + ',' + std::to_string(step) + ',' +
                        fmt17(driver.time());
      for (int j = 0; j < kb; ++j) row += ',' + fmt17(driver.functionals().a[j]);
      const auto& lam = driver.radial_point();
      for (int j = 0; j < kb; ++j) {
        const EigH e = eigh(lam.lambda[j]);
        double s = 0.0;
        for (double ev : e.eigenvalues) s += 1.0 / std::max(ev, kEigFloor);
        row += ',' + fmt17(s - dims.m);
      }
      data.rows_flat.push_back(std::move(row));
    };
    emit(0);
    for (long s = 1; s <= n_steps; ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        data.flagged = true;
        data.flag_reason = driver.flag_reason();
        return;
      }
      if (thin_keep(s, n_steps, cfg.thin)) emit(s);
    }
    nlohmann::json cross = nlohmann::json::array();
    bool pass = true;
    for (int j = 0; j < kb; ++j)
      for (int l = j + 1; l < kb; ++l) {
        const double target = dims.m * cfg.T;
        const double realized = driver.area_qv(j, l);
        const bool ok = std::abs(realized - target) <= 0.10 * std::abs(target);
        pass = pass && ok;
        cross.push_back({{"pair", {j + 1, l + 1}},
                         {"realized", realized},
                         {"target", target},
                         {"pass", ok}});
      }
    nlohmann::json diag = nlohmann::json::array();
    for (int j = 0; j < kb; ++j) {
      const double realized = driver.area_qv(j, j);
      const double target = driver.qv_integral()[j];
      const bool ok = std::abs(realized - target) <= 0.05 * std::abs(target);
      pass = pass && ok;
      diag.push_back({{"component", j + 1},
                      {"realized", realized},
                      {"pathwise_integral", target},
                      {"pass", ok}});
    }
    data.summary = {{"path", p}, {"cross", cross}, {"diagonal", diag}, {"pass", pass}};
    data.pass = pass;
  });

  for (auto& data : per_path) {
    if (data.flagged) {
      ++out.flagged;
      out.flag_details.push_back(data.flag_reason);
      continue;
    }
    for (auto& r : data.rows_flat) out.csv.rows.push_back(std::move(r));
    paths.push_back(data.summary);
    all_pass = all_pass && data.pass;
  }
  out.estimators["paths"] = paths;
  out.checks.push_back(check("area_cross_covariation", all_pass ? 0.0 : 1.0, 0.0, 0.10, all_pass));
  return out;
}

// --------------------------- martingale ------------------------------------

RunOutput run_martingale(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  out.csv.header = {"path_index", "step", "time", "martingale"};
  std::vector<double> u = cfg.u;
  if (u.empty()) {
    u.assign(dims.blocks(), 0.0);
    u[0] = 0.5;
    if (dims.blocks() > 1) u[1] = -0.3;
  }
  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  const UnitaryMatrix u0 = dft_start(dims);

  struct PathData {
    std::vector<std::string> rows;
    double final_d = 0.0;
    bool flagged = false;
  };
  std::vector<PathData> per_path(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    opt.track_martingale = true;
    opt.u = u;
    FlagPathDriver driver(u0, dims, opt);
    PathData& data = per_path[p];
    auto emit = [&](long step) {
      data.rows.push_back(std::to_string(p) + ',' + std::to_string(step) + ',' +
                          fmt17(driver.time()) + ',' + fmt17(driver.functionals().martingale()));
    };
    emit(0);
    for (long s = 1; s <= n_steps; ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        data.flagged = true;
        return;
      }
      if (thin_keep(s, n_steps, cfg.thin)) emit(s);
    }
    data.final_d = driver.functionals().martingale();
  });

  MeanVar d_stat;
  for (auto& data : per_path) {
    if (data.flagged) {
      ++out.flagged;
      continue;
    }
    for (auto& r : data.rows) out.csv.rows.push_back(std::move(r));
    d_stat.add(data.final_d);
  }
  const double z = d_stat.se() > 0.0 ? (d_stat.mean() - 1.0) / d_stat.se() : 0.0;
  out.estimators["u"] = u;
  out.estimators["mean_D"] = d_stat.mean();
  out.estimators["se_D"] = d_stat.se();
  out.estimators["z"] = z;
  out.checks.push_back(check("martingale_mean", d_stat.mean(), 1.0, 3.0 * d_stat.se(),
                             std::abs(z) <= 3.0));
  return out;
}

// --------------------------- cauchy-limit ----------------------------------

RunOutput run_cauchy_limit(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  const int kb = dims.blocks();
  out.csv.header = {"path_index", "step", "time"};
  for (int j = 0; j < kb; ++j) out.csv.header.push_back("a_" + std::to_string(j + 1));
  for (int j = 0; j < kb; ++j)
    out.csv.header.push_back("lambda_min_" + std::to_string(j + 1));

  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  const UnitaryMatrix u0 = dft_start(dims);

  struct PathData {
    std::vector<std::string> rows;
    std::vector<double> scaled_area;
    bool flagged = false;
  };
  std::vector<PathData> per_path(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    opt.track_area = true;
    FlagPathDriver driver(u0, dims, opt);
    PathData& data = per_path[p];
    auto emit = [&](long step) {
      std::string row = std::to_string(p) + ',' + std::to_string(step) + ',' +
                        fmt17(driver.time());
      for (int j = 0; j < kb; ++j) row += ',' + fmt17(driver.functionals().a[j]);
      for (int j = 0; j < kb; ++j) {
        const EigH e = eigh(driver.radial_point().lambda[j]);
        row += ',' + fmt17(e.eigenvalues.front());
      }
      data.rows.push_back(std::move(row));
    };
    emit(0);
    for (long s = 1; s <= n_steps; ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        data.flagged = true;
        return;
      }
      if (thin_keep(s, n_steps, cfg.thin)) emit(s);
    }
    data.scaled_area.resize(kb);
    for (int j = 0; j < kb; ++j) data.scaled_area[j] = driver.functionals().a[j] / cfg.T;
  });

  std::vector<std::vector<double>> samples;  // per path, (k+1)-vector
  for (auto& data : per_path) {
    if (data.flagged) {
      ++out.flagged;
      continue;
    }
    for (auto& r : data.rows) out.csv.rows.push_back(std::move(r));
    samples.push_back(data.scaled_area);
  }

  const double target = double(dims.m) * (dims.n() - dims.m);
  nlohmann::json fits = nlohmann::json::array();
  bool all_pass = true;
  for (int j = 0; j < kb; ++j) {
    std::vector<double> comp;
    comp.reserve(samples.size());
    for (const auto& s : samples) comp.push_back(s[j]);
    const CauchyFit fit = cauchy_fit(comp);
    const TestReport ks =
        ks_test(comp, [&](double x) { return cauchy_cdf(x, fit.location, fit.scale); }, 0.01);
    const bool scale_ok = fit.converged && fit.scale >= 0.85 * target && fit.scale <= 1.15 * target;
    const bool loc_ok = std::abs(fit.location) <= 0.1 * fit.scale;
    const bool ks_gate = (dims.m == 1 && dims.k == 1) ? ks.pass : true;
    all_pass = all_pass && scale_ok && loc_ok && ks_gate;
    fits.push_back({{"component", j + 1},
                    {"location", fit.location},
                    {"scale", fit.scale},
                    {"se_scale", fit.se_scale},
                    {"converged", fit.converged},
                    {"target_scale", target},
                    {"scale_pass", scale_ok},
                    {"location_pass", loc_ok},
                    {"ks_p", ks.p_approx},
                    {"ks_pass", ks.pass}});
  }
  out.estimators["cauchy_fits"] = fits;
  out.checks.push_back(check("cauchy_scale_window", target, target, 0.15 * target, all_pass));

  if (dims.k == 2) {
    // Asymptotic independence: joint ecf factorizes over components.
    const double grid1[] = {-0.9, 0.4, 1.0};
    const double grid2[] = {-1.0, 0.5, 0.8};
    const double u3 = 0.6;
    nlohmann::json ecf_checks = nlohmann::json::array();
    bool ecf_pass = true;
    for (double a : grid1)
      for (double b : grid2) {
        const std::vector<double> u_vec{a, b, u3};
        const EcfValue joint = ecf(samples, u_vec);
        cdouble prod(1.0, 0.0);
        double se_sum = std::hypot(joint.se_re, joint.se_im);
        for (int j = 0; j < kb; ++j) {
          std::vector<double> unit(kb, 0.0);
          unit[j] = u_vec[j];
          const EcfValue marg = ecf(samples, unit);
          prod *= marg.value;
          se_sum += std::hypot(marg.se_re, marg.se_im);
        }
        const double diff = std::abs(joint.value - prod);
        const double tol = 0.05 + 3.0 * se_sum;
        const bool ok = diff < tol;
        ecf_pass = ecf_pass && ok;
        ecf_checks.push_back({{"u", u_vec}, {"diff", diff}, {"tolerance", tol}, {"pass", ok}});
      }
    out.estimators["ecf_factorization"] = ecf_checks;
    out.checks.push_back(check("ecf_factorization", ecf_pass ? 0.0 : 1.0, 0.0, 0.05, ecf_pass));
  }
  return out;
}

// --------------------------- stiefel-winding -------------------------------

RunOutput run_stiefel_winding(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  const int kb = dims.blocks();
  out.csv.header = {"path_index", "step", "time"};
  for (int j = 0; j < kb; ++j) out.csv.header.push_back("theta_" + std::to_string(j + 1));
  out.csv.header.push_back("modulus_residual");

  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  const UnitaryMatrix u0 = dft_start(dims);

  struct PathData {
    std::vector<std::string> rows;
    std::vector<double> scaled_theta;
    double modulus_residual = 0.0;
    bool flagged = false;
  };
  std::vector<PathData> per_path(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    opt.track_winding = true;
    FlagPathDriver driver(u0, dims, opt);
    PathData& data = per_path[p];
    auto emit = [&](long step) {
      std::string row = std::to_string(p) + ',' + std::to_string(step) + ',' +
                        fmt17(driver.time());
      for (int j = 0; j < kb; ++j) row += ',' + fmt17(driver.functionals().theta[j]);
      row += ',' + fmt17(driver.max_modulus_residual());
      data.rows.push_back(std::move(row));
    };
    emit(0);
    for (long s = 1; s <= n_steps; ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        data.flagged = true;
        return;
      }
      if (thin_keep(s, n_steps, cfg.thin)) emit(s);
    }
    data.scaled_theta.resize(kb);
    for (int j = 0; j < kb; ++j) data.scaled_theta[j] = driver.functionals().theta[j] / cfg.T;
    data.modulus_residual = driver.max_modulus_residual();
  });

  std::vector<std::vector<double>> samples;
  double max_modulus = 0.0;
  for (auto& data : per_path) {
    if (data.flagged) {
      ++out.flagged;
      continue;
    }
    for (auto& r : data.rows) out.csv.rows.push_back(std::move(r));
    samples.push_back(data.scaled_theta);
    max_modulus = std::max(max_modulus, data.modulus_residual);
  }

  const double target = double(dims.m) * (dims.n() - dims.m);
  nlohmann::json fits = nlohmann::json::array();
  bool all_pass = true;
  for (int j = 0; j < kb; ++j) {
    std::vector<double> comp;
    comp.reserve(samples.size());
    for (const auto& s : samples) comp.push_back(s[j]);
    const CauchyFit fit = cauchy_fit(comp);
    const bool scale_ok = fit.converged && fit.scale >= 0.85 * target && fit.scale <= 1.15 * target;
    all_pass = all_pass && scale_ok;
    fits.push_back({{"component", j + 1},
                    {"location", fit.location},
                    {"scale", fit.scale},
                    {"se_scale", fit.se_scale},
                    {"converged", fit.converged},
                    {"target_scale", target},
                    {"scale_pass", scale_ok}});
  }
  out.estimators["winding_fits"] = fits;
  out.estimators["modulus_residual_max"] = max_modulus;
  out.checks.push_back(check("winding_scale_window", target, target, 0.15 * target, all_pass));
  out.checks.push_back(
      check("modulus_identity_max", max_modulus, 0.0, 1e-10, max_modulus < 1e-10));
  return out;
}

// --------------------------- horizontal-lift -------------------------------

RunOutput run_horizontal_lift(const ExperimentConfig& cfg) {
  RunOutput out;
  const FlagDims dims = cfg.dims();
  out.csv.header = {"path_index", "step",         "time",
                    "x_residual", "det_residual", "projection_residual"};
  const long n_steps = std::lround(std::ceil(cfg.T / cfg.dt - 1e-12));
  const UnitaryMatrix u0 = dft_start(dims);

  struct PathData {
    std::vector<std::string> rows;
    double max_x = 0.0, max_det = 0.0, max_proj = 0.0;
    bool flagged = false;
  };
  std::vector<PathData> per_path(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](int p) {
    RngStream rng(cfg.master_seed, std::uint64_t(p));
    DriverOptions opt;
    opt.track_area = true;
    opt.track_lift = true;
    FlagPathDriver driver(u0, dims, opt);
    PathData& data = per_path[p];
    for (long s = 1; s <= n_steps; ++s) {
      if (!driver.macro_step(cfg.dt, rng)) {
        data.flagged = true;
        return;
      }
      const HorizontalLiftState* lift = driver.lift();
      const double xres = unitarity_residual(lift->x);
      const double dres = lift->max_det_residual();
      double pres = 0.0;
      const FlagPoint wx =
          project_affine(UnitaryMatrix::unchecked(lift->x), dims, kChartGuard);
      for (int j = 0; j < dims.blocks(); ++j)
        pres = std::max(pres, (wx.w[j] - driver.chart_point().w[j]).frob_norm());
      data.max_x = std::max(data.max_x, xres);
      data.max_det = std::max(data.max_det, dres);
      data.max_proj = std::max(data.max_proj, pres);
      if (thin_keep(s, n_steps, cfg.thin))
        data.rows.push_back(std::to_string(p) + ',' + std::to_string(s) + ',' +
                            fmt17(driver.time()) + ',' + fmt17(xres) + ',' + fmt17(dres) +
                            ',' + fmt17(pres));
    }
  });

  double max_x = 0.0, max_det = 0.0, max_proj = 0.0;
  for (auto& data : per_path) {
    if (data.flagged) {
      ++out.flagged;
      continue;
    }
    for (auto& r : data.rows) out.csv.rows.push_back(std::move(r));
    max_x = std::max(max_x, data.max_x);
    max_det = std::max(max_det, data.max_det);
    max_proj = std::max(max_proj, data.max_proj);
  }
  out.estimators["x_unitarity_max"] = max_x;
  out.estimators["theta_det_residual_max"] = max_det;
  out.estimators["projection_residual_max"] = max_proj;
  out.checks.push_back(check("lift_x_unitarity", max_x, 0.0, 1e-8, max_x < 1e-8));
  out.checks.push_back(check("lift_theta_det", max_det, 0.0, 1e-8, max_det < 1e-8));
  out.checks.push_back(check("lift_projection", max_proj, 0.0, 1e-8, max_proj < 1e-8));
  return out;
}

} // namespace

UnitaryMatrix dft_start(FlagDims dims) {
  const int kb = dims.blocks();
  const int n = dims.n();
  CMat f(n, n);
  const double norm = 1.0 / std::sqrt(double(kb));
  for (int a = 0; a < kb; ++a)
    for (int b = 0; b < kb; ++b) {
      const double angle = 2.0 * std::numbers::pi * a * b / kb;
      const cdouble w = norm * std::exp(cdouble(0.0, angle));
      for (int d = 0; d < dims.m; ++d) f(a * dims.m + d, b * dims.m + d) = w;
    }
  return UnitaryMatrix(f);
}

Experiment experiment_from_string(const std::string& name) {
  if (name == "unitary-qv") return Experiment::UnitaryQv;
  if (name == "flag-generator") return Experiment::FlagGenerator;
  if (name == "radial-match") return Experiment::RadialMatch;
  if (name == "jacobi-stationary") return Experiment::JacobiStationary;
  if (name == "area-covariation") return Experiment::AreaCovariation;
  if (name == "martingale") return Experiment::Martingale;
  if (name == "cauchy-limit") return Experiment::CauchyLimit;
  if (name == "stiefel-winding") return Experiment::StiefelWinding;
  if (name == "horizontal-lift") return Experiment::HorizontalLift;
  throw ConfigInvalid("unknown experiment: " + name);
}

std::string experiment_to_string(Experiment e) {
  switch (e) {
    case Experiment::UnitaryQv: return "unitary-qv";
    case Experiment::FlagGenerator: return "flag-generator";
    case Experiment::RadialMatch: return "radial-match";
    case Experiment::JacobiStationary: return "jacobi-stationary";
    case Experiment::AreaCovariation: return "area-covariation";
    case Experiment::Martingale: return "martingale";
    case Experiment::CauchyLimit: return "cauchy-limit";
    case Experiment::StiefelWinding: return "stiefel-winding";
    case Experiment::HorizontalLift: return "horizontal-lift";
  }
  throw ConfigInvalid("unknown experiment enum value");
}

void ExperimentConfig::validate() const {
  if (m < 1 || k < 1) throw ConfigInvalid("need m >= 1 and k >= 1");
  if (!(dt > 0.0)) throw ConfigInvalid("dt must be positive");
  if (!(T >= dt)) throw ConfigInvalid("T must be at least dt");
  if (n_paths < 1) throw ConfigInvalid("n_paths must be at least 1");
  if (thin < 1) throw ConfigInvalid("thin must be at least 1");
  if (!u.empty() && int(u.size()) != k + 1)
    throw ConfigInvalid("u must have k+1 components");
  if (experiment == Experiment::JacobiStationary && m != 1)
    throw ConfigInvalid("jacobi-stationary requires m = 1");
  if (experiment == Experiment::FlagGenerator && n_paths < 100)
    throw ConfigInvalid("flag-generator needs n_paths >= 100 Monte Carlo samples");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (!j.contains("experiment")) throw ConfigInvalid("config missing 'experiment'");
  static const char* known[] = {"experiment", "m",           "k",   "T",
                                "dt",         "n_paths",     "master_seed",
                                "u",          "output_dir",  "thin", "json_only"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : known) ok = ok || it.key() == key;
    if (!ok) throw ConfigInvalid("unknown config field: " + it.key());
  }
  try {
    cfg.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("m")) cfg.m = j.at("m").get<int>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("T")) cfg.T = j.at("T").get<double>();
    if (j.contains("dt")) cfg.dt = j.at("dt").get<double>();
    if (j.contains("n_paths")) cfg.n_paths = j.at("n_paths").get<int>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("u")) cfg.u = j.at("u").get<std::vector<double>>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("thin")) cfg.thin = j.at("thin").get<int>();
    if (j.contains("json_only")) cfg.json_only = j.at("json_only").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("config parse error: ") + e.what());
  }
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"experiment", experiment_to_string(experiment)},
          {"m", m},
          {"k", k},
          {"T", T},
          {"dt", dt},
          {"n_paths", n_paths},
          {"master_seed", master_seed},
          {"u", u},
          {"output_dir", output_dir},
          {"thin", thin},
          {"json_only", json_only}};
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  RunOutput run;
  switch (config.experiment) {
    case Experiment::UnitaryQv: run = run_unitary_qv(config); break;
    case Experiment::FlagGenerator: run = run_flag_generator(config); break;
    case Experiment::RadialMatch: run = run_radial_match(config); break;
    case Experiment::JacobiStationary: run = run_jacobi_stationary(config); break;
    case Experiment::AreaCovariation: run = run_area_covariation(config); break;
    case Experiment::Martingale: run = run_martingale(config); break;
    case Experiment::CauchyLimit: run = run_cauchy_limit(config); break;
    case Experiment::StiefelWinding: run = run_stiefel_winding(config); break;
    case Experiment::HorizontalLift: run = run_horizontal_lift(config); break;
  }

  ExperimentResult result;
  const double total_paths =
      (config.experiment == Experiment::RadialMatch) ? 2.0 * config.n_paths : config.n_paths;
  const double flagged_fraction = double(run.flagged) / std::max(total_paths, 1.0);

  bool all_checks = true;
  for (const auto& c : run.checks) all_checks = all_checks && c.at("pass").get<bool>();
  result.passed = all_checks && flagged_fraction <= 0.01;

  nlohmann::json summary;
  summary["experiment"] = experiment_to_string(config.experiment);
  summary["config"] = config.to_json();
  summary["library_version"] = kLibraryVersion;
  summary["estimators"] = run.estimators;
  summary["checks"] = run.checks;
  summary["flagged_paths"] = run.flagged;
  summary["flagged_fraction"] = flagged_fraction;
  summary["flagged_details"] = run.flag_details;
  summary["passed"] = result.passed;
  result.summary = summary;

  const auto dir = std::filesystem::path(config.output_dir);
  if (!config.json_only) {
    result.paths_csv_path = (dir / "paths.csv").string();
    run.csv.write(result.paths_csv_path);
  }
  result.summary_path = (dir / "summary.json").string();
  {
    std::ofstream out(result.summary_path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open summary.json for writing");
    out << summary.dump(2) << '\n';
  }

  if (flagged_fraction > 0.01)
    throw RuntimeFailure("flagged fraction " + fmt17(flagged_fraction) +
                         " exceeds 1% (see " + result.summary_path + ")");
  result.exit_code = result.passed ? 0 : 1;
  return result;
}

} // namespace flagflow
