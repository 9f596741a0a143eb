// Acceptance suite: one verdict per criterion, selected by argv[1] (1..13).
// Each run prints exactly one [PASS]/[FAIL] line and exits nonzero on FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flagflow/experiments.hpp"

using namespace flagflow;

namespace {

std::filesystem::path out_dir(const std::string& tag) {
  const auto dir =
      std::filesystem::temp_directory_path() / "flagflow_acceptance" / tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool summary_check(const ExperimentResult& res, const std::string& name) {
  for (const auto& c : res.summary.at("checks"))
    if (c.at("name") == name) return c.at("pass").get<bool>();
  return false;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig base_config(Experiment e, int m, int k, double T, double dt,
                             int n_paths, std::uint64_t seed, const std::string& tag) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  cfg.m = m;
  cfg.k = k;
  cfg.T = T;
  cfg.dt = dt;
  cfg.n_paths = n_paths;
  cfg.master_seed = seed;
  cfg.thin = 1000000000;
  cfg.json_only = true;
  cfg.output_dir = out_dir(tag).string();
  return cfg;
}

// ---- criterion implementations --------------------------------------------

bool criterion_1(std::string& detail) {
  // Unitarity preservation: n=4, dt=1e-3, 1e4 steps, proj_interval=64.
  auto cfg = base_config(Experiment::UnitaryQv, 2, 1, 10.0, 1e-3, 200, 1001, "c1");
  const ExperimentResult res = run_experiment(cfg);
  const double value = res.summary.at("estimators").at("unitarity_residual_max");
  detail = "max ||U*U-I||_F = " + std::to_string(value) + " (< 1e-10)";
  return summary_check(res, "unitarity_residual_max");
}

bool criterion_2(std::string& detail) {
  // Lie-algebra QV normalization: n=4, m=2, 1e5 increments, 3 SE.
  auto cfg = base_config(Experiment::UnitaryQv, 2, 1, 1e-3, 1e-3, 100000, 2001, "c2");
  const ExperimentResult res = run_experiment(cfg);
  const auto fam = res.summary.at("estimators").at("block_qv");
  detail = "z-family over " + fam.at("n_statistics").dump() + " stats, " +
           fam.at("n_over_3se").dump() + " beyond 3 SE, max |z| = " +
           fam.at("max_abs_z").dump();
  return summary_check(res, "block_qv_z_family");
}

bool criterion_3(std::string& detail) {
  // Flag generator oracle at 20 random chart points (5 per (m,k) combo).
  bool pass = true;
  std::ostringstream ss;
  const int combos[4][2] = {{1, 1}, {2, 1}, {1, 2}, {2, 2}};
  for (int i = 0; i < 4; ++i) {
    auto cfg = base_config(Experiment::FlagGenerator, combos[i][0], combos[i][1], 5e-4,
                           5e-4, 8000, 3001 + i, "c3_" + std::to_string(i));
    const ExperimentResult res = run_experiment(cfg);
    const bool ok = summary_check(res, "covariation_z_family") &&
                    summary_check(res, "martingale_drift_z_family");
    pass = pass && ok;
    ss << "(m=" << combos[i][0] << ",k=" << combos[i][1] << ":" << (ok ? "ok" : "FAIL")
       << ") ";
  }
  detail = ss.str();
  return pass;
}

bool criterion_4(std::string& detail) {
  // Radial/Jacobi equivalence: moments at t in {0.25, 1, 4}, 3 combined SE.
  auto cfg = base_config(Experiment::RadialMatch, 2, 1, 4.0, 1e-3, 4000, 4001, "c4");
  const ExperimentResult res = run_experiment(cfg);
  double worst = 0.0;
  for (const auto& m : res.summary.at("estimators").at("moments"))
    worst = std::max(worst, std::abs(m.at("z").get<double>()));
  detail = "worst moment |z| = " + std::to_string(worst) + " (<= 3)";
  return summary_check(res, "radial_jacobi_moment_match");
}

bool criterion_5(std::string& detail) {
  // Eigenfunction identity of the det-power family at 50 interior points.
  const FlagDims combos[4] = {FlagDims(1, 1), FlagDims(2, 1), FlagDims(1, 2),
                              FlagDims(2, 2)};
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const FlagDims dims = combos[i % 4];
    RngStream rng(5001, std::uint64_t(i));
    SimplexPoint point = barycenter_simplex(dims);
    for (int attempt = 0; attempt < 300; ++attempt) {
      const SimplexPoint cand = radial_from_unitary(haar_unitary(dims.n(), rng), dims);
      if (cand.min_eigenvalue() >= 0.05) {
        point = cand;
        break;
      }
    }
    std::vector<double> u(dims.blocks());
    for (auto& uj : u) uj = 0.2 + 1.8 * rng.uniform01();

    auto f = [&](const SimplexPoint& p) {
      double logf = 0.0;
      for (int j = 0; j < p.dims.blocks(); ++j)
        logf += 0.5 * std::abs(u[j]) * det_arg(p.lambda[j]).log_modulus;
      return std::exp(logf);
    };
    const int m = dims.m, n = dims.n();
    double abs_u = 0.0;
    for (double uj : u) abs_u += std::abs(uj);
    double bracket = -double(m) * (n - m) * abs_u;
    double scale = double(m) * (n - m) * abs_u;
    for (int j = 0; j < dims.blocks(); ++j) {
      const EigH e = eigh(point.lambda[j]);
      double tr_inv = 0.0;
      for (double ev : e.eigenvalues) tr_inv += 1.0 / ev;
      bracket += 0.5 * u[j] * u[j] * (tr_inv - m);
      scale += std::abs(0.5 * u[j] * u[j] * (tr_inv - m));
    }
    for (int j = 0; j < dims.blocks(); ++j)
      for (int l = 0; l < dims.blocks(); ++l)
        if (j != l) {
          bracket -= 0.5 * m * std::abs(u[j] * u[l]);
          scale += 0.5 * m * std::abs(u[j] * u[l]);
        }
    const JacobiIndex idx = JacobiIndex::radial(dims);
    const double value = jacobi_generator_apply(f, point, idx, 1e-3);
    const double expected = bracket * f(point);
    const double rel = std::abs(value - expected) / (scale * f(point));
    worst = std::max(worst, rel);
  }
  detail = "worst relative error = " + std::to_string(worst) + " (<= 1e-6)";
  return worst <= 1e-6;
}

bool criterion_6(std::string& detail) {
  // E[D_1^u] = 1 within 3 SE for three frequency vectors.
  const std::vector<std::vector<double>> us = {{0.5, -0.3}, {1.0, 0.0}, {0.2, 0.2}};
  bool pass = true;
  std::ostringstream ss;
  for (std::size_t i = 0; i < us.size(); ++i) {
    auto cfg = base_config(Experiment::Martingale, 1, 1, 1.0, 1e-3, 5000,
                           6001 + std::uint64_t(i), "c6_" + std::to_string(i));
    cfg.u = us[i];
    const ExperimentResult res = run_experiment(cfg);
    const double mean = res.summary.at("estimators").at("mean_D");
    const double z = res.summary.at("estimators").at("z");
    const bool ok = summary_check(res, "martingale_mean");
    pass = pass && ok;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "u%zu: mean=%.4f z=%+.2f%s ", i, mean, z,
                  ok ? "" : " FAIL");
    ss << buf;
  }
  detail = ss.str();
  return pass;
}

bool criterion_7(std::string& detail) {
  // Area covariation structure on a single path.
  auto cfg = base_config(Experiment::AreaCovariation, 2, 1, 1.0, 1e-4, 1, 7001, "c7");
  const ExperimentResult res = run_experiment(cfg);
  const auto& path = res.summary.at("estimators").at("paths").at(0);
  std::ostringstream ss;
  for (const auto& c : path.at("cross"))
    ss << "cross=" << c.at("realized").get<double>() << " (target "
       << c.at("target").get<double>() << ", 10%) ";
  for (const auto& d : path.at("diagonal"))
    ss << "diag_" << d.at("component") << "=" << d.at("realized").get<double>()
       << " vs " << d.at("pathwise_integral").get<double>() << " (5%) ";
  detail = ss.str();
  return summary_check(res, "area_cross_covariation");
}

bool run_cauchy_case(int m, int k, std::uint64_t seed, const std::string& tag,
                     std::string& detail, bool gate_ecf, bool& ecf_pass) {
  auto cfg = base_config(Experiment::CauchyLimit, m, k, 30.0, 1e-3, 4000, seed, tag);
  const ExperimentResult res = run_experiment(cfg);
  std::ostringstream ss;
  for (const auto& f : res.summary.at("estimators").at("cauchy_fits")) {
    ss << "scale_" << f.at("component") << "=" << f.at("scale").get<double>()
       << " (target " << f.at("target_scale").get<double>() << ") ";
  }
  detail += ss.str();
  if (gate_ecf) ecf_pass = summary_check(res, "ecf_factorization");
  return summary_check(res, "cauchy_scale_window");
}

bool criterion_8(std::string& detail) {
  bool ecf_unused = false;
  std::string d1, d2, d3;
  const bool a = run_cauchy_case(1, 1, 8001, "c8a", d1, false, ecf_unused);
  const bool b = run_cauchy_case(2, 1, 8002, "c8b", d2, false, ecf_unused);
  const bool c = run_cauchy_case(1, 2, 8003, "c8c", d3, false, ecf_unused);
  detail = "(a) " + d1 + "(b) " + d2 + "(c) " + d3;
  return a && b && c;
}

bool criterion_9(std::string& detail) {
  // Asymptotic independence via ecf factorization on the (1,2) ensemble
  // (same seed as criterion 8c, so the identical path ensemble).
  bool ecf_pass = false;
  std::string d;
  run_cauchy_case(1, 2, 8003, "c9", d, true, ecf_pass);
  detail = "ecf factorization over a 3x3 grid of u with |u_j| <= 1";
  return ecf_pass;
}

bool criterion_10(std::string& detail) {
  auto cfg = base_config(Experiment::StiefelWinding, 2, 1, 30.0, 1e-3, 3000, 10001, "c10");
  const ExperimentResult res = run_experiment(cfg);
  std::ostringstream ss;
  for (const auto& f : res.summary.at("estimators").at("winding_fits"))
    ss << "scale_" << f.at("component") << "=" << f.at("scale").get<double>() << " ";
  ss << "modulus_residual="
     << res.summary.at("estimators").at("modulus_residual_max").get<double>();
  detail = ss.str();
  return summary_check(res, "winding_scale_window") &&
         summary_check(res, "modulus_identity_max");
}

bool criterion_11(std::string& detail) {
  bool pass = true;
  std::ostringstream ss;
  for (int k : {1, 2}) {
    auto cfg = base_config(Experiment::JacobiStationary, 1, k, 20.0, 1e-3, 3000,
                           11001 + std::uint64_t(k), "c11_k" + std::to_string(k));
    const ExperimentResult res = run_experiment(cfg);
    const double p = res.summary.at("estimators").at("ks_p");
    const double a = res.summary.at("estimators").at("beta_a");
    const double b = res.summary.at("estimators").at("beta_b");
    const bool ok = summary_check(res, "stationary_ks_p");
    pass = pass && ok;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "k=%d Beta(%.0f,%.0f) KS p=%.3f%s ", k, a, b, p,
                  ok ? "" : " FAIL");
    ss << buf;
  }
  detail = ss.str();
  return pass;
}

bool criterion_12(std::string& detail) {
  auto cfg = base_config(Experiment::HorizontalLift, 2, 1, 0.2, 2e-4, 1, 12001, "c12");
  const ExperimentResult res = run_experiment(cfg);
  const auto& est = res.summary.at("estimators");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "||X*X-I||=%.2e |det Theta-1|=%.2e ||p(X)-w||=%.2e",
                est.at("x_unitarity_max").get<double>(),
                est.at("theta_det_residual_max").get<double>(),
                est.at("projection_residual_max").get<double>());
  detail = buf;
  return summary_check(res, "lift_x_unitarity") && summary_check(res, "lift_theta_det") &&
         summary_check(res, "lift_projection");
}

bool criterion_13(std::string& detail) {
  auto cfg = base_config(Experiment::Martingale, 1, 1, 0.05, 1e-3, 50, 13001, "c13_a");
  cfg.thin = 10;
  cfg.json_only = false;
  const ExperimentResult a = run_experiment(cfg);
  cfg.output_dir = out_dir("c13_b").string();
  const ExperimentResult b = run_experiment(cfg);
  const std::string ca = slurp(a.paths_csv_path), cb = slurp(b.paths_csv_path);
  detail = "paths.csv byte-identical across reruns (" + std::to_string(ca.size()) +
           " bytes)";
  return !ca.empty() && ca == cb;
}

} // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1..13>\n");
    return 2;
  }
  const int id = std::atoi(argv[1]);
  static const char* kDescriptions[14] = {
      nullptr,
      "unitarity preservation along 1e4 integrator steps",
      "u(n) block covariation matches -2m delta_ir I_m dt",
      "realized chart covariations match the generator tables; drift is a martingale",
      "projected radial moments match the simplex Jacobi SDE",
      "det-power eigenfunction identity of the simplex generator",
      "exponential martingale has unit mean at t = 1",
      "area cross-covariation m T and diagonal QV clock",
      "Cauchy limit of scaled areas (scale m(n-m))",
      "asymptotic independence of area components",
      "simultaneous Stiefel windings: Cauchy scales and modulus identity",
      "m=1 stationarity against ODE-derived Beta laws",
      "horizontal lift: unitary, special, projects onto the base path",
      "byte-identical paths.csv for identical configs",
  };
  if (id < 1 || id > 13) {
    std::fprintf(stderr, "criterion out of range\n");
    return 2;
  }
  using Fn = bool (*)(std::string&);
  static const Fn kRunners[14] = {nullptr,      criterion_1,  criterion_2,
                                  criterion_3,  criterion_4,  criterion_5,
                                  criterion_6,  criterion_7,  criterion_8,
                                  criterion_9,  criterion_10, criterion_11,
                                  criterion_12, criterion_13};
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = kRunners[id](detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
    pass = false;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] criterion %d: %s — %s (%.1f s)\n", pass ? "PASS" : "FAIL", id,
              kDescriptions[id], detail.c_str(), elapsed);
  return pass ? 0 : 1;
}
