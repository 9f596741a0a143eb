#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flagflow/functionals.hpp"
#include "flagflow/jacobi.hpp"
#include "flagflow/stats.hpp"

namespace flagflow {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class Experiment {
  UnitaryQv,
  FlagGenerator,
  RadialMatch,
  JacobiStationary,
  AreaCovariation,
  Martingale,
  CauchyLimit,
  StiefelWinding,
  HorizontalLift,
};

Experiment experiment_from_string(const std::string& name);
std::string experiment_to_string(Experiment e);

/// Run configuration; the JSON config file mirrors these field names
/// exactly.
struct ExperimentConfig {
  Experiment experiment = Experiment::UnitaryQv;
  int m = 1;
  int k = 1;
  double T = 1.0;
  double dt = 1e-3;
  int n_paths = 1;
  std::uint64_t master_seed = 0;
  std::vector<double> u;  // optional frequency vector (k+1 components)
  std::string output_dir = ".";
  int thin = 100;
  bool json_only = false;

  FlagDims dims() const { return FlagDims(m, k); }
  void validate() const;  // throws ConfigInvalid

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ExperimentResult {
  nlohmann::json summary;
  bool passed = false;
  int exit_code = 0;  // 0 pass, 1 verdict failure
  std::string paths_csv_path;   // empty when json_only
  std::string summary_path;
};

/// Executes n_paths independent simulations (path RNG stream index =
/// path_index), writes paths.csv (thinned) and summary.json into
/// output_dir, and returns the verdicts. Throws ConfigInvalid for bad
/// configurations and RuntimeFailure when more than 1% of paths had to be
/// flagged (the summary with flagged-path diagnostics is written first).
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Deterministic in-chart start with all radial blocks at the barycenter:
/// the (k+1)-point DFT matrix tensored with I_m.
UnitaryMatrix dft_start(FlagDims dims);

} // namespace flagflow
