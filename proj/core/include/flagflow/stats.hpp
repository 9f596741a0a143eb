#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "flagflow/errors.hpp"

namespace flagflow {

/// Maximum-likelihood Cauchy fit. When Newton fails to converge (or the
/// sample is degenerate) the initialization values are reported with
/// converged = false instead of throwing.
struct CauchyFit {
  double location = 0.0;
  double scale = 0.0;
  double se_scale = 0.0;
  bool converged = false;
};

CauchyFit cauchy_fit(const std::vector<double>& samples);

struct TestReport {
  double statistic = 0.0;
  double p_approx = 0.0;
  std::size_t n_samples = 0;
  bool pass = false;
};

/// One-sample Kolmogorov-Smirnov test; p from the asymptotic Kolmogorov
/// series truncated at 100 terms.
TestReport ks_test(const std::vector<double>& samples,
                   const std::function<double(double)>& cdf, double level = 0.01);

struct EcfValue {
  std::complex<double> value;
  double se_re = 0.0;
  double se_im = 0.0;
};

/// Empirical characteristic function: sample mean of exp(i u . x).
EcfValue ecf(const std::vector<std::vector<double>>& samples, const std::vector<double>& u);

/// sum_i a_i b_i (realized quadratic covariation of increment streams).
double realized_covariation(const std::vector<double>& incr_a,
                            const std::vector<double>& incr_b);

double cauchy_cdf(double x, double location, double scale);
double beta_cdf(double x, double a, double b);  // regularized incomplete beta

} // namespace flagflow
