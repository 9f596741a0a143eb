#include "flagflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flagflow {

namespace {

double quantile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * (s.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - double(lo);
  return s[lo] * (1.0 - frac) + s[hi] * frac;
}

} // namespace

CauchyFit cauchy_fit(const std::vector<double>& samples) {
  if (samples.size() < 100) throw LengthMismatch("cauchy_fit: need at least 100 samples");
  const std::size_t n = samples.size();
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  double x0 = quantile_sorted(sorted, 0.5);
  double gamma = 0.5 * (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));

  CauchyFit fit{x0, gamma, 0.0, false};
  if (!(gamma > 0.0)) return fit;  // degenerate sample

  const double init_x0 = x0, init_gamma = gamma;
  double h00 = 0.0, h01 = 0.0, h11 = 0.0;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    double g0 = 0.0, g1 = double(n) / gamma;
    h00 = 0.0;
    h01 = 0.0;
    h11 = -double(n) / (gamma * gamma);
    for (double x : samples) {
      const double z = x - x0;
      const double d = z * z + gamma * gamma;
      g0 += 2.0 * z / d;
      g1 -= 2.0 * gamma / d;
      h00 += 2.0 * (z * z - gamma * gamma) / (d * d);
      h01 -= 4.0 * gamma * z / (d * d);
      h11 += -2.0 / d + 4.0 * gamma * gamma / (d * d);
    }
    if (std::max(std::abs(g0), std::abs(g1)) < 1e-9 * double(n)) {
      converged = true;
      break;
    }
    const double det = h00 * h11 - h01 * h01;
    if (std::abs(det) < 1e-300) break;
    double dx0 = -(h11 * g0 - h01 * g1) / det;
    double dg = -(-h01 * g0 + h00 * g1) / det;
    double step = 1.0;
    while (gamma + step * dg <= 0.0) step *= 0.5;
    x0 += step * dx0;
    gamma += step * dg;
  }

  if (!converged) return CauchyFit{init_x0, init_gamma, 0.0, false};
  fit.location = x0;
  fit.scale = gamma;
  fit.converged = true;
  // Observed Fisher information: covariance = (-H)^{-1}.
  const double det = h00 * h11 - h01 * h01;
  if (det > 0.0) fit.se_scale = std::sqrt(-h00 / det);
  return fit;
}

namespace {

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.75) {
    // Theta-transformed form of the same series; the direct alternating sum
    // needs ~1/lambda terms in this regime.
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double a = (2.0 * k - 1.0) * std::numbers::pi / lambda;
      const double term = std::exp(-a * a / 8.0);
      s += term;
      if (term < 1e-300) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * double(k) * double(k) * lambda * lambda);
    q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

} // namespace

TestReport ks_test(const std::vector<double>& samples,
                   const std::function<double(double)>& cdf, double level) {
  if (samples.size() < 50) throw LengthMismatch("ks_test: need at least 50 samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double n = double(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max(d, std::abs(f - double(i + 1) / n));
    d = std::max(d, std::abs(f - double(i) / n));
  }
  TestReport report;
  report.statistic = d;
  report.n_samples = sorted.size();
  report.p_approx = kolmogorov_q(std::sqrt(n) * d);
  report.pass = report.p_approx > level;
  return report;
}

EcfValue ecf(const std::vector<std::vector<double>>& samples, const std::vector<double>& u) {
  if (samples.size() < 100) throw LengthMismatch("ecf: need at least 100 samples");
  double sr = 0.0, si = 0.0, srr = 0.0, sii = 0.0;
  for (const auto& x : samples) {
    if (x.size() != u.size()) throw LengthMismatch("ecf: sample/u dimension mismatch");
    double dot = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) dot += u[j] * x[j];
    const double c = std::cos(dot), s = std::sin(dot);
    sr += c;
    si += s;
    srr += c * c;
    sii += s * s;
  }
  const double n = double(samples.size());
  EcfValue out;
  out.value = {sr / n, si / n};
  out.se_re = std::sqrt(std::max(srr / n - (sr / n) * (sr / n), 0.0) / n);
  out.se_im = std::sqrt(std::max(sii / n - (si / n) * (si / n), 0.0) / n);
  return out;
}

double realized_covariation(const std::vector<double>& incr_a,
                            const std::vector<double>& incr_b) {
  if (incr_a.size() != incr_b.size())
    throw LengthMismatch("realized_covariation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < incr_a.size(); ++i) s += incr_a[i] * incr_b[i];
  return s;
}

double cauchy_cdf(double x, double location, double scale) {
  return 0.5 + std::atan((x - location) / scale) / std::numbers::pi;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  const double eps = 1e-15, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

} // namespace

double beta_cdf(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double bt = std::exp(lbeta + a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

} // namespace flagflow
