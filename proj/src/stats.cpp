#include "prognos/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace prognos::stats {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLog2Pi = 1.8378770664093453;
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLog2Pi); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double log_norm_sf(double x) {
  if (x < 30.0) {
    double sf = norm_sf(x);
    if (sf > 0.0) return std::log(sf);
  }
  // Asymptotic expansion of the Mills ratio for the far upper tail.
  double x2 = x * x;
  return -0.5 * x2 - 0.5 * kLog2Pi - std::log(x) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// Acklam's rational approximation followed by one Halley refinement step.
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");

  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};

  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double chisq1_sf(double x) {
  if (x < 0.0) throw std::domain_error("chisq1_sf: negative statistic");
  return std::erfc(std::sqrt(0.5 * x));
}

double two_sided_p(double z) { return std::erfc(std::fabs(z) / kSqrt2); }

double percentile_linear(const double* values, long n, double pct) {
  if (n <= 0) throw std::invalid_argument("percentile_linear: empty input");
  if (!(pct >= 0.0 && pct <= 100.0))
    throw std::invalid_argument("percentile_linear: pct outside [0,100]");
  std::vector<double> v(values, values + n);
  std::sort(v.begin(), v.end());
  if (n == 1) return v[0];
  double h = (static_cast<double>(n) - 1.0) * pct / 100.0;
  long lo = static_cast<long>(std::floor(h));
  if (lo >= n - 1) return v[n - 1];
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace prognos::stats
