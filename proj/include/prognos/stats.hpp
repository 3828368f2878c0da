#pragma once

namespace prognos::stats {

double norm_pdf(double x);
double norm_cdf(double x);
// Upper tail P(Z > x), accurate far into the tail.
double norm_sf(double x);
double log_norm_sf(double x);
// Inverse of norm_cdf on (0,1).
double norm_quantile(double p);
// Upper tail of chi-square with 1 degree of freedom.
double chisq1_sf(double x);
// Two-sided p-value for a standard normal z statistic.
double two_sided_p(double z);

// Inclusive percentile with linear interpolation between order statistics.
// `pct` in [0,100]; input need not be sorted.
double percentile_linear(const double* values, long n, double pct);

}  // namespace prognos::stats
