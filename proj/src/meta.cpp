#include "prognos/meta.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "prognos/parallel.hpp"
#include "prognos/rng.hpp"
#include "prognos/stats.hpp"

namespace prognos {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Profile log-likelihood: mu is solved in closed form for each tau^2.
double profile_loglik(std::span<const StudyEstimate> studies, double tau2, double* mu_out) {
  double sw = 0.0, swm = 0.0;
  for (const auto& s : studies) {
    double w = 1.0 / (tau2 + s.se * s.se);
    sw += w;
    swm += w * s.value;
  }
  double mu = swm / sw;
  double ll = 0.0;
  for (const auto& s : studies) {
    double v = tau2 + s.se * s.se;
    double d = s.value - mu;
    ll -= 0.5 * (kLog2Pi + std::log(v) + d * d / v);
  }
  if (mu_out) *mu_out = mu;
  return ll;
}

}  // namespace

PooledEstimate pool_random_effects(std::span<const StudyEstimate> input) {
  if (input.empty()) throw ValidationError("random effects: no studies");
  for (const auto& s : input) {
    if (!(s.se > 0.0 && std::isfinite(s.se)))
      throw ValidationError("random effects: study '" + s.dataset_id +
                            "' has non-positive standard error");
    if (!std::isfinite(s.value))
      throw ValidationError("random effects: non-finite study value");
  }

  // Summation happens in a canonical order so the estimate is exactly
  // invariant to the caller's row order.
  std::vector<std::size_t> order(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& lhs = input[a];
    const auto& rhs = input[b];
    return std::tie(lhs.value, lhs.se, lhs.dataset_id) <
           std::tie(rhs.value, rhs.se, rhs.dataset_id);
  });
  std::vector<StudyEstimate> estimates;
  estimates.reserve(input.size());
  for (std::size_t i : order) estimates.push_back(input[i]);

  double value_lo = estimates[0].value, value_hi = estimates[0].value;
  for (const auto& s : estimates) {
    value_lo = std::min(value_lo, s.value);
    value_hi = std::max(value_hi, s.value);
  }
  double spread = value_hi - value_lo;
  double tau2_hi = std::max(4.0 * spread * spread, 1e-12);

  // Coarse scan with the boundary included, then golden-section refinement.
  const int scan_points = 256;
  double best_tau2 = 0.0;
  double best_ll = profile_loglik(estimates, 0.0, nullptr);
  for (int k = 1; k <= scan_points; ++k) {
    double tau2 = tau2_hi * k / scan_points;
    double ll = profile_loglik(estimates, tau2, nullptr);
    if (ll > best_ll) {
      best_ll = ll;
      best_tau2 = tau2;
    }
  }
  if (best_tau2 > 0.0) {
    double step = tau2_hi / scan_points;
    double lo = std::max(0.0, best_tau2 - step);
    double hi = std::min(tau2_hi, best_tau2 + step);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = profile_loglik(estimates, x1, nullptr);
    double f2 = profile_loglik(estimates, x2, nullptr);
    for (int iter = 0; iter < 200 && (b - a) > 1e-14 * (1.0 + b); ++iter) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + phi * (b - a);
        f2 = profile_loglik(estimates, x2, nullptr);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - phi * (b - a);
        f1 = profile_loglik(estimates, x1, nullptr);
      }
    }
    double refined = 0.5 * (a + b);
    double refined_ll = profile_loglik(estimates, refined, nullptr);
    if (refined_ll > best_ll) {
      best_ll = refined_ll;
      best_tau2 = refined;
    }
    // Prefer the exact boundary when it is at least as good.
    if (profile_loglik(estimates, 0.0, nullptr) >= best_ll) best_tau2 = 0.0;
  }

  PooledEstimate pooled;
  pooled.tau2 = best_tau2;
  profile_loglik(estimates, best_tau2, &pooled.mu);

  double sw = 0.0;
  pooled.weights.resize(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    double w = 1.0 / (best_tau2 + estimates[i].se * estimates[i].se);
    pooled.weights[order[i]] = w;  // back to the caller's row order
    sw += w;
  }
  for (auto& w : pooled.weights) w /= sw;

  double se_mu = std::sqrt(1.0 / sw);
  double z = stats::norm_quantile(0.975);
  pooled.ci_lower = pooled.mu - z * se_mu;
  pooled.ci_upper = pooled.mu + z * se_mu;
  return pooled;
}

std::vector<ForestRow> forest_rows(std::span<const StudyEstimate> estimates,
                                   const PooledEstimate& pooled) {
  if (estimates.empty()) throw ValidationError("forest table: no studies");
  const std::string& metric = estimates[0].metric;
  for (const auto& s : estimates)
    if (s.metric != metric)
      throw ValidationError("forest table: mixed metric kinds ('" + metric + "' vs '" +
                            s.metric + "')");
  if (pooled.weights.size() != estimates.size())
    throw ValidationError("forest table: pooled weights do not match studies");

  const double z = stats::norm_quantile(0.975);
  std::vector<ForestRow> rows;
  long total_events = 0, total_n = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& s = estimates[i];
    rows.push_back({s.dataset_id, s.value, s.value - z * s.se, s.value + z * s.se, s.events,
                    s.n, pooled.weights[i], false});
    total_events += s.events;
    total_n += s.n;
  }
  rows.push_back({"pooled", pooled.mu, pooled.ci_lower, pooled.ci_upper, total_events,
                  total_n, 1.0, true});
  return rows;
}

double bootstrap_c_index_se(std::span<const ScoredObservation> obs, int resamples,
                            std::uint64_t seed, int workers) {
  if (resamples < 2) throw ValidationError("bootstrap: need at least 2 resamples");
  const std::size_t n = obs.size();
  std::vector<double> values(static_cast<std::size_t>(resamples),
                             std::numeric_limits<double>::quiet_NaN());
  parallel_for(resamples, workers, [&](long b) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(b)}));
    std::vector<ScoredObservation> sample(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = obs[rng.index(n)];
    CIndexResult r = c_index(sample);
    if (r.defined) values[static_cast<std::size_t>(b)] = r.value;
  });

  double sum = 0.0;
  long count = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  }
  if (count < 2) throw NumericalError("bootstrap: concordance undefined in resamples");
  double mean = sum / count;
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (count - 1));
}

}  // namespace prognos
