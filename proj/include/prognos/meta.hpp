#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prognos/metrics.hpp"

namespace prognos {

struct StudyEstimate {
  std::string dataset_id;
  std::string metric;  // e.g. "c_index", "log_hr"
  double value = 0.0;
  double se = 0.0;
  long n = 0;
  long events = 0;
};

struct PooledEstimate {
  double mu = 0.0;
  double tau2 = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::vector<double> weights;  // normalized, input order
};

// Maximum-likelihood random effects: M_i ~ Normal(mu, tau^2 + se_i^2), tau^2
// constrained nonnegative. When tau^2 lands on the boundary the pooled mean
// is exactly the inverse-variance fixed-effect mean.
PooledEstimate pool_random_effects(std::span<const StudyEstimate> estimates);

struct ForestRow {
  std::string label;
  double estimate = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  long events = 0;
  long n = 0;
  double weight = 0.0;
  bool pooled = false;
};

// Per-study rows in input order plus the pooled row. All studies must carry
// the same metric kind.
std::vector<ForestRow> forest_rows(std::span<const StudyEstimate> estimates,
                                   const PooledEstimate& pooled);

// Nonparametric bootstrap standard error of the concordance index; resamples
// with undefined concordance are skipped. Deterministic per seed.
double bootstrap_c_index_se(std::span<const ScoredObservation> obs, int resamples,
                            std::uint64_t seed, int workers = 1);

}  // namespace prognos
