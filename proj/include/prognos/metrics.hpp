#pragma once

#include <span>
#include <vector>

#include "prognos/common.hpp"

namespace prognos {

struct ScoredObservation {
  double risk;
  double time;
  bool event;
};

struct CIndexResult {
  double value = 0.0;
  long long comparable_pairs = 0;
  bool defined = false;
};

// Concordance over ordered pairs (i,j) with T_i < T_j and subject i an event.
// Risk ties among comparable pairs count 0.5. Returns defined=false when no
// comparable pair exists; never a silent 0.5.
CIndexResult c_index(std::span<const ScoredObservation> obs);

struct KMCurve {
  std::vector<double> times;     // distinct event times, ascending
  std::vector<double> survival;  // product-limit estimate after each time
  std::vector<int> at_risk;
  std::vector<int> events;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;

  double survival_at(double t) const;
  // Band at time t; {1,1} before the first event.
  std::pair<double, double> band_at(double t) const;
};

// Product-limit estimator with log-transformed Greenwood confidence bands.
KMCurve kaplan_meier(std::span<const TimeEvent> obs, double conf_level = 0.95);

struct QuartileRow {
  double score_mean = 0.0;
  double km_event_rate = 0.0;  // 1 - S(horizon)
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool truncated = false;  // horizon beyond all follow-up in the group
  int n = 0;
};

// Rank-based risk quartiles; per group, mean risk and the Kaplan-Meier event
// rate at `horizon` years with its confidence interval.
std::vector<QuartileRow> recurrence_rate_by_quartile(std::span<const ScoredObservation> obs,
                                                     double horizon);

struct LogrankResult {
  double chi_square = 0.0;
  double p = 1.0;
  bool defined = false;
};

// Two-group logrank test (observed minus expected over hypergeometric
// variance), p from chi-square with 1 df.
LogrankResult logrank(std::span<const TimeEvent> group_a, std::span<const TimeEvent> group_b);

}  // namespace prognos
