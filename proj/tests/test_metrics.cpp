#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prognos/metrics.hpp"
#include "prognos/rng.hpp"

using namespace prognos;

namespace {

// O(n^2) pair enumeration, kept deliberately independent of the production
// sweep. Comparable: T_i < T_j with subject i an event; risk ties count 0.5.
CIndexResult c_index_bruteforce(const std::vector<ScoredObservation>& obs) {
  double concordant = 0.0;
  long long comparable = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!obs[i].event) continue;
    for (std::size_t j = 0; j < obs.size(); ++j) {
      if (obs[i].time >= obs[j].time) continue;
      ++comparable;
      if (obs[i].risk > obs[j].risk)
        concordant += 1.0;
      else if (obs[i].risk == obs[j].risk)
        concordant += 0.5;
    }
  }
  if (comparable == 0) return {0.0, 0, false};
  return {concordant / comparable, comparable, true};
}

std::vector<ScoredObservation> random_instance(Rng& rng, int n, bool allow_risk_ties) {
  std::vector<ScoredObservation> obs(n);
  for (int i = 0; i < n; ++i) {
    double risk = allow_risk_ties ? std::floor(rng.uniform(0.0, 6.0)) : rng.normal();
    double time = rng.uniform01() < 0.3 ? 1.0 + rng.index(5) : rng.uniform(0.2, 10.0);
    obs[i] = {risk, time, rng.uniform01() < 0.6};
  }
  return obs;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("c-index on perfectly ordered and anti-ordered risks") {
  std::vector<ScoredObservation> ordered = {{0.9, 1, true}, {0.5, 2, true}, {0.1, 3, true}};
  CHECK(c_index(ordered).value == 1.0);
  std::vector<ScoredObservation> reversed = {{0.1, 1, true}, {0.5, 2, true}, {0.9, 3, true}};
  CHECK(c_index(reversed).value == 0.0);
}

TEST_CASE("c-index counts only comparable pairs") {
  std::vector<ScoredObservation> obs = {
      {0.8, 2, true}, {0.9, 1, false}, {0.2, 3, true}};
  CIndexResult r = c_index(obs);
  CHECK(r.defined);
  CHECK(r.comparable_pairs == 1);
  CHECK(r.value == 1.0);
}

TEST_CASE("c-index reports undefined instead of a silent 0.5") {
  std::vector<ScoredObservation> all_censored = {{0.4, 1, false}, {0.6, 2, false}};
  CIndexResult r = c_index(all_censored);
  CHECK_FALSE(r.defined);
  CHECK(r.comparable_pairs == 0);

  // only the latest subject has an event: nobody outlives it
  std::vector<ScoredObservation> late_event = {{0.4, 1, false}, {0.6, 2, true}};
  CHECK_FALSE(c_index(late_event).defined);
}

TEST_CASE("c-index matches brute-force enumeration on random instances") {
  Rng rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng.index(499));
    auto obs = random_instance(rng, n, trial % 2 == 0);
    CIndexResult fast = c_index(obs);
    CIndexResult slow = c_index_bruteforce(obs);
    REQUIRE(fast.defined == slow.defined);
    if (fast.defined) {
      CHECK(fast.comparable_pairs == slow.comparable_pairs);
      CHECK(fast.value == slow.value);  // both are exact rationals over doubles
    }
  }
}

TEST_CASE("c-index negation identity and monotone invariance") {
  Rng rng(99);
  auto obs = random_instance(rng, 120, false);
  CIndexResult base = c_index(obs);

  std::vector<ScoredObservation> negated = obs;
  for (auto& o : negated) o.risk = -o.risk;
  CHECK(c_index(negated).value == doctest::Approx(1.0 - base.value).epsilon(1e-12));

  std::vector<ScoredObservation> transformed = obs;
  for (auto& o : transformed) o.risk = std::exp(2.0 * o.risk) + 3.0;
  CHECK(c_index(transformed).value == doctest::Approx(base.value).epsilon(1e-12));
  CHECK(c_index(transformed).comparable_pairs == base.comparable_pairs);
}

TEST_CASE("kaplan-meier product-limit hand values") {
  std::vector<TimeEvent> obs = {{1, true}, {2, false}, {3, true}};
  KMCurve km = kaplan_meier(obs);
  REQUIRE(km.times.size() == 2);
  CHECK(km.survival_at(1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(km.survival_at(2.5) == doctest::Approx(2.0 / 3.0));
  CHECK(km.survival_at(3.0) == doctest::Approx(0.0));
  CHECK(km.at_risk[0] == 3);
  CHECK(km.at_risk[1] == 1);
}

TEST_CASE("kaplan-meier edge cases") {
  std::vector<TimeEvent> censored = {{1, false}, {2, false}};
  KMCurve flat = kaplan_meier(censored);
  CHECK(flat.times.empty());
  CHECK(flat.survival_at(5.0) == 1.0);

  std::vector<TimeEvent> single = {{1, true}};
  CHECK(kaplan_meier(single).survival_at(1.0) == 0.0);
}

TEST_CASE("kaplan-meier is a non-increasing step function in [0,1]") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TimeEvent> obs;
    int n = 3 + static_cast<int>(rng.index(60));
    for (int i = 0; i < n; ++i)
      obs.push_back({0.1 + rng.uniform(0.0, 8.0), rng.uniform01() < 0.7});
    KMCurve km = kaplan_meier(obs);
    double previous = 1.0;
    for (std::size_t k = 0; k < km.times.size(); ++k) {
      CHECK(km.survival[k] >= 0.0);
      CHECK(km.survival[k] <= previous + 1e-15);
      CHECK(km.ci_lower[k] <= km.survival[k] + 1e-12);
      CHECK(km.ci_upper[k] + 1e-12 >= km.survival[k]);
      previous = km.survival[k];
      if (k > 0) CHECK(km.at_risk[k] < km.at_risk[k - 1]);
    }
  }
}

TEST_CASE("kaplan-meier equals empirical survival without censoring") {
  Rng rng(21);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < 40; ++i) obs.push_back({rng.uniform(0.5, 9.5), true});
  KMCurve km = kaplan_meier(obs);
  // with all events, 1 - S(max) = 1 and S(t) is the empirical tail fraction
  CHECK(km.survival.back() == doctest::Approx(0.0));
  double t = 4.0;
  double empirical =
      static_cast<double>(std::count_if(obs.begin(), obs.end(),
                                        [&](const TimeEvent& o) { return o.time > t; })) /
      obs.size();
  CHECK(km.survival_at(t) == doctest::Approx(empirical).epsilon(1e-12));
}

TEST_CASE("quartile table: exchangeable risks give equal rates") {
  std::vector<ScoredObservation> obs;
  for (int i = 0; i < 40; ++i)
    obs.push_back({static_cast<double>(i % 4), 2.0 + (i % 5), i % 2 == 0});
  // identical outcome pattern within each risk level; groups coincide
  auto rows = recurrence_rate_by_quartile(obs, 10.0);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(row.n == 10);
}

TEST_CASE("quartile table: one subject per group at n=4") {
  std::vector<ScoredObservation> obs = {
      {0.1, 5, true}, {0.2, 4, true}, {0.3, 3, true}, {0.4, 2, true}};
  auto rows = recurrence_rate_by_quartile(obs, 10.0);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(row.n == 1);
  CHECK(rows[0].score_mean == doctest::Approx(0.1));
  CHECK(rows[3].score_mean == doctest::Approx(0.4));
}

TEST_CASE("quartile table: monotone planted hazards give monotone rates") {
  Rng rng(5);
  std::vector<ScoredObservation> obs;
  const double horizon = 5.0;
  for (int i = 0; i < 4000; ++i) {
    double risk = rng.uniform(-1.5, 1.5);
    double rate = std::exp(-1.0 + risk);
    obs.push_back({risk, rng.exponential(rate), true});
  }
  auto rows = recurrence_rate_by_quartile(obs, horizon);
  for (int g = 1; g < 4; ++g) CHECK(rows[g].km_event_rate >= rows[g - 1].km_event_rate);
  // closed form 1 - exp(-lambda h) at the group's mean risk, within a few points
  for (const auto& row : rows) {
    double lambda = std::exp(-1.0 + row.score_mean);
    CHECK(row.km_event_rate ==
          doctest::Approx(1.0 - std::exp(-lambda * horizon)).epsilon(0.2));
  }
}

TEST_CASE("quartile table: horizon beyond follow-up is truncated") {
  std::vector<ScoredObservation> obs = {
      {0.1, 1, true}, {0.2, 2, true}, {0.3, 3, true}, {0.4, 4, true}};
  auto rows = recurrence_rate_by_quartile(obs, 100.0);
  for (const auto& row : rows) CHECK(row.truncated);
  CHECK_THROWS_AS(
      recurrence_rate_by_quartile(std::vector<ScoredObservation>{{0.1, 1, true}}, 10.0),
      ValidationError);
}

TEST_CASE("logrank: identical groups score zero") {
  std::vector<TimeEvent> group = {{1, true}, {2, false}, {3, true}, {4, true}};
  LogrankResult r = logrank(group, group);
  CHECK(r.chi_square == doctest::Approx(0.0));
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("logrank: single-event-time hand computation") {
  // A: two events at t=1; B: two censored at t=2. At t=1: n=4, d=2, n_A=2.
  // E_A = 2 * 2/4 = 1, V = 2 * (1/2)(1/2) * (4-2)/(4-1) = 1/3.
  // O_A - E_A = 1, chi2 = 1 / (1/3) = 3.
  std::vector<TimeEvent> a = {{1, true}, {1, true}};
  std::vector<TimeEvent> b = {{2, false}, {2, false}};
  LogrankResult r = logrank(a, b);
  REQUIRE(r.defined);
  CHECK(r.chi_square == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.p > 0.0);
  CHECK(r.p <= 1.0);
}

TEST_CASE("logrank: label swap leaves the statistic unchanged") {
  Rng rng(17);
  std::vector<TimeEvent> a, b;
  for (int i = 0; i < 30; ++i) a.push_back({rng.exponential(0.5), rng.uniform01() < 0.8});
  for (int i = 0; i < 25; ++i) b.push_back({rng.exponential(1.0), rng.uniform01() < 0.8});
  LogrankResult ab = logrank(a, b);
  LogrankResult ba = logrank(b, a);
  CHECK(ab.chi_square == doctest::Approx(ba.chi_square).epsilon(1e-12));
  CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-12));
  CHECK(ab.chi_square >= 0.0);
}

TEST_CASE("logrank: degenerate structure reported undefined") {
  std::vector<TimeEvent> a = {{2, true}};
  std::vector<TimeEvent> b = {{1, false}};
  // the only event happens when group A is the whole risk set
  LogrankResult r = logrank(a, b);
  CHECK_FALSE(r.defined);
  CHECK_THROWS_AS(logrank({}, b), ValidationError);
}

}  // TEST_SUITE
