#include "prognos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prognos/stats.hpp"

namespace prognos {

namespace {

void validate_obs(std::span<const ScoredObservation> obs) {
  for (const auto& o : obs) {
    if (!std::isfinite(o.risk)) throw ValidationError("non-finite risk score");
    if (!(o.time > 0.0 && std::isfinite(o.time))) throw ValidationError("non-positive time");
  }
}

void validate_obs(std::span<const TimeEvent> obs) {
  for (const auto& o : obs)
    if (!(o.time > 0.0 && std::isfinite(o.time))) throw ValidationError("non-positive time");
}

// Fenwick tree over risk ranks; supports point add and prefix-sum count.
class Fenwick {
 public:
  explicit Fenwick(int n) : tree_(n + 1, 0) {}

  void add(int i, int delta) {
    for (++i; i < static_cast<int>(tree_.size()); i += i & -i) tree_[i] += delta;
  }

  // Count of entries with rank <= i.
  long long prefix(int i) const {
    long long s = 0;
    for (++i; i > 0; i -= i & -i) s += tree_[i];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace

CIndexResult c_index(std::span<const ScoredObservation> obs) {
  validate_obs(obs);
  const int n = static_cast<int>(obs.size());

  std::vector<double> risks(n);
  for (int i = 0; i < n; ++i) risks[i] = obs[i].risk;
  std::vector<double> sorted_risks = risks;
  std::sort(sorted_risks.begin(), sorted_risks.end());
  sorted_risks.erase(std::unique(sorted_risks.begin(), sorted_risks.end()), sorted_risks.end());
  auto rank_of = [&](double r) {
    return static_cast<int>(std::lower_bound(sorted_risks.begin(), sorted_risks.end(), r) -
                            sorted_risks.begin());
  };

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return obs[a].time < obs[b].time; });

  Fenwick tree(static_cast<int>(sorted_risks.size()));
  for (int i = 0; i < n; ++i) tree.add(rank_of(risks[i]), 1);

  double concordant = 0.0;
  long long comparable = 0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && obs[order[j]].time == obs[order[i]].time) ++j;
    // Subjects at the current time leave the tree first: comparable partners
    // must have strictly larger time.
    for (int k = i; k < j; ++k) tree.add(rank_of(risks[order[k]]), -1);
    long long remaining = n - j;
    if (remaining > 0) {
      for (int k = i; k < j; ++k) {
        if (!obs[order[k]].event) continue;
        int r = rank_of(risks[order[k]]);
        long long below = r > 0 ? tree.prefix(r - 1) : 0;
        long long tied = tree.prefix(r) - below;
        comparable += remaining;
        concordant += static_cast<double>(below) + 0.5 * static_cast<double>(tied);
      }
    }
    i = j;
  }

  if (comparable == 0) return {std::numeric_limits<double>::quiet_NaN(), 0, false};
  return {concordant / static_cast<double>(comparable), comparable, true};
}

KMCurve kaplan_meier(std::span<const TimeEvent> obs, double conf_level) {
  if (obs.empty()) throw ValidationError("kaplan_meier: empty input");
  validate_obs(obs);

  std::vector<TimeEvent> sorted(obs.begin(), obs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const TimeEvent& a, const TimeEvent& b) { return a.time < b.time; });

  const double z = stats::norm_quantile(0.5 + conf_level / 2.0);
  KMCurve curve;
  double survival = 1.0;
  double greenwood_log = 0.0;  // sum of d / (n (n - d)) on the log-survival scale
  const int n = static_cast<int>(sorted.size());
  int i = 0;
  while (i < n) {
    int j = i;
    int deaths = 0;
    while (j < n && sorted[j].time == sorted[i].time) {
      if (sorted[j].event) ++deaths;
      ++j;
    }
    if (deaths > 0) {
      int at_risk = n - i;  // censored at t stay at risk for events at t
      survival *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.times.push_back(sorted[i].time);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(deaths);
      curve.survival.push_back(survival);
      if (at_risk > deaths && survival > 0.0) {
        greenwood_log += static_cast<double>(deaths) /
                         (static_cast<double>(at_risk) * (at_risk - deaths));
        double half = z * std::sqrt(greenwood_log);
        curve.ci_lower.push_back(survival * std::exp(-half));
        curve.ci_upper.push_back(std::min(1.0, survival * std::exp(half)));
      } else {
        curve.ci_lower.push_back(0.0);
        curve.ci_upper.push_back(0.0);
      }
    }
    i = j;
  }
  return curve;
}

double KMCurve::survival_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

std::pair<double, double> KMCurve::band_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return {1.0, 1.0};
  std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
  return {ci_lower[k], ci_upper[k]};
}

std::vector<QuartileRow> recurrence_rate_by_quartile(std::span<const ScoredObservation> obs,
                                                     double horizon) {
  validate_obs(obs);
  const int n = static_cast<int>(obs.size());
  if (n < 4) throw ValidationError("quartile analysis needs at least 4 subjects");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return obs[a].risk < obs[b].risk; });

  std::vector<QuartileRow> rows(4);
  for (int g = 0; g < 4; ++g) {
    int lo = g * n / 4;
    int hi = (g + 1) * n / 4;
    std::vector<TimeEvent> group;
    double score_sum = 0.0;
    double max_time = 0.0;
    for (int k = lo; k < hi; ++k) {
      const auto& o = obs[order[k]];
      group.push_back({o.time, o.event});
      score_sum += o.risk;
      max_time = std::max(max_time, o.time);
    }
    QuartileRow& row = rows[g];
    row.n = hi - lo;
    row.score_mean = score_sum / row.n;
    double at = horizon;
    if (horizon > max_time) {
      at = max_time;
      row.truncated = true;
    }
    KMCurve km = kaplan_meier(group);
    row.km_event_rate = 1.0 - km.survival_at(at);
    auto [lo_s, hi_s] = km.band_at(at);
    row.ci_lower = std::max(0.0, 1.0 - hi_s);
    row.ci_upper = 1.0 - lo_s;
  }
  return rows;
}

LogrankResult logrank(std::span<const TimeEvent> group_a, std::span<const TimeEvent> group_b) {
  if (group_a.empty() || group_b.empty())
    throw ValidationError("logrank: both groups must be nonempty");
  validate_obs(group_a);
  validate_obs(group_b);

  struct Row {
    double time;
    bool event;
    int group;
  };
  std::vector<Row> rows;
  rows.reserve(group_a.size() + group_b.size());
  for (const auto& o : group_a) rows.push_back({o.time, o.event, 0});
  for (const auto& o : group_b) rows.push_back({o.time, o.event, 1});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });

  const int n_total = static_cast<int>(rows.size());
  long long n_a = static_cast<long long>(group_a.size());
  long long n_all = n_total;

  double observed_a = 0.0, expected_a = 0.0, variance = 0.0;
  int i = 0;
  while (i < n_total) {
    int j = i;
    int d_all = 0, d_a = 0;
    while (j < n_total && rows[j].time == rows[i].time) {
      if (rows[j].event) {
        ++d_all;
        if (rows[j].group == 0) ++d_a;
      }
      ++j;
    }
    if (d_all > 0) {
      double na = static_cast<double>(n_a);
      double nn = static_cast<double>(n_all);
      observed_a += d_a;
      expected_a += d_all * na / nn;
      if (n_all > 1)
        variance += d_all * (na / nn) * (1.0 - na / nn) * (nn - d_all) / (nn - 1.0);
    }
    for (int k = i; k < j; ++k) {
      --n_all;
      if (rows[k].group == 0) --n_a;
    }
    i = j;
  }

  if (variance <= 0.0) return {0.0, 1.0, false};
  double diff = observed_a - expected_a;
  double chi = diff * diff / variance;
  return {chi, stats::chisq1_sf(chi), true};
}

}  // namespace prognos
