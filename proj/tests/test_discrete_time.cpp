#include <doctest.h>

#include <cmath>
#include <vector>

#include "prognos/discrete_time.hpp"
#include "prognos/metrics.hpp"
#include "prognos/rng.hpp"

using namespace prognos;

namespace {

IntervalGrid grid012() { return IntervalGrid{{0.0, 1.0, 2.0}}; }

// Direct evaluation of the displayed likelihood terms from hazards and paths.
double dt_oracle(const std::vector<Eigen::VectorXd>& hazards,
                 const std::vector<std::vector<int>>& paths) {
  double nll = 0.0;
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t j = 0; j < paths[i].size(); ++j) {
      double lambda = hazards[i][static_cast<Eigen::Index>(j)];
      nll -= paths[i][j] ? std::log(lambda) : std::log(1.0 - lambda);
    }
  return nll;
}

DiscreteTimeModel zero_model(const IntervalGrid& grid, int dim, int hidden,
                             std::uint64_t seed = 0) {
  DiscreteTimeModel model;
  model.grid = grid;
  model.stats = Standardizer::identity(dim);
  Rng rng(seed);
  model.scorer = Mlp::init(dim, hidden, grid.intervals(), rng);
  return model;
}

}  // namespace

TEST_SUITE("discrete_time") {

TEST_CASE("discretize boundary cases") {
  IntervalGrid grid = grid012();  // (0,1], (1,2], (2,inf)
  CHECK(discretize({2.0, true}, grid) == std::vector<int>{0, 1});
  CHECK(discretize({0.5, false}, grid).empty());
  CHECK(discretize({5.0, true}, grid) == std::vector<int>{0, 0, 1});
  CHECK(discretize({1.0, false}, grid) == std::vector<int>{0});
  CHECK(discretize({2.5, false}, grid) == std::vector<int>{0, 0});
  CHECK(discretize({0.4, true}, grid) == std::vector<int>{1});
  CHECK_THROWS_AS(discretize({0.0, true}, grid), ValidationError);
}

TEST_CASE("discretize is reconstruction-consistent") {
  Rng rng(5);
  IntervalGrid grid{{0.0, 0.8, 2.1, 4.4, 7.0}};
  for (int trial = 0; trial < 300; ++trial) {
    TimeEvent obs{rng.uniform(0.05, 10.0), rng.uniform01() < 0.5};
    std::vector<int> path = discretize(obs, grid);
    if (obs.event) {
      REQUIRE_FALSE(path.empty());
      CHECK(path.back() == 1);
      CHECK(static_cast<int>(path.size()) - 1 == grid.interval_index(obs.time));
      for (std::size_t j = 0; j + 1 < path.size(); ++j) CHECK(path[j] == 0);
    } else {
      for (int d : path) CHECK(d == 0);
    }
  }
}

TEST_CASE("grid from event-time quantiles") {
  std::vector<TimeEvent> obs;
  for (int i = 1; i <= 80; ++i) obs.push_back({i / 8.0, i % 2 == 0});
  IntervalGrid grid = IntervalGrid::from_event_quantiles(obs, 8);
  CHECK(grid.intervals() >= 2);
  CHECK(grid.cut_points.front() == 0.0);
  for (std::size_t k = 1; k < grid.cut_points.size(); ++k)
    CHECK(grid.cut_points[k] > grid.cut_points[k - 1]);
  CHECK_THROWS_AS((IntervalGrid{{0.0, 2.0, 2.0}}).validate(), ValidationError);
}

TEST_CASE("negative log-likelihood closed forms at zero logits") {
  IntervalGrid grid = grid012();
  DiscreteTimeModel model = zero_model(grid, 2, 0);
  model.scorer.w2.setZero();
  model.scorer.b2.setZero();  // lambda = 0.5 in every interval

  Eigen::MatrixXd X(1, 2);
  X << 0.3, -0.4;
  std::vector<TimeEvent> one_event = {{0.5, true}};  // event in interval 1
  CHECK(dt_negloglik(model, X, one_event) == doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  std::vector<TimeEvent> censored = {{2.0, false}};  // survives 2 full intervals
  CHECK(dt_negloglik(model, X, censored) ==
        doctest::Approx(-2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("negative log-likelihood matches term-by-term oracle") {
  Rng rng(402);
  IntervalGrid grid{{0.0, 1.0, 2.5, 4.0}};
  const int n = 6, dim = 3;
  DiscreteTimeModel model = zero_model(grid, dim, 4, 99);
  Eigen::MatrixXd X(n, dim);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) X(i, j) = rng.normal();
    obs.push_back({rng.uniform(0.2, 6.0), rng.uniform01() < 0.5});
  }
  std::vector<Eigen::VectorXd> hazards;
  std::vector<std::vector<int>> paths;
  for (int i = 0; i < n; ++i) {
    hazards.push_back(model.hazards(X.row(i).transpose()));
    paths.push_back(discretize(obs[i], grid));
  }
  CHECK(dt_negloglik(model, X, obs) ==
        doctest::Approx(dt_oracle(hazards, paths)).epsilon(1e-10));
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(73);
  IntervalGrid grid{{0.0, 1.0, 3.0}};
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12, dim = 4;
    int hidden = trial % 2 == 0 ? 5 : 0;
    DiscreteTimeModel model = zero_model(grid, dim, hidden, 1000 + trial);
    Eigen::MatrixXd X(n, dim);
    std::vector<TimeEvent> obs;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) X(i, j) = rng.normal();
      obs.push_back({rng.uniform(0.2, 5.0), rng.uniform01() < 0.6});
    }
    Eigen::VectorXd grad = dt_negloglik_grad(model, X, obs);
    Eigen::VectorXd params = model.scorer.flatten();
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      Eigen::VectorXd up = params, down = params;
      up[k] += h;
      down[k] -= h;
      DiscreteTimeModel m_up = model, m_down = model;
      m_up.scorer.unflatten(up);
      m_down.scorer.unflatten(down);
      double fd = (dt_negloglik(m_up, X, obs) - dt_negloglik(m_down, X, obs)) / (2 * h);
      CHECK(std::abs(grad[k] - fd) <= 1e-5 * std::max({1.0, std::abs(grad[k]), std::abs(fd)}));
    }
  }
}

TEST_CASE("survival curve closed forms and properties") {
  IntervalGrid grid = grid012();
  DiscreteTimeModel model = zero_model(grid, 2, 0);
  model.scorer.w2.setZero();
  model.scorer.b2.setZero();
  Eigen::VectorXd x(2);
  x << 1.0, -1.0;
  StepFunction s = model.survival_curve(x);
  CHECK(s.at(0.0) == 1.0);
  CHECK(s.at(1.0) == doctest::Approx(0.5));
  CHECK(s.at(2.0) == doctest::Approx(0.25));
  CHECK(s.at(100.0) == doctest::Approx(0.25));

  model.scorer.b2.setConstant(-40.0);  // lambda ~ 0
  StepFunction flat = model.survival_curve(x);
  CHECK(flat.at(2.0) == doctest::Approx(1.0));

  Rng rng(6);
  DiscreteTimeModel random_model = zero_model(grid, 2, 8, 7);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd v(2);
    v << rng.normal(), rng.normal();
    StepFunction curve = random_model.survival_curve(v);
    double previous = 1.0;
    for (double value : curve.values) {
      CHECK(value >= 0.0);
      CHECK(value <= previous + 1e-15);
      previous = value;
    }
  }
}

TEST_CASE("all subjects censored before the first cut: loss ignores the scorer") {
  IntervalGrid grid = grid012();
  Eigen::MatrixXd X(3, 2);
  X << 1, 2, -1, 0.5, 0.2, -0.3;
  std::vector<TimeEvent> obs = {{0.5, false}, {0.9, false}, {0.2, false}};
  DiscreteTimeModel a = zero_model(grid, 2, 4, 1);
  DiscreteTimeModel b = zero_model(grid, 2, 4, 2);
  CHECK(dt_negloglik(a, X, obs) == 0.0);
  CHECK(dt_negloglik(b, X, obs) == 0.0);

  // training on such data leaves only the regularizer: weights shrink to zero
  ElasticNetConfig cfg;
  cfg.alpha = 0.5;
  cfg.gamma = 0.5;
  cfg.step_size = 0.05;
  cfg.max_epochs = 400;
  cfg.seed = 3;
  DiscreteTimeFit fit = fit_discrete_time(X, obs, grid, cfg, 4);
  CHECK(fit.model.scorer.w1.cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(fit.model.scorer.w2.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("full-batch descent decreases the loss on a convex linear instance") {
  Rng rng(88);
  IntervalGrid grid{{0.0, 1.0, 2.0, 3.0}};
  const int n = 60, dim = 3;
  Eigen::MatrixXd X(n, dim);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) X(i, j) = rng.normal();
    obs.push_back({rng.uniform(0.2, 4.5), rng.uniform01() < 0.6});
  }
  DiscreteTimeModel model = zero_model(grid, dim, 0, 11);
  Eigen::VectorXd params = model.scorer.flatten();
  double previous = dt_negloglik(model, X, obs);
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd grad = dt_negloglik_grad(model, X, obs);
    params -= 1e-3 * grad;
    model.scorer.unflatten(params);
    double current = dt_negloglik(model, X, obs);
    CHECK(current <= previous + 1e-9);
    previous = current;
  }
}

TEST_CASE("two separable clusters recover their planted hazards") {
  Rng rng(314);
  IntervalGrid grid{{0.0, 1.0, 2.0}};
  const int n = 2000, dim = 2;
  Eigen::MatrixXd X(n, dim);
  std::vector<TimeEvent> obs;
  std::vector<int> cluster(n);
  for (int i = 0; i < n; ++i) {
    cluster[i] = i % 2;
    double center = cluster[i] == 0 ? -2.0 : 2.0;
    X(i, 0) = center + 0.3 * rng.normal();
    X(i, 1) = rng.normal();
    double hazard = cluster[i] == 0 ? 0.1 : 0.7;
    // draw a discrete interval geometrically from the per-interval hazard
    int interval = 0;
    while (interval < 50 && rng.uniform01() > hazard) ++interval;
    double t = interval + 0.5;
    obs.push_back({t, true});
  }
  ElasticNetConfig cfg;
  cfg.alpha = 1e-4;
  cfg.gamma = 0.5;
  cfg.step_size = 0.05;
  cfg.max_epochs = 500;
  cfg.seed = 17;
  DiscreteTimeFit fit = fit_discrete_time(X, obs, grid, cfg, 16);

  double mean_low = 0.0, mean_high = 0.0;
  int n_low = 0, n_high = 0;
  for (int i = 0; i < n; ++i) {
    double lambda = fit.model.hazards(X.row(i).transpose())[0];
    if (cluster[i] == 0) {
      mean_low += lambda;
      ++n_low;
    } else {
      mean_high += lambda;
      ++n_high;
    }
  }
  CHECK(mean_low / n_low == doctest::Approx(0.1).epsilon(0.5));
  CHECK(std::abs(mean_low / n_low - 0.1) <= 0.05);
  CHECK(std::abs(mean_high / n_high - 0.7) <= 0.05);
}

TEST_CASE("planted monotone hazards give perfectly ranked risk scores") {
  Rng rng(55);
  IntervalGrid grid{{0.0, 2.0, 4.0}};
  DiscreteTimeModel model = zero_model(grid, 1, 0);
  model.scorer.w2.setOnes();  // logit grows with x
  model.scorer.b2.setZero();
  std::vector<double> xs = {-2.0, -1.0, 0.0, 1.0, 2.0};
  double previous = -1.0;
  for (double v : xs) {
    Eigen::VectorXd x(1);
    x << v;
    double risk = model.risk_score(x);
    CHECK(risk > previous);
    previous = risk;
  }
}

TEST_CASE("divergent training aborts with diagnostics") {
  IntervalGrid grid = grid012();
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  std::vector<TimeEvent> obs = {{0.5, true}, {1.5, true}, {2.5, true}, {1.2, false}};
  ElasticNetConfig cfg;
  cfg.alpha = 0.1;
  cfg.step_size = 1e200;  // first step overflows the weight norm
  cfg.max_epochs = 50;
  CHECK_THROWS_AS(fit_discrete_time(X, obs, grid, cfg, 4), NumericalError);
}

}  // TEST_SUITE
