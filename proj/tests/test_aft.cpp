#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "prognos/aft.hpp"
#include "prognos/metrics.hpp"
#include "prognos/rng.hpp"

using namespace prognos;

namespace {

std::vector<TimeEvent> all_events(const Eigen::VectorXd& times) {
  std::vector<TimeEvent> obs(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i) obs[i] = {times[i], true};
  return obs;
}

}  // namespace

TEST_SUITE("aft") {

TEST_CASE("standard normal event term at zero residual") {
  AFTModel model;
  model.beta = Eigen::VectorXd::Zero(1);
  model.intercept = 0.0;
  model.sigma = 1.0;
  model.dist = AFTDist::normal;
  Eigen::MatrixXd X(1, 1);
  X << 0.0;
  std::vector<TimeEvent> obs = {{1.0, true}};  // log T = 0
  CHECK(aft_negloglik(model, X, obs) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("uncensored normal fit equals least squares on log-time") {
  Rng rng(64);
  const int n = 120, p = 3;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd times(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    double log_t = 1.0 + 0.6 * X(i, 0) - 0.4 * X(i, 1) + 0.25 * rng.normal();
    times[i] = std::exp(log_t);
  }
  AFTModel model = fit_aft(X, all_events(times), AFTDist::normal);
  CHECK_FALSE(model.flagged);

  // closed-form normal equations with intercept
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = X;
  Eigen::VectorXd y = times.array().log();
  Eigen::VectorXd theta = (design.transpose() * design).ldlt().solve(design.transpose() * y);

  CHECK(std::abs(model.intercept - theta[0]) <= 1e-6);
  for (int j = 0; j < p; ++j) CHECK(std::abs(model.beta[j] - theta[j + 1]) <= 1e-6);
  // ML sigma^2 is the mean squared residual
  Eigen::VectorXd residuals = y - design * theta;
  double sigma_ml = std::sqrt(residuals.squaredNorm() / n);
  CHECK(model.sigma == doctest::Approx(sigma_ml).epsilon(1e-5));
}

TEST_CASE("gradient matches central finite differences for all distributions") {
  Rng rng(31);
  for (AFTDist dist : {AFTDist::normal, AFTDist::logistic, AFTDist::extreme_value}) {
    const int n = 25, p = 3;
    Eigen::MatrixXd X(n, p);
    std::vector<TimeEvent> obs;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
      obs.push_back({std::exp(rng.normal()), rng.uniform01() < 0.6});
    }
    AFTModel model;
    model.beta = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) model.beta[j] = 0.3 * rng.normal();
    model.intercept = 0.2;
    model.sigma = 1.3;
    model.dist = dist;

    Eigen::VectorXd grad = aft_negloglik_grad(model, X, obs);
    const double h = 1e-6;
    auto eval = [&](double d_int, int beta_idx, double d_beta, double d_logsigma) {
      AFTModel m = model;
      m.intercept += d_int;
      if (beta_idx >= 0) m.beta[beta_idx] += d_beta;
      m.sigma = std::exp(std::log(model.sigma) + d_logsigma);
      return aft_negloglik(m, X, obs);
    };
    double fd0 = (eval(h, -1, 0, 0) - eval(-h, -1, 0, 0)) / (2 * h);
    CHECK(std::abs(grad[0] - fd0) <= 1e-5 * std::max(1.0, std::abs(fd0)));
    for (int j = 0; j < p; ++j) {
      double fd = (eval(0, j, h, 0) - eval(0, j, -h, 0)) / (2 * h);
      CHECK(std::abs(grad[j + 1] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
    double fds = (eval(0, -1, 0, h) - eval(0, -1, 0, -h)) / (2 * h);
    CHECK(std::abs(grad[p + 1] - fds) <= 1e-5 * std::max(1.0, std::abs(fds)));
  }
}

TEST_CASE("all-censored likelihood is maximized at the scale boundary") {
  // no events and a pinned location below every log-time: the likelihood only
  // improves as sigma grows, so there is no interior optimum to report
  Eigen::MatrixXd X(4, 1);
  X << 0.5, -0.5, 1.0, -1.0;
  std::vector<TimeEvent> obs = {{2.0, false}, {3.0, false}, {1.5, false}, {4.0, false}};
  AFTModel model;
  model.beta = Eigen::VectorXd::Zero(1);
  model.intercept = 0.0;  // below log(1.5); every standardized residual positive
  model.dist = AFTDist::normal;
  double previous = 1e300;
  for (double sigma : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    model.sigma = sigma;
    double nll = aft_negloglik(model, X, obs);
    CHECK(nll < previous);
    previous = nll;
  }
  // fitting such data is refused outright: fewer than 5 events
  CHECK_THROWS_AS(fit_aft(X, obs, AFTDist::normal), ValidationError);
}

TEST_CASE("pure-noise covariates score near chance on held-out data") {
  Rng rng(8080);
  const int n = 2000, p = 4;
  Eigen::MatrixXd X(n, p);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    obs.push_back({rng.exponential(0.5), rng.uniform01() < 0.8});
  }
  AFTModel model = fit_aft(X, obs, AFTDist::normal);
  std::vector<ScoredObservation> held_out;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd x(p);
    for (int j = 0; j < p; ++j) x[j] = rng.normal();
    held_out.push_back({model.risk(x), rng.exponential(0.5), true});
  }
  CHECK(std::abs(c_index(held_out).value - 0.5) <= 0.05);
}

TEST_CASE("planted log-linear effect is recovered within 10% at n=2000") {
  Rng rng(2025);
  const int n = 2000, p = 2;
  Eigen::MatrixXd X(n, p);
  std::vector<TimeEvent> obs;
  const double b0 = 0.8, b1 = 0.7, b2 = -0.5;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    double log_t = b0 + b1 * X(i, 0) + b2 * X(i, 1) + 0.6 * rng.normal();
    double censor = std::exp(b0 + 1.2 * rng.normal());
    double t = std::exp(log_t);
    obs.push_back({std::min(t, censor), t <= censor});
  }
  AFTModel model = fit_aft(X, obs, AFTDist::normal);
  CHECK_FALSE(model.flagged);
  CHECK(std::abs(model.beta[0] - b1) <= 0.1 * std::abs(b1));
  CHECK(std::abs(model.beta[1] - b2) <= 0.1 * std::abs(b2));
}

TEST_CASE("identical outcomes across covariate patterns give zero coefficients") {
  // every outcome appears once with x = +1 and once with x = -1
  std::vector<TimeEvent> base = {{1.0, true},  {2.0, false}, {3.0, true},
                                 {1.5, true},  {4.0, false}, {2.5, true},
                                 {0.8, true},  {3.5, true}};
  const int n = 2 * static_cast<int>(base.size());
  Eigen::MatrixXd X(n, 1);
  std::vector<TimeEvent> obs;
  for (std::size_t k = 0; k < base.size(); ++k) {
    X(static_cast<Eigen::Index>(2 * k), 0) = 1.0;
    X(static_cast<Eigen::Index>(2 * k + 1), 0) = -1.0;
    obs.push_back(base[k]);
    obs.push_back(base[k]);
  }
  AFTModel model = fit_aft(X, obs, AFTDist::logistic);
  CHECK(std::abs(model.beta[0]) <= 1e-6);
}

TEST_CASE("weibull simulation: extreme value recovers the shape as 1/sigma") {
  Rng rng(99);
  const int n = 2000;
  const double shape = 1.7, scale = 3.0, b1 = -0.4;
  Eigen::MatrixXd X(n, 1);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    // Weibull draw via inverse transform with an AFT covariate effect
    double u = rng.uniform01_open0();
    double t = scale * std::exp(b1 * X(i, 0)) * std::pow(-std::log(u), 1.0 / shape);
    obs.push_back({t, true});
  }
  AFTModel model = fit_aft(X, obs, AFTDist::extreme_value);
  CHECK_FALSE(model.flagged);
  CHECK(std::abs(1.0 / model.sigma - shape) <= 0.1 * shape);
  CHECK(model.beta[0] == doctest::Approx(b1).epsilon(0.15));
}

TEST_CASE("risk ranking is invariant to rescaling a covariate column") {
  Rng rng(17);
  const int n = 300, p = 3;
  Eigen::MatrixXd X(n, p);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    obs.push_back({std::exp(0.5 * X(i, 0) + 0.3 * rng.normal()), rng.uniform01() < 0.8});
  }
  AFTModel base = fit_aft(X, obs, AFTDist::logistic);
  Eigen::MatrixXd scaled = X;
  scaled.col(1) = 10.0 * X.col(1).array() + 5.0;
  AFTModel refit = fit_aft(scaled, obs, AFTDist::logistic);

  Eigen::VectorXd risk_base = base.risk_rows(X);
  Eigen::VectorXd risk_refit = refit.risk_rows(scaled);
  // identical ranking: perfectly concordant orderings
  std::vector<ScoredObservation> a, b;
  for (int i = 0; i < n; ++i) {
    a.push_back({risk_base[i], 1.0 + i, true});
    b.push_back({risk_refit[i], 1.0 + i, true});
  }
  CHECK(c_index(a).value == doctest::Approx(c_index(b).value).epsilon(1e-9));
}

TEST_CASE("times must be positive and flagged non-identifiability is reported") {
  Eigen::MatrixXd X(6, 1);
  X << 1, 2, 3, 4, 5, 6;
  std::vector<TimeEvent> bad = {{0.0, true}, {1, true}, {1, true}, {1, true}, {1, true}, {1, true}};
  AFTModel model;
  model.beta = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(aft_negloglik(model, X, bad), ValidationError);

  // perfectly separable times along the covariate force huge coefficients
  Rng rng(5);
  const int n = 60;
  Eigen::MatrixXd sep(n, 1);
  std::vector<TimeEvent> obs;
  for (int i = 0; i < n; ++i) {
    sep(i, 0) = i < n / 2 ? -1.0 : 1.0;
    obs.push_back({i < n / 2 ? 1e-4 : 1e4, true});
  }
  AFTModel fitted = fit_aft(sep, obs, AFTDist::normal);
  CHECK(fitted.flagged);
}

}  // TEST_SUITE
