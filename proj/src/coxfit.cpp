#include "prognos/coxfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prognos/stats.hpp"

namespace prognos {

namespace {

void check_sizes(Eigen::Index n_scores, std::span<const TimeEvent> obs) {
  if (n_scores != static_cast<Eigen::Index>(obs.size()))
    throw ValidationError("cox: scores/observations length mismatch");
  for (const auto& o : obs)
    if (!(o.time > 0.0 && std::isfinite(o.time)))
      throw ValidationError("cox: non-positive time");
}

std::vector<int> order_by_time(std::span<const TimeEvent> obs) {
  std::vector<int> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return obs[a].time < obs[b].time; });
  return order;
}

}  // namespace

double cox_partial_loss(const Eigen::VectorXd& scores, std::span<const TimeEvent> obs) {
  check_sizes(scores.size(), obs);
  if (!scores.allFinite()) throw ValidationError("cox: non-finite score");
  const int n = static_cast<int>(obs.size());
  std::vector<int> order = order_by_time(obs);

  // Walk times descending, growing the risk set; keep log(sum exp(g)) via a
  // running maximum.
  double run_max = -std::numeric_limits<double>::infinity();
  double run_sum = 0.0;
  double loss = 0.0;
  int i = n - 1;
  while (i >= 0) {
    int j = i;
    while (j >= 0 && obs[order[j]].time == obs[order[i]].time) --j;
    double group_max = -std::numeric_limits<double>::infinity();
    for (int k = i; k > j; --k) group_max = std::max(group_max, scores[order[k]]);
    if (group_max > run_max) {
      if (std::isfinite(run_max)) run_sum *= std::exp(run_max - group_max);
      run_max = group_max;
    }
    for (int k = i; k > j; --k) run_sum += std::exp(scores[order[k]] - run_max);
    double lse = run_max + std::log(run_sum);
    for (int k = i; k > j; --k) {
      int idx = order[k];
      if (obs[idx].event) loss += lse - scores[idx];
    }
    i = j;
  }
  return loss / n;
}

Eigen::VectorXd cox_partial_loss_gradient(const Eigen::VectorXd& scores,
                                          std::span<const TimeEvent> obs) {
  check_sizes(scores.size(), obs);
  const int n = static_cast<int>(obs.size());
  std::vector<int> order = order_by_time(obs);
  const double g_max = scores.maxCoeff();

  // Suffix sums of exp(g - g_max) give the Breslow denominator at each
  // distinct time; a prefix sweep then accumulates sum_{events t<=t_k} d_t/D_t.
  std::vector<double> denom_at(n, 0.0);  // indexed by position of group start
  double suffix = 0.0;
  for (int k = n - 1; k >= 0;) {
    int j = k;
    while (j >= 0 && obs[order[j]].time == obs[order[k]].time) {
      suffix += std::exp(scores[order[j]] - g_max);
      --j;
    }
    for (int m = k; m > j; --m) denom_at[m] = suffix;
    k = j;
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  double cumulative = 0.0;  // sum over processed event times of d_t / D_t
  for (int k = 0; k < n;) {
    int j = k;
    int deaths = 0;
    while (j < n && obs[order[j]].time == obs[order[k]].time) {
      if (obs[order[j]].event) ++deaths;
      ++j;
    }
    if (deaths > 0) cumulative += deaths / denom_at[k];
    for (int m = k; m < j; ++m) {
      int idx = order[m];
      grad[idx] = std::exp(scores[idx] - g_max) * cumulative - (obs[idx].event ? 1.0 : 0.0);
    }
    k = j;
  }
  return grad / n;
}

namespace {

struct PartialLikelihoodState {
  double loglik;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;  // observed information (negative Hessian)
};

// One pass over risk sets: log-likelihood, gradient, and information, Breslow
// tie handling. Scores are max-shifted before exponentiation.
PartialLikelihoodState evaluate_partial_likelihood(const Eigen::MatrixXd& X,
                                                   std::span<const TimeEvent> obs,
                                                   const Eigen::VectorXd& beta,
                                                   const std::vector<int>& order) {
  const int n = static_cast<int>(obs.size());
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd eta = X * beta;
  const double eta_max = eta.maxCoeff();

  PartialLikelihoodState state;
  state.loglik = 0.0;
  state.grad = Eigen::VectorXd::Zero(p);
  state.info = Eigen::MatrixXd::Zero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  for (int k = n - 1; k >= 0;) {
    int j = k;
    while (j >= 0 && obs[order[j]].time == obs[order[k]].time) {
      int idx = order[j];
      double w = std::exp(eta[idx] - eta_max);
      s0 += w;
      s1 += w * X.row(idx).transpose();
      s2 += w * X.row(idx).transpose() * X.row(idx);
      --j;
    }
    int deaths = 0;
    Eigen::VectorXd x_events = Eigen::VectorXd::Zero(p);
    double eta_events = 0.0;
    for (int m = k; m > j; --m) {
      int idx = order[m];
      if (obs[idx].event) {
        ++deaths;
        x_events += X.row(idx).transpose();
        eta_events += eta[idx];
      }
    }
    if (deaths > 0) {
      Eigen::VectorXd mean = s1 / s0;
      state.loglik += eta_events - deaths * (std::log(s0) + eta_max);
      state.grad += x_events - deaths * mean;
      state.info += deaths * (s2 / s0 - mean * mean.transpose());
    }
    k = j;
  }
  return state;
}

std::vector<std::string> default_names(int p, const std::vector<std::string>& given) {
  if (!given.empty()) {
    if (static_cast<int>(given.size()) != p)
      throw ValidationError("cox: term name count does not match covariates");
    return given;
  }
  std::vector<std::string> names(p);
  for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j);
  return names;
}

}  // namespace

CoxFitResult fit_cox_exact(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs,
                           std::vector<std::string> term_names) {
  const int n = static_cast<int>(obs.size());
  const int p = static_cast<int>(X.cols());
  check_sizes(X.rows(), obs);
  if (p < 1) throw ValidationError("cox: empty design matrix");
  if (p > 50) throw ValidationError("cox: exact fit limited to 50 covariates");
  std::vector<std::string> names = default_names(p, term_names);
  for (int j = 0; j < p; ++j) {
    double lo = X.col(j).minCoeff(), hi = X.col(j).maxCoeff();
    if (hi - lo < 1e-12)
      throw ValidationError("cox: covariate '" + names[j] + "' is constant");
  }

  std::vector<int> order = order_by_time(obs);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  PartialLikelihoodState state = evaluate_partial_likelihood(X, obs, beta, order);

  CoxFitResult result;
  result.term_names = names;
  result.iterations = 0;
  const int max_iterations = 100;
  for (int iter = 0; iter < max_iterations; ++iter) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(state.info);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      int offender = qr.colsPermutation().indices()[p - 1];
      throw NumericalError("cox: singular information matrix; covariate '" +
                           names[offender] + "' is collinear or separates the data");
    }
    Eigen::VectorXd delta = qr.solve(state.grad);

    double step = 1.0;
    Eigen::VectorXd beta_new;
    PartialLikelihoodState state_new;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      beta_new = beta + step * delta;
      state_new = evaluate_partial_likelihood(X, obs, beta_new, order);
      if (std::isfinite(state_new.loglik) && state_new.loglik >= state.loglik) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    result.iterations = iter + 1;
    if (!improved) break;  // cannot make progress; report current point

    double change = state_new.loglik - state.loglik;
    beta = beta_new;
    state = state_new;
    if (beta.lpNorm<Eigen::Infinity>() > 40.0) {
      int offender = 0;
      beta.cwiseAbs().maxCoeff(&offender);
      throw NumericalError("cox: monotone likelihood / separation on covariate '" +
                           names[offender] + "'");
    }
    if (std::abs(change) < 1e-9 * (std::abs(state.loglik) + 1.0)) {
      result.converged = true;
      break;
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(state.info);
  Eigen::MatrixXd covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));

  result.beta = beta;
  result.loglik = state.loglik;
  result.se.resize(p);
  result.hr.resize(p);
  result.wald_p.resize(p);
  result.ci.resize(p);
  const double z975 = stats::norm_quantile(0.975);
  for (int j = 0; j < p; ++j) {
    double var = covariance(j, j);
    result.se[j] = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
    result.hr[j] = std::exp(beta[j]);
    if (std::isfinite(result.se[j]) && result.se[j] > 0.0) {
      double z = beta[j] / result.se[j];
      result.wald_p[j] = stats::two_sided_p(z);
      result.ci[j] = {std::exp(beta[j] - z975 * result.se[j]),
                      std::exp(beta[j] + z975 * result.se[j])};
    } else {
      result.wald_p[j] = std::numeric_limits<double>::quiet_NaN();
      result.ci[j] = {std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN()};
    }
  }
  return result;
}

void ElasticNetConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("elastic net: alpha outside [0,1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("elastic net: gamma outside [0,1]");
  if (!(step_size > 0.0)) throw ValidationError("elastic net: non-positive step size");
  if (max_epochs < 1) throw ValidationError("elastic net: max_epochs < 1");
}

LinearScorer fit_cox_elastic_net(const Eigen::MatrixXd& features,
                                 std::span<const TimeEvent> obs,
                                 const ElasticNetConfig& cfg,
                                 std::vector<double>* loss_trace) {
  cfg.validate();
  check_sizes(features.rows(), obs);
  const int p = static_cast<int>(features.cols());

  Standardizer stats_fit = Standardizer::fit(features);
  Eigen::MatrixXd X = stats_fit.apply(features);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd l1_mask = Eigen::VectorXd::Ones(p);
  AdamProx adam(p, cfg.step_size, cfg.alpha * cfg.gamma);

  const double ridge = cfg.alpha * (1.0 - cfg.gamma);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Eigen::VectorXd scores = X * beta;
    Eigen::VectorXd score_grad = cox_partial_loss_gradient(scores, obs);
    Eigen::VectorXd grad = (1.0 - cfg.alpha) * (X.transpose() * score_grad) + ridge * beta;
    adam.step(beta, grad, l1_mask);

    if (loss_trace || epoch == cfg.max_epochs - 1) {
      double loss = (1.0 - cfg.alpha) * cox_partial_loss(X * beta, obs) +
                    cfg.alpha * ((1.0 - cfg.gamma) / 2.0 * beta.squaredNorm() +
                                 cfg.gamma * beta.lpNorm<1>());
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "cox elastic net diverged at epoch " << epoch << " (step size "
            << cfg.step_size << ")";
        throw NumericalError(msg.str());
      }
      if (loss_trace) loss_trace->push_back(loss);
    }
  }
  if (!beta.allFinite()) throw NumericalError("cox elastic net produced non-finite weights");
  return {stats_fit, beta};
}

CoxFitResult fit_cox_multivariate(const NamedMatrix& terms, std::span<const TimeEvent> obs) {
  return fit_cox_exact(terms.X, obs, terms.names);
}

DichotomizedHR dichotomized_hr(const Eigen::VectorXd& risks, double cutoff,
                               std::span<const TimeEvent> obs) {
  check_sizes(risks.size(), obs);
  const int n = static_cast<int>(risks.size());

  DichotomizedHR out;
  std::vector<TimeEvent> low, high;
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) {
    bool is_high = risks[i] > cutoff;
    X(i, 0) = is_high ? 1.0 : 0.0;
    (is_high ? high : low).push_back(obs[i]);
  }
  out.n_high = static_cast<int>(high.size());
  out.n_low = static_cast<int>(low.size());
  if (out.n_high == 0 || out.n_low == 0)
    throw ValidationError("dichotomized_hr: cutoff leaves an empty risk group");

  out.cox = fit_cox_exact(X, obs, {"high_risk"});
  out.logrank = logrank(low, high);
  return out;
}

}  // namespace prognos
