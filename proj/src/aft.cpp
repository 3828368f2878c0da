#include "prognos/aft.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "prognos/optim.hpp"
#include "prognos/stats.hpp"

namespace prognos {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

const char* kDistNames[] = {"normal", "logistic", "extreme_value"};

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Per-row terms for one standardized residual z:
//   event rows need -log f(z) and its z-derivative,
//   censored rows need -log S(z) and its z-derivative (= f(z)/S(z)).
struct DistTerms {
  double neg_log_f;
  double dneg_log_f;  // d(-log f)/dz
  double neg_log_s;
  double hazard;      // f/S = d(-log S)/dz
};

DistTerms eval_dist(AFTDist dist, double z) {
  DistTerms t{};
  switch (dist) {
    case AFTDist::normal: {
      t.neg_log_f = 0.5 * z * z + 0.5 * kLog2Pi;
      t.dneg_log_f = z;
      double log_sf = stats::log_norm_sf(z);
      t.neg_log_s = -log_sf;
      t.hazard = std::exp(-0.5 * z * z - 0.5 * kLog2Pi - log_sf);
      break;
    }
    case AFTDist::logistic: {
      // f(z) = e^z / (1+e^z)^2, S(z) = 1/(1+e^z)
      t.neg_log_f = -z + 2.0 * softplus(z);
      double sig = 1.0 / (1.0 + std::exp(-z));
      t.dneg_log_f = 2.0 * sig - 1.0;
      t.neg_log_s = softplus(z);
      t.hazard = sig;
      break;
    }
    case AFTDist::extreme_value: {
      // f(z) = exp(z - e^z), S(z) = exp(-e^z)
      double zc = std::min(z, 700.0);
      double ez = std::exp(zc);
      t.neg_log_f = -zc + ez;
      t.dneg_log_f = ez - 1.0;
      t.neg_log_s = ez;
      t.hazard = ez;
      break;
    }
  }
  return t;
}

void check_inputs(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs) {
  if (X.rows() != static_cast<Eigen::Index>(obs.size()))
    throw ValidationError("aft: size mismatch");
  for (const auto& o : obs)
    if (!(o.time > 0.0 && std::isfinite(o.time)))
      throw ValidationError("aft: times must be positive");
}

// theta = (intercept, beta..., log sigma) against a fixed design matrix.
double negloglik_theta(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs,
                       AFTDist dist, const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  const int p = static_cast<int>(X.cols());
  const double log_sigma = theta[p + 1];
  const double sigma = std::exp(log_sigma);

  double nll = 0.0;
  if (grad) grad->setZero();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double eta = theta[0] + X.row(i).dot(theta.segment(1, p));
    double z = (std::log(obs[i].time) - eta) / sigma;
    DistTerms t = eval_dist(dist, z);
    double dz;  // d(term)/dz
    if (obs[i].event) {
      nll += t.neg_log_f + log_sigma;
      dz = t.dneg_log_f;
    } else {
      nll += t.neg_log_s;
      dz = t.hazard;
    }
    if (grad) {
      // dz/d eta = -1/sigma, dz/d log_sigma = -z; events add +1 to d/dlog_sigma
      double d_eta = -dz / sigma;
      (*grad)[0] += d_eta;
      grad->segment(1, p) += d_eta * X.row(i).transpose();
      (*grad)[p + 1] += -dz * z + (obs[i].event ? 1.0 : 0.0);
    }
  }
  return nll;
}

}  // namespace

const char* to_string(AFTDist d) { return kDistNames[static_cast<int>(d)]; }

AFTDist aft_dist_from_string(const std::string& s) {
  for (int i = 0; i < 3; ++i)
    if (s == kDistNames[i]) return static_cast<AFTDist>(i);
  throw ValidationError("invalid AFT distribution '" + s + "'");
}

double aft_negloglik(const AFTModel& model, const Eigen::MatrixXd& X,
                     std::span<const TimeEvent> obs) {
  check_inputs(X, obs);
  if (!(model.sigma > 0.0)) throw ValidationError("aft: sigma must be positive");
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd theta(p + 2);
  theta[0] = model.intercept;
  theta.segment(1, p) = model.beta;
  theta[p + 1] = std::log(model.sigma);
  return negloglik_theta(X, obs, model.dist, theta, nullptr);
}

Eigen::VectorXd aft_negloglik_grad(const AFTModel& model, const Eigen::MatrixXd& X,
                                   std::span<const TimeEvent> obs) {
  check_inputs(X, obs);
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd theta(p + 2);
  theta[0] = model.intercept;
  theta.segment(1, p) = model.beta;
  theta[p + 1] = std::log(model.sigma);
  Eigen::VectorXd grad(p + 2);
  negloglik_theta(X, obs, model.dist, theta, &grad);
  return grad;
}

AFTModel fit_aft(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs, AFTDist dist,
                 const AFTFitOptions& options) {
  check_inputs(X, obs);
  int n_events = 0;
  for (const auto& o : obs) n_events += o.event ? 1 : 0;
  if (n_events < 5) throw ValidationError("aft: fewer than 5 events");

  const int p = static_cast<int>(X.cols());
  Standardizer stats_fit = Standardizer::fit(X);
  Eigen::MatrixXd Xs = stats_fit.apply(X);

  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(p + 2);
  double mean_log_t = 0.0;
  for (const auto& o : obs) mean_log_t += std::log(o.time);
  theta0[0] = mean_log_t / static_cast<double>(obs.size());

  BfgsOptions bopts;
  bopts.max_iterations = options.max_iterations;
  bopts.grad_tol = options.grad_tol;
  // Optimize the per-subject mean so the gradient tolerance is scale-free.
  const double inv_n = 1.0 / static_cast<double>(obs.size());
  BfgsResult res = bfgs_minimize(
      theta0,
      [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        grad.resize(theta.size());
        double nll = negloglik_theta(Xs, obs, dist, theta, &grad);
        grad *= inv_n;
        return nll * inv_n;
      },
      bopts);

  // Newton polish with a finite-difference Hessian of the mean objective;
  // quasi-Newton alone stalls once objective differences reach rounding.
  Eigen::VectorXd theta = res.x;
  {
    const int dim = p + 2;
    Eigen::VectorXd grad(dim), grad_hi(dim), grad_lo(dim);
    for (int polish = 0; polish < 8; ++polish) {
      negloglik_theta(Xs, obs, dist, theta, &grad);
      grad *= inv_n;
      double gnorm = grad.lpNorm<Eigen::Infinity>();
      if (gnorm < options.grad_tol) {
        res.converged = true;
        break;
      }
      Eigen::MatrixXd hessian(dim, dim);
      for (int k = 0; k < dim; ++k) {
        double h = 1e-6 * (1.0 + std::abs(theta[k]));
        Eigen::VectorXd up = theta, down = theta;
        up[k] += h;
        down[k] -= h;
        negloglik_theta(Xs, obs, dist, up, &grad_hi);
        negloglik_theta(Xs, obs, dist, down, &grad_lo);
        hessian.col(k) = (grad_hi - grad_lo) * (inv_n / (2.0 * h));
      }
      hessian = 0.5 * (hessian + hessian.transpose());
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
      Eigen::VectorXd step = ldlt.solve(grad);
      if (!step.allFinite()) break;
      Eigen::VectorXd candidate = theta - step;
      negloglik_theta(Xs, obs, dist, candidate, &grad_hi);
      if ((grad_hi * inv_n).lpNorm<Eigen::Infinity>() >= gnorm) break;
      theta = candidate;
    }
    negloglik_theta(Xs, obs, dist, theta, &grad);
    res.grad_norm = (grad * inv_n).lpNorm<Eigen::Infinity>();
    if (res.grad_norm < options.grad_tol) res.converged = true;
    res.x = theta;
  }

  AFTModel model;
  model.dist = dist;
  double log_sigma = res.x[p + 1];
  model.sigma = std::exp(log_sigma);

  // De-standardize back to the raw covariate scale.
  model.beta.resize(p);
  double shift = 0.0;
  for (int j = 0; j < p; ++j) {
    model.beta[j] = res.x[j + 1] / stats_fit.sd[j];
    shift += res.x[j + 1] * stats_fit.mean[j] / stats_fit.sd[j];
  }
  model.intercept = res.x[0] - shift;

  if (!res.converged) {
    model.flagged = true;
    model.flag_reason = "no convergence (gradient norm " + std::to_string(res.grad_norm) + ")";
  }
  if (std::abs(log_sigma) > 8.0) {
    model.flagged = true;
    model.flag_reason = "scale parameter at boundary";
  }
  if (res.x.segment(1, p).lpNorm<Eigen::Infinity>() > 50.0) {
    model.flagged = true;
    model.flag_reason = "separation: unbounded coefficient";
  }
  return model;
}

}  // namespace prognos
