#pragma once

#include <Eigen/Core>
#include <span>
#include <string>

#include "prognos/common.hpp"

namespace prognos {

enum class AFTDist { normal, logistic, extreme_value };

const char* to_string(AFTDist d);
AFTDist aft_dist_from_string(const std::string& s);

// Log-linear time model: log T = intercept + x'beta + sigma * eps, with eps
// following the standardized error distribution. Risk is the negated linear
// predictor, so shorter predicted log-time means higher risk.
struct AFTModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double sigma = 1.0;
  AFTDist dist = AFTDist::normal;
  bool flagged = false;  // separation / non-identifiability during fitting
  std::string flag_reason;

  double risk(const Eigen::VectorXd& x) const { return -(intercept + beta.dot(x)); }
  Eigen::VectorXd risk_rows(const Eigen::MatrixXd& X) const {
    return -((X * beta).array() + intercept).matrix();
  }
};

// Negative log-likelihood: with z = (log T - intercept - x'beta)/sigma, events
// contribute -log f(z) + log sigma and censored rows contribute -log S(z).
double aft_negloglik(const AFTModel& model, const Eigen::MatrixXd& X,
                     std::span<const TimeEvent> obs);

// Gradient with respect to (intercept, beta..., log sigma); used by the fitter
// and by finite-difference checks.
Eigen::VectorXd aft_negloglik_grad(const AFTModel& model, const Eigen::MatrixXd& X,
                                   std::span<const TimeEvent> obs);

struct AFTFitOptions {
  int max_iterations = 1000;
  double grad_tol = 1e-8;
};

// Maximum likelihood by BFGS on internally standardized covariates; requires
// at least 5 events. Non-identifiable fits come back flagged, not thrown.
AFTModel fit_aft(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs, AFTDist dist,
                 const AFTFitOptions& options = {});

}  // namespace prognos
