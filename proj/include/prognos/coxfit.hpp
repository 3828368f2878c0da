#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prognos/common.hpp"
#include "prognos/metrics.hpp"
#include "prognos/optim.hpp"

namespace prognos {

struct CoxFitResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd hr;      // exp(beta)
  Eigen::VectorXd wald_p;  // two-sided, per coefficient
  std::vector<std::pair<double, double>> ci;  // 95% interval on the HR scale
  double loglik = 0.0;     // maximized partial log-likelihood
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> term_names;
};

// Mean negative log partial likelihood over the input set, Breslow risk sets
// (time >= t_i). Shift-invariant in the scores; computed with a running
// log-sum-exp so large scores do not overflow.
double cox_partial_loss(const Eigen::VectorXd& scores, std::span<const TimeEvent> obs);

// Gradient of cox_partial_loss with respect to the scores.
Eigen::VectorXd cox_partial_loss_gradient(const Eigen::VectorXd& scores,
                                          std::span<const TimeEvent> obs);

// Newton-Raphson maximization of the partial likelihood with Breslow tie
// handling and step-halving. Standard errors come from the inverse observed
// information; at most 50 covariates, none constant.
CoxFitResult fit_cox_exact(const Eigen::MatrixXd& X, std::span<const TimeEvent> obs,
                           std::vector<std::string> term_names = {});

struct ElasticNetConfig {
  double alpha = 0.01;   // loss/regularizer mix: (1-alpha) L + alpha R
  double gamma = 0.5;    // L1/L2 mix inside R
  double step_size = 0.05;
  int max_epochs = 400;
  std::uint64_t seed = 0;

  void validate() const;
};

// Linear risk scorer with frozen training standardization.
struct LinearScorer {
  Standardizer stats;
  Eigen::VectorXd beta;

  double score(const Eigen::VectorXd& x) const { return beta.dot(stats.apply(x)); }
  Eigen::VectorXd score_rows(const Eigen::MatrixXd& X) const { return stats.apply(X) * beta; }
};

// Composite objective (1-alpha) * cox_partial_loss + alpha * R(beta),
// R(beta) = (1-gamma)/2 ||beta||^2 + gamma ||beta||_1, minimized with Adam;
// the L1 term is handled by a proximal step so exact zeros are reachable.
// Features are standardized internally and the statistics kept for inference.
LinearScorer fit_cox_elastic_net(const Eigen::MatrixXd& features,
                                 std::span<const TimeEvent> obs,
                                 const ElasticNetConfig& cfg,
                                 std::vector<double>* loss_trace = nullptr);

struct NamedMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
};

// Same solver as fit_cox_exact over a named design matrix. Callers are
// expected to apply the reporting transforms (AI score x5, genomic assay
// score /20) when assembling the matrix.
CoxFitResult fit_cox_multivariate(const NamedMatrix& terms, std::span<const TimeEvent> obs);

struct DichotomizedHR {
  CoxFitResult cox;        // single indicator covariate, low-risk reference
  LogrankResult logrank;
  int n_high = 0;
  int n_low = 0;
};

// Univariate Cox on the indicator risk > cutoff; companion logrank p.
DichotomizedHR dichotomized_hr(const Eigen::VectorXd& risks, double cutoff,
                               std::span<const TimeEvent> obs);

}  // namespace prognos
