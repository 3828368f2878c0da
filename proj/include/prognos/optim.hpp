#pragma once

#include <Eigen/Core>
#include <functional>

#include "prognos/common.hpp"

namespace prognos {

// Per-column mean/sd rescaling. Statistics are fit on training data only and
// frozen for inference.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  static Standardizer identity(int dim);
};

// Adam with bias-corrected moment estimates and an optional proximal
// soft-threshold step for an L1 term, taken with the same per-coordinate
// effective step size as the smooth update. Coordinates where l1_mask is 0
// (e.g. biases) skip the proximal step.
class AdamProx {
 public:
  AdamProx(int dim, double learning_rate, double l1_weight = 0.0)
      : lr_(learning_rate),
        l1_(l1_weight),
        m_(Eigen::VectorXd::Zero(dim)),
        v_(Eigen::VectorXd::Zero(dim)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad_smooth,
            const Eigen::VectorXd& l1_mask);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad_smooth);

 private:
  double lr_;
  double l1_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

struct BfgsOptions {
  int max_iterations = 1000;
  double grad_tol = 1e-8;  // infinity norm
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

// BFGS with Armijo backtracking. `fn` evaluates the objective and writes the
// gradient into `grad`.
BfgsResult bfgs_minimize(
    const Eigen::VectorXd& x0,
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fn,
    const BfgsOptions& options = {});

}  // namespace prognos
