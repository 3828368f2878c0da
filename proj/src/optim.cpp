#include "prognos/optim.hpp"

#include <cmath>
#include <functional>

namespace prognos {

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  if (X.rows() < 1) throw ValidationError("standardizer: empty matrix");
  Standardizer s;
  s.mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - s.mean.transpose();
  s.sd = (centered.array().square().colwise().sum() / std::max<double>(1.0, X.rows() - 1.0))
             .sqrt()
             .matrix();
  for (Eigen::Index j = 0; j < s.sd.size(); ++j)
    if (s.sd[j] < 1e-12) s.sd[j] = 1.0;  // constant column passes through centered
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  return (x - mean).cwiseQuotient(sd);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Standardizer Standardizer::identity(int dim) {
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.sd = Eigen::VectorXd::Ones(dim);
  return s;
}

void AdamProx::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad_smooth,
                    const Eigen::VectorXd& l1_mask) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad_smooth;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad_smooth.cwiseProduct(grad_smooth);
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    double m_hat = m_[i] / c1;
    double v_hat = v_[i] / c2;
    double step_size = lr_ / (std::sqrt(v_hat) + eps_);
    double p = params[i] - step_size * m_hat;
    if (l1_ > 0.0 && l1_mask[i] != 0.0) {
      double threshold = step_size * l1_ * l1_mask[i];
      if (p > threshold)
        p -= threshold;
      else if (p < -threshold)
        p += threshold;
      else
        p = 0.0;
    }
    params[i] = p;
  }
}

void AdamProx::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad_smooth) {
  static const Eigen::VectorXd empty;
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad_smooth;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad_smooth.cwiseProduct(grad_smooth);
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -=
      (lr_ * (m_ / c1).array()) / ((v_ / c2).array().sqrt() + eps_);
}

BfgsResult bfgs_minimize(
    const Eigen::VectorXd& x0,
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fn,
    const BfgsOptions& options) {
  const int dim = static_cast<int>(x0.size());
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd x = x0;
  Eigen::VectorXd grad(dim);
  double value = fn(x, grad);

  BfgsResult result;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double gnorm = grad.lpNorm<Eigen::Infinity>();
    if (gnorm < options.grad_tol) {
      result.converged = true;
      result.iterations = iter;
      break;
    }

    Eigen::VectorXd direction = -(h_inv * grad);
    double slope = grad.dot(direction);
    if (slope >= 0.0) {  // reset to steepest descent on a bad direction
      h_inv.setIdentity();
      direction = -grad;
      slope = grad.dot(direction);
    }

    double step = 1.0;
    Eigen::VectorXd x_new(dim), grad_new(dim);
    double value_new = value;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * direction;
      value_new = fn(x_new, grad_new);
      // Armijo with a machine-precision allowance so the search can keep
      // polishing once objective differences fall below rounding.
      if (std::isfinite(value_new) &&
          value_new <= value + 1e-4 * step * slope + 1e-14 * (std::abs(value) + 1.0)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.iterations = iter;
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = grad_new - grad;
    double sy = s.dot(y);
    if (sy > 1e-12) {
      double rho = 1.0 / sy;
      Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    x = x_new;
    grad = grad_new;
    value = value_new;
    result.iterations = iter + 1;
  }

  result.x = x;
  result.value = value;
  result.grad_norm = grad.lpNorm<Eigen::Infinity>();
  if (result.grad_norm < options.grad_tol) result.converged = true;
  return result;
}

}  // namespace prognos
