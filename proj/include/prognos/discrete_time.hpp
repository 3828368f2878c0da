#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "prognos/coxfit.hpp"
#include "prognos/common.hpp"
#include "prognos/optim.hpp"
#include "prognos/rng.hpp"

namespace prognos {

// Contiguous time intervals (t_0, t_1], ..., (t_{J-1}, inf) with t_0 = 0.
// cut_points stores {t_0, ..., t_{J-1}}; the count equals J.
struct IntervalGrid {
  std::vector<double> cut_points;

  int intervals() const { return static_cast<int>(cut_points.size()); }
  // 0-based index of the interval containing t (> 0); last interval is open.
  int interval_index(double t) const;
  void validate() const;

  // Cut points at event-time quantiles, deduplicated.
  static IntervalGrid from_event_quantiles(std::span<const TimeEvent> obs, int intervals);
};

// Event indicator path d_i1..d_ij. Events produce (0,...,0,1) ending at their
// interval; censored subjects produce one 0 per fully survived interval.
std::vector<int> discretize(const TimeEvent& obs, const IntervalGrid& grid);

// One-hidden-layer feed-forward map with tanh activation. hidden == 0 makes
// the map linear.
struct Mlp {
  Eigen::MatrixXd w1;  // hidden x in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x hidden (or out x in when hidden == 0)
  Eigen::VectorXd b2;

  int hidden() const { return static_cast<int>(b1.size()); }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  static Mlp init(int input_dim, int hidden, int output_dim, Rng& rng);
  int n_params() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  // 1 for weight entries, 0 for biases; used to scope regularization.
  Eigen::VectorXd weight_mask() const;
};

struct StepFunction {
  std::vector<double> times;   // ascending knots
  std::vector<double> values;  // value for t >= times[k]; 1.0 before times[0]

  double at(double t) const;
};

struct EvalDiagnostics {
  long clamped = 0;  // hazards clamped away from {0,1}
};

struct DiscreteTimeModel {
  IntervalGrid grid;
  Standardizer stats;
  Mlp scorer;  // J logits
  ElasticNetConfig regularization;
  double horizon = 10.0;

  Eigen::VectorXd hazards(const Eigen::VectorXd& x) const;
  StepFunction survival_curve(const Eigen::VectorXd& x) const;
  double risk_score(const Eigen::VectorXd& x) const;  // 1 - S(horizon)
};

// Negative log-likelihood, summed over subjects. Hazards are clamped to
// [1e-12, 1-1e-12]; clamp events are counted in `diag` when given.
double dt_negloglik(const DiscreteTimeModel& model, const Eigen::MatrixXd& X,
                    std::span<const TimeEvent> obs, EvalDiagnostics* diag = nullptr);

// Gradient of dt_negloglik with respect to the flattened scorer parameters.
Eigen::VectorXd dt_negloglik_grad(const DiscreteTimeModel& model, const Eigen::MatrixXd& X,
                                  std::span<const TimeEvent> obs);

struct DiscreteTimeFit {
  DiscreteTimeModel model;
  std::vector<double> loss_trace;
};

// Minimizes (1-alpha) * NLL/n + alpha * R(weights) with Adam and a proximal
// L1 step, deterministic per cfg.seed.
DiscreteTimeFit fit_discrete_time(const Eigen::MatrixXd& features,
                                  std::span<const TimeEvent> obs, const IntervalGrid& grid,
                                  const ElasticNetConfig& cfg, int hidden,
                                  double horizon = 10.0);

}  // namespace prognos
