#include "prognos/discrete_time.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prognos/stats.hpp"

namespace prognos {

namespace {
constexpr double kHazardFloor = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_hazard(double h, EvalDiagnostics* diag) {
  if (h < kHazardFloor || h > 1.0 - kHazardFloor) {
    if (diag) ++diag->clamped;
    return std::clamp(h, kHazardFloor, 1.0 - kHazardFloor);
  }
  return h;
}
}  // namespace

void IntervalGrid::validate() const {
  if (cut_points.empty()) throw ValidationError("interval grid: no cut points");
  if (cut_points.front() != 0.0) throw ValidationError("interval grid: first cut must be 0");
  for (std::size_t k = 1; k < cut_points.size(); ++k)
    if (!(cut_points[k] > cut_points[k - 1]))
      throw ValidationError("interval grid: cut points not strictly ascending");
}

int IntervalGrid::interval_index(double t) const {
  int j = intervals() - 1;
  for (int k = 1; k < intervals(); ++k) {
    if (t <= cut_points[k]) return k - 1;
  }
  return j;
}

IntervalGrid IntervalGrid::from_event_quantiles(std::span<const TimeEvent> obs, int intervals) {
  if (intervals < 1) throw ValidationError("interval grid: need at least one interval");
  std::vector<double> event_times;
  for (const auto& o : obs)
    if (o.event) event_times.push_back(o.time);
  IntervalGrid grid;
  grid.cut_points.push_back(0.0);
  if (!event_times.empty()) {
    for (int k = 1; k < intervals; ++k) {
      double q = stats::percentile_linear(event_times.data(),
                                          static_cast<long>(event_times.size()),
                                          100.0 * k / intervals);
      if (q > grid.cut_points.back()) grid.cut_points.push_back(q);
    }
  }
  grid.validate();
  return grid;
}

std::vector<int> discretize(const TimeEvent& obs, const IntervalGrid& grid) {
  grid.validate();
  if (!(obs.time > 0.0)) throw ValidationError("discretize: non-positive time");
  if (obs.event) {
    int idx = grid.interval_index(obs.time);
    std::vector<int> path(idx + 1, 0);
    path.back() = 1;
    return path;
  }
  // Censored: count fully survived closed intervals.
  int survived = 0;
  for (int k = 1; k < grid.intervals(); ++k)
    if (obs.time >= grid.cut_points[k]) ++survived;
  return std::vector<int>(survived, 0);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (hidden() == 0) return w2 * x + b2;
  Eigen::VectorXd h = (w1 * x + b1).array().tanh();
  return w2 * h + b2;
}

Mlp Mlp::init(int input_dim, int hidden, int output_dim, Rng& rng) {
  Mlp mlp;
  auto fill = [&rng](Eigen::MatrixXd& m, int fan_in) {
    double a = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-a, a);
  };
  if (hidden > 0) {
    mlp.w1.resize(hidden, input_dim);
    fill(mlp.w1, input_dim);
    mlp.b1 = Eigen::VectorXd::Zero(hidden);
    mlp.w2.resize(output_dim, hidden);
    fill(mlp.w2, hidden);
  } else {
    mlp.w1.resize(0, 0);
    mlp.b1.resize(0);
    mlp.w2.resize(output_dim, input_dim);
    fill(mlp.w2, input_dim);
  }
  mlp.b2 = Eigen::VectorXd::Zero(output_dim);
  return mlp;
}

int Mlp::n_params() const {
  return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size());
}

Eigen::VectorXd Mlp::flatten() const {
  Eigen::VectorXd flat(n_params());
  Eigen::Index pos = 0;
  auto put = [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) flat[pos++] = block(i);
  };
  put(w1.reshaped());
  put(b1);
  put(w2.reshaped());
  put(b2);
  return flat;
}

void Mlp::unflatten(const Eigen::VectorXd& flat) {
  Eigen::Index pos = 0;
  auto take = [&](auto&& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block(i) = flat[pos++];
  };
  take(w1.reshaped());
  take(b1);
  take(w2.reshaped());
  take(b2);
}

Eigen::VectorXd Mlp::weight_mask() const {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(n_params());
  mask.head(w1.size()).setOnes();
  mask.segment(w1.size() + b1.size(), w2.size()).setOnes();
  return mask;
}

double StepFunction::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

Eigen::VectorXd DiscreteTimeModel::hazards(const Eigen::VectorXd& x) const {
  Eigen::VectorXd phi = scorer.forward(stats.apply(x));
  return phi.unaryExpr([](double v) { return sigmoid(v); });
}

StepFunction DiscreteTimeModel::survival_curve(const Eigen::VectorXd& x) const {
  Eigen::VectorXd lambda = hazards(x);
  StepFunction s;
  double survival = 1.0;
  for (int k = 1; k < grid.intervals(); ++k) {
    survival *= 1.0 - lambda[k - 1];
    s.times.push_back(grid.cut_points[k]);
    s.values.push_back(survival);
  }
  return s;
}

double DiscreteTimeModel::risk_score(const Eigen::VectorXd& x) const {
  return 1.0 - survival_curve(x).at(horizon);
}

namespace {

struct PathCache {
  std::vector<std::vector<int>> paths;
};

PathCache build_paths(const IntervalGrid& grid, std::span<const TimeEvent> obs) {
  PathCache cache;
  cache.paths.reserve(obs.size());
  for (const auto& o : obs) cache.paths.push_back(discretize(o, grid));
  return cache;
}

}  // namespace

double dt_negloglik(const DiscreteTimeModel& model, const Eigen::MatrixXd& X,
                    std::span<const TimeEvent> obs, EvalDiagnostics* diag) {
  if (X.rows() != static_cast<Eigen::Index>(obs.size()))
    throw ValidationError("dt_negloglik: size mismatch");
  PathCache cache = build_paths(model.grid, obs);
  double nll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd lambda = model.hazards(X.row(i).transpose());
    const auto& path = cache.paths[i];
    for (std::size_t j = 0; j < path.size(); ++j) {
      double h = clamp_hazard(lambda[static_cast<Eigen::Index>(j)], diag);
      nll -= path[j] ? std::log(h) : std::log(1.0 - h);
    }
  }
  return nll;
}

Eigen::VectorXd dt_negloglik_grad(const DiscreteTimeModel& model, const Eigen::MatrixXd& X,
                                  std::span<const TimeEvent> obs) {
  if (X.rows() != static_cast<Eigen::Index>(obs.size()))
    throw ValidationError("dt_negloglik_grad: size mismatch");
  PathCache cache = build_paths(model.grid, obs);
  const Mlp& mlp = model.scorer;
  const int out = static_cast<int>(mlp.b2.size());

  Eigen::MatrixXd d_w1 = Eigen::MatrixXd::Zero(mlp.w1.rows(), mlp.w1.cols());
  Eigen::VectorXd d_b1 = Eigen::VectorXd::Zero(mlp.b1.size());
  Eigen::MatrixXd d_w2 = Eigen::MatrixXd::Zero(mlp.w2.rows(), mlp.w2.cols());
  Eigen::VectorXd d_b2 = Eigen::VectorXd::Zero(mlp.b2.size());

  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd raw = X.row(i).transpose();
    Eigen::VectorXd x = model.stats.apply(raw);
    Eigen::VectorXd h;
    Eigen::VectorXd phi;
    if (mlp.hidden() > 0) {
      h = (mlp.w1 * x + mlp.b1).array().tanh();
      phi = mlp.w2 * h + mlp.b2;
    } else {
      phi = mlp.w2 * x + mlp.b2;
    }
    const auto& path = cache.paths[i];
    if (path.empty()) continue;
    Eigen::VectorXd d_phi = Eigen::VectorXd::Zero(out);
    for (std::size_t j = 0; j < path.size(); ++j) {
      double lambda = sigmoid(phi[static_cast<Eigen::Index>(j)]);
      // d(-log λ)/dφ = λ-1 for the event term, d(-log(1-λ))/dφ = λ otherwise
      d_phi[static_cast<Eigen::Index>(j)] = path[j] ? lambda - 1.0 : lambda;
    }
    d_b2 += d_phi;
    if (mlp.hidden() > 0) {
      d_w2 += d_phi * h.transpose();
      Eigen::VectorXd d_h = mlp.w2.transpose() * d_phi;
      Eigen::VectorXd d_pre = d_h.cwiseProduct((1.0 - h.array().square()).matrix());
      d_w1 += d_pre * x.transpose();
      d_b1 += d_pre;
    } else {
      d_w2 += d_phi * x.transpose();
    }
  }

  Mlp grads;
  grads.w1 = d_w1;
  grads.b1 = d_b1;
  grads.w2 = d_w2;
  grads.b2 = d_b2;
  return grads.flatten();
}

DiscreteTimeFit fit_discrete_time(const Eigen::MatrixXd& features,
                                  std::span<const TimeEvent> obs, const IntervalGrid& grid,
                                  const ElasticNetConfig& cfg, int hidden, double horizon) {
  cfg.validate();
  grid.validate();
  if (features.rows() != static_cast<Eigen::Index>(obs.size()))
    throw ValidationError("fit_discrete_time: size mismatch");
  const int n = static_cast<int>(obs.size());
  const int p = static_cast<int>(features.cols());

  DiscreteTimeFit fit;
  fit.model.grid = grid;
  fit.model.stats = Standardizer::fit(features);
  fit.model.regularization = cfg;
  fit.model.horizon = horizon;
  Rng rng(cfg.seed);
  fit.model.scorer = Mlp::init(p, hidden, grid.intervals(), rng);

  Eigen::VectorXd params = fit.model.scorer.flatten();
  Eigen::VectorXd mask = fit.model.scorer.weight_mask();
  AdamProx adam(static_cast<int>(params.size()), cfg.step_size, cfg.alpha * cfg.gamma);
  const double ridge = cfg.alpha * (1.0 - cfg.gamma);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    fit.model.scorer.unflatten(params);
    Eigen::VectorXd grad = dt_negloglik_grad(fit.model, features, obs) *
                           ((1.0 - cfg.alpha) / n);
    grad += ridge * params.cwiseProduct(mask);
    adam.step(params, grad, mask);

    fit.model.scorer.unflatten(params);
    double loss = (1.0 - cfg.alpha) * dt_negloglik(fit.model, features, obs) / n;
    double l1 = 0.0, l2 = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (mask[i] != 0.0) {
        l1 += std::abs(params[i]);
        l2 += params[i] * params[i];
      }
    }
    loss += cfg.alpha * ((1.0 - cfg.gamma) / 2.0 * l2 + cfg.gamma * l1);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "discrete-time fit diverged at epoch " << epoch << " (step size "
          << cfg.step_size << ")";
      throw NumericalError(msg.str());
    }
    fit.loss_trace.push_back(loss);
  }
  fit.model.scorer.unflatten(params);
  return fit;
}

}  // namespace prognos
