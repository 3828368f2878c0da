#include "prognos/mil.hpp"

#include <cmath>
#include <sstream>

namespace prognos {

namespace {
constexpr double kHazardFloor = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd standardized_patches(const Standardizer& stats, const EmbeddingBag& bag) {
  Eigen::MatrixXd patches = bag.vectors.cast<double>();
  return stats.apply(patches);
}

Standardizer fit_patch_stats(std::span<const EmbeddingBag* const> bags) {
  long total = 0;
  for (const auto* bag : bags) total += bag->n_patches();
  if (total == 0) throw ValidationError("attention fit: no patches");
  const int dim = bags.front()->dim();
  Eigen::MatrixXd all(total, dim);
  long row = 0;
  for (const auto* bag : bags) {
    all.middleRows(row, bag->n_patches()) = bag->vectors.cast<double>();
    row += bag->n_patches();
  }
  return Standardizer::fit(all);
}
}  // namespace

Eigen::VectorXd AttentionDTModel::pooled(const EmbeddingBag& bag) const {
  return pool_gated_attention(standardized_patches(stats, bag), attn).pooled;
}

Eigen::VectorXd AttentionDTModel::hazards(const EmbeddingBag& bag) const {
  Eigen::VectorXd phi = scorer.forward(pooled(bag));
  return phi.unaryExpr([](double v) { return sigmoid(v); });
}

StepFunction AttentionDTModel::survival_curve(const EmbeddingBag& bag) const {
  Eigen::VectorXd lambda = hazards(bag);
  StepFunction s;
  double survival = 1.0;
  for (int k = 1; k < grid.intervals(); ++k) {
    survival *= 1.0 - lambda[k - 1];
    s.times.push_back(grid.cut_points[k]);
    s.values.push_back(survival);
  }
  return s;
}

double AttentionDTModel::risk_score(const EmbeddingBag& bag) const {
  return 1.0 - survival_curve(bag).at(horizon);
}

int AttentionDTModel::n_params() const {
  return static_cast<int>(attn.v.size() + attn.u.size() + attn.w.size()) + scorer.n_params();
}

Eigen::VectorXd AttentionDTModel::flatten() const {
  Eigen::VectorXd flat(n_params());
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < attn.v.size(); ++i) flat[pos++] = attn.v.reshaped()(i);
  for (Eigen::Index i = 0; i < attn.u.size(); ++i) flat[pos++] = attn.u.reshaped()(i);
  for (Eigen::Index i = 0; i < attn.w.size(); ++i) flat[pos++] = attn.w(i);
  flat.tail(scorer.n_params()) = scorer.flatten();
  return flat;
}

void AttentionDTModel::unflatten(const Eigen::VectorXd& flat) {
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < attn.v.size(); ++i) attn.v.reshaped()(i) = flat[pos++];
  for (Eigen::Index i = 0; i < attn.u.size(); ++i) attn.u.reshaped()(i) = flat[pos++];
  for (Eigen::Index i = 0; i < attn.w.size(); ++i) attn.w(i) = flat[pos++];
  scorer.unflatten(flat.tail(scorer.n_params()));
}

Eigen::VectorXd AttentionDTModel::weight_mask() const {
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(n_params());
  mask.tail(scorer.n_params()) = scorer.weight_mask();
  return mask;
}

double attention_dt_negloglik(const AttentionDTModel& model,
                              std::span<const EmbeddingBag* const> bags,
                              std::span<const TimeEvent> obs, EvalDiagnostics* diag) {
  if (bags.size() != obs.size()) throw ValidationError("attention dt: size mismatch");
  double nll = 0.0;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    Eigen::VectorXd lambda = model.hazards(*bags[i]);
    std::vector<int> path = discretize(obs[i], model.grid);
    for (std::size_t j = 0; j < path.size(); ++j) {
      double h = std::clamp(lambda[static_cast<Eigen::Index>(j)], kHazardFloor,
                            1.0 - kHazardFloor);
      if (diag && h != lambda[static_cast<Eigen::Index>(j)]) ++diag->clamped;
      nll -= path[j] ? std::log(h) : std::log(1.0 - h);
    }
  }
  return nll;
}

Eigen::VectorXd attention_dt_negloglik_grad(const AttentionDTModel& model,
                                            std::span<const EmbeddingBag* const> bags,
                                            std::span<const TimeEvent> obs) {
  if (bags.size() != obs.size()) throw ValidationError("attention dt: size mismatch");
  const Mlp& mlp = model.scorer;
  const GatedAttentionParams& attn = model.attn;

  Eigen::MatrixXd d_v = Eigen::MatrixXd::Zero(attn.v.rows(), attn.v.cols());
  Eigen::MatrixXd d_u = Eigen::MatrixXd::Zero(attn.u.rows(), attn.u.cols());
  Eigen::VectorXd d_w = Eigen::VectorXd::Zero(attn.w.size());
  Eigen::MatrixXd d_w1 = Eigen::MatrixXd::Zero(mlp.w1.rows(), mlp.w1.cols());
  Eigen::VectorXd d_b1 = Eigen::VectorXd::Zero(mlp.b1.size());
  Eigen::MatrixXd d_w2 = Eigen::MatrixXd::Zero(mlp.w2.rows(), mlp.w2.cols());
  Eigen::VectorXd d_b2 = Eigen::VectorXd::Zero(mlp.b2.size());

  for (std::size_t i = 0; i < bags.size(); ++i) {
    std::vector<int> path = discretize(obs[i], model.grid);
    if (path.empty()) continue;

    Eigen::MatrixXd patches = standardized_patches(model.stats, *bags[i]);
    const int n = static_cast<int>(patches.rows());

    // Forward pass, keeping intermediates for the backward sweep.
    Eigen::MatrixXd tanh_branch = (patches * attn.v).array().tanh();
    Eigen::MatrixXd gate =
        ((patches * attn.u).array() * -1.0).exp().unaryExpr([](double e) {
          return 1.0 / (1.0 + e);
        });
    Eigen::MatrixXd z = tanh_branch.cwiseProduct(gate);  // n x h
    Eigen::VectorXd scores = z * attn.w;
    double m = scores.maxCoeff();
    Eigen::VectorXd a = (scores.array() - m).exp();
    a /= a.sum();
    Eigen::VectorXd pooled = patches.transpose() * a;

    Eigen::VectorXd h_act, phi;
    if (mlp.hidden() > 0) {
      h_act = (mlp.w1 * pooled + mlp.b1).array().tanh();
      phi = mlp.w2 * h_act + mlp.b2;
    } else {
      phi = mlp.w2 * pooled + mlp.b2;
    }

    Eigen::VectorXd d_phi = Eigen::VectorXd::Zero(phi.size());
    for (std::size_t j = 0; j < path.size(); ++j) {
      double lambda = sigmoid(phi[static_cast<Eigen::Index>(j)]);
      d_phi[static_cast<Eigen::Index>(j)] = path[j] ? lambda - 1.0 : lambda;
    }

    Eigen::VectorXd d_pooled;
    d_b2 += d_phi;
    if (mlp.hidden() > 0) {
      d_w2 += d_phi * h_act.transpose();
      Eigen::VectorXd d_h = mlp.w2.transpose() * d_phi;
      Eigen::VectorXd d_pre = d_h.cwiseProduct((1.0 - h_act.array().square()).matrix());
      d_w1 += d_pre * pooled.transpose();
      d_b1 += d_pre;
      d_pooled = mlp.w1.transpose() * d_pre;
    } else {
      d_w2 += d_phi * pooled.transpose();
      d_pooled = mlp.w2.transpose() * d_phi;
    }

    // pooled = patches' a ; softmax Jacobian gives d_scores.
    Eigen::VectorXd d_a = patches * d_pooled;
    double inner = a.dot(d_a);
    Eigen::VectorXd d_scores = a.cwiseProduct(d_a.array().matrix() -
                                              Eigen::VectorXd::Constant(n, inner));
    d_w += z.transpose() * d_scores;
    Eigen::MatrixXd d_z = d_scores * attn.w.transpose();  // n x h
    Eigen::MatrixXd d_tanh = d_z.cwiseProduct(gate);
    Eigen::MatrixXd d_gate = d_z.cwiseProduct(tanh_branch);
    Eigen::MatrixXd d_pre_v = d_tanh.cwiseProduct((1.0 - tanh_branch.array().square()).matrix());
    Eigen::MatrixXd d_pre_u =
        d_gate.cwiseProduct((gate.array() * (1.0 - gate.array())).matrix());
    d_v += patches.transpose() * d_pre_v;
    d_u += patches.transpose() * d_pre_u;
  }

  AttentionDTModel grads = model;
  grads.attn.v = d_v;
  grads.attn.u = d_u;
  grads.attn.w = d_w;
  grads.scorer.w1 = d_w1;
  grads.scorer.b1 = d_b1;
  grads.scorer.w2 = d_w2;
  grads.scorer.b2 = d_b2;
  return grads.flatten();
}

AttentionDTFit fit_attention_discrete_time(std::span<const EmbeddingBag* const> bags,
                                           std::span<const TimeEvent> obs,
                                           const IntervalGrid& grid,
                                           const ElasticNetConfig& cfg, int hidden,
                                           int attention_hidden, double horizon) {
  cfg.validate();
  grid.validate();
  if (bags.empty() || bags.size() != obs.size())
    throw ValidationError("attention fit: size mismatch or empty input");
  const int dim = bags.front()->dim();
  for (const auto* bag : bags) {
    bag->validate();
    if (bag->dim() != dim) throw ValidationError("attention fit: mixed embedding dims");
  }
  const int n = static_cast<int>(bags.size());

  AttentionDTFit fit;
  fit.model.grid = grid;
  fit.model.stats = fit_patch_stats(bags);
  fit.model.regularization = cfg;
  fit.model.horizon = horizon;

  Rng rng(cfg.seed);
  auto fill = [&rng](Eigen::MatrixXd& mat, int fan_in) {
    double a = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) mat(i, j) = rng.uniform(-a, a);
  };
  fit.model.attn.v.resize(dim, attention_hidden);
  fill(fit.model.attn.v, dim);
  fit.model.attn.u.resize(dim, attention_hidden);
  fill(fit.model.attn.u, dim);
  fit.model.attn.w.resize(attention_hidden);
  for (int i = 0; i < attention_hidden; ++i)
    fit.model.attn.w[i] = rng.uniform(-1.0, 1.0) / std::sqrt(attention_hidden);
  fit.model.scorer = Mlp::init(dim, hidden, grid.intervals(), rng);

  Eigen::VectorXd params = fit.model.flatten();
  Eigen::VectorXd mask = fit.model.weight_mask();
  AdamProx adam(static_cast<int>(params.size()), cfg.step_size, cfg.alpha * cfg.gamma);
  const double ridge = cfg.alpha * (1.0 - cfg.gamma);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    fit.model.unflatten(params);
    Eigen::VectorXd grad =
        attention_dt_negloglik_grad(fit.model, bags, obs) * ((1.0 - cfg.alpha) / n);
    grad += ridge * params.cwiseProduct(mask);
    adam.step(params, grad, mask);

    fit.model.unflatten(params);
    double loss = (1.0 - cfg.alpha) * attention_dt_negloglik(fit.model, bags, obs) / n;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (mask[i] != 0.0)
        loss += cfg.alpha * ((1.0 - cfg.gamma) / 2.0 * params[i] * params[i] +
                             cfg.gamma * std::abs(params[i]));
    }
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "attention discrete-time fit diverged at epoch " << epoch;
      throw NumericalError(msg.str());
    }
    fit.loss_trace.push_back(loss);
  }
  fit.model.unflatten(params);
  return fit;
}

}  // namespace prognos
