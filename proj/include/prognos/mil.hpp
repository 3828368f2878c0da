#pragma once

#include <span>
#include <vector>

#include "prognos/discrete_time.hpp"
#include "prognos/pooling.hpp"

namespace prognos {

// Gated-attention pooling trained jointly with a discrete-time hazard scorer.
// Patches are standardized with frozen training statistics before attention.
struct AttentionDTModel {
  IntervalGrid grid;
  Standardizer stats;
  GatedAttentionParams attn;
  Mlp scorer;
  ElasticNetConfig regularization;
  double horizon = 10.0;

  Eigen::VectorXd pooled(const EmbeddingBag& bag) const;
  Eigen::VectorXd hazards(const EmbeddingBag& bag) const;
  StepFunction survival_curve(const EmbeddingBag& bag) const;
  double risk_score(const EmbeddingBag& bag) const;

  int n_params() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  Eigen::VectorXd weight_mask() const;
};

double attention_dt_negloglik(const AttentionDTModel& model,
                              std::span<const EmbeddingBag* const> bags,
                              std::span<const TimeEvent> obs,
                              EvalDiagnostics* diag = nullptr);

Eigen::VectorXd attention_dt_negloglik_grad(const AttentionDTModel& model,
                                            std::span<const EmbeddingBag* const> bags,
                                            std::span<const TimeEvent> obs);

struct AttentionDTFit {
  AttentionDTModel model;
  std::vector<double> loss_trace;
};

AttentionDTFit fit_attention_discrete_time(std::span<const EmbeddingBag* const> bags,
                                           std::span<const TimeEvent> obs,
                                           const IntervalGrid& grid,
                                           const ElasticNetConfig& cfg, int hidden,
                                           int attention_hidden, double horizon = 10.0);

}  // namespace prognos
