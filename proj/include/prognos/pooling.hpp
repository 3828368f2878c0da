#pragma once

#include <Eigen/Core>

#include "prognos/domain.hpp"

namespace prognos {

// Coordinatewise mean across patches.
Eigen::VectorXd pool_mean(const EmbeddingBag& bag);
// Coordinatewise max across patches.
Eigen::VectorXd pool_max(const EmbeddingBag& bag);

struct GatedAttentionParams {
  Eigen::MatrixXd v;  // dim x h, tanh branch
  Eigen::MatrixXd u;  // dim x h, sigmoid gate
  Eigen::VectorXd w;  // h

  int hidden() const { return static_cast<int>(w.size()); }
  void validate(int dim) const;
};

struct AttentionPooled {
  Eigen::VectorXd pooled;   // sum_k a_k x_k
  Eigen::VectorXd weights;  // softmax over patches, strictly positive
};

// a_k ∝ exp( w' (tanh(V'x_k) ⊙ sigmoid(U'x_k)) ), normalized to sum 1.
AttentionPooled pool_gated_attention(const Eigen::MatrixXd& patches,
                                     const GatedAttentionParams& params);
AttentionPooled pool_gated_attention(const EmbeddingBag& bag,
                                     const GatedAttentionParams& params);

}  // namespace prognos
