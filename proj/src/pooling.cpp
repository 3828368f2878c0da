#include "prognos/pooling.hpp"

#include <cmath>

namespace prognos {

Eigen::VectorXd pool_mean(const EmbeddingBag& bag) {
  bag.validate();
  return bag.vectors.cast<double>().colwise().mean().transpose();
}

Eigen::VectorXd pool_max(const EmbeddingBag& bag) {
  bag.validate();
  return bag.vectors.cast<double>().colwise().maxCoeff().transpose();
}

void GatedAttentionParams::validate(int dim) const {
  if (hidden() < 1) throw ValidationError("gated attention: empty hidden layer");
  if (v.rows() != dim || u.rows() != dim || v.cols() != w.size() || u.cols() != w.size())
    throw ValidationError("gated attention: parameter dimensions do not match input");
  if (!v.allFinite() || !u.allFinite() || !w.allFinite())
    throw ValidationError("gated attention: non-finite parameters");
}

AttentionPooled pool_gated_attention(const Eigen::MatrixXd& patches,
                                     const GatedAttentionParams& params) {
  const int n = static_cast<int>(patches.rows());
  if (n < 1) throw ValidationError("gated attention: empty bag");
  params.validate(static_cast<int>(patches.cols()));

  Eigen::MatrixXd tanh_branch = (patches * params.v).array().tanh();
  Eigen::MatrixXd gate = ((patches * params.u).array() * -1.0).exp() + 1.0;
  gate = gate.cwiseInverse();
  Eigen::VectorXd scores = (tanh_branch.array() * gate.array()).matrix() * params.w;

  double m = scores.maxCoeff();
  Eigen::VectorXd weights = (scores.array() - m).exp();
  weights /= weights.sum();

  AttentionPooled out;
  out.weights = weights;
  out.pooled = patches.transpose() * weights;
  return out;
}

AttentionPooled pool_gated_attention(const EmbeddingBag& bag,
                                     const GatedAttentionParams& params) {
  bag.validate();
  return pool_gated_attention(bag.vectors.cast<double>(), params);
}

}  // namespace prognos
