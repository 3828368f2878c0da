#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "prognos/aft.hpp"
#include "prognos/coxfit.hpp"
#include "prognos/domain.hpp"
#include "prognos/mil.hpp"

namespace prognos {

// Everything a trained model may need to score one subject.
struct SubjectInputs {
  const SubjectRecord* subject = nullptr;
  std::vector<const EmbeddingBag*> bags;
};

// A trained risk scorer. Multi-slide subjects are scored per slide and
// averaged. Each model remembers which datasets its training data came from
// so cross-validation can assert fold separation.
class RiskModel {
 public:
  virtual ~RiskModel() = default;
  virtual double score_subject(const SubjectInputs& inputs) const = 0;
  virtual std::string kind() const = 0;
  virtual void save(std::ostream& out) const = 0;

  const std::set<std::string>& training_datasets() const { return training_datasets_; }
  void set_training_datasets(std::set<std::string> ids) {
    training_datasets_ = std::move(ids);
  }

 protected:
  void save_provenance(std::ostream& out) const;
  void load_provenance(std::istream& in);

 private:
  std::set<std::string> training_datasets_;
};

std::unique_ptr<RiskModel> load_risk_model(std::istream& in);

enum class PoolKind { mean, max };
const char* to_string(PoolKind k);

// Parameterless pooling into a linear Cox scorer.
class PooledCoxModel final : public RiskModel {
 public:
  PooledCoxModel() = default;
  PooledCoxModel(PoolKind pool, LinearScorer scorer)
      : pool_(pool), scorer_(std::move(scorer)) {}

  double score_subject(const SubjectInputs& inputs) const override;
  double score_bag(const EmbeddingBag& bag) const;
  std::string kind() const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<PooledCoxModel> load(std::istream& in);

  PoolKind pool() const { return pool_; }
  const LinearScorer& scorer() const { return scorer_; }

 private:
  PoolKind pool_ = PoolKind::mean;
  LinearScorer scorer_;

  friend std::unique_ptr<RiskModel> load_risk_model(std::istream&);
};

// Gated-attention MIL with a discrete-time hazard head.
class AttentionDTRiskModel final : public RiskModel {
 public:
  AttentionDTRiskModel() = default;
  explicit AttentionDTRiskModel(AttentionDTModel model) : model_(std::move(model)) {}

  double score_subject(const SubjectInputs& inputs) const override;
  std::string kind() const override { return "attention_dt"; }
  void save(std::ostream& out) const override;
  static std::unique_ptr<AttentionDTRiskModel> load(std::istream& in);

  const AttentionDTModel& model() const { return model_; }

 private:
  AttentionDTModel model_;
};

// Linear AFT model over encoded clinical covariates.
class ClinicalAFTModel final : public RiskModel {
 public:
  ClinicalAFTModel() = default;
  ClinicalAFTModel(EncodingScheme scheme, AFTModel model)
      : scheme_(scheme), model_(std::move(model)) {}

  double score_subject(const SubjectInputs& inputs) const override;
  std::string kind() const override { return "clinical_aft"; }
  void save(std::ostream& out) const override;
  static std::unique_ptr<ClinicalAFTModel> load(std::istream& in);

  const EncodingScheme& scheme() const { return scheme_; }
  const AFTModel& model() const { return model_; }

 private:
  EncodingScheme scheme_;
  AFTModel model_;
};

// Prediction-average of several models (e.g. the per-fold models selected by
// cross-validation). Provenance is the union of the parts.
class AveragedRiskModel final : public RiskModel {
 public:
  AveragedRiskModel() = default;
  explicit AveragedRiskModel(std::vector<std::shared_ptr<const RiskModel>> parts);

  double score_subject(const SubjectInputs& inputs) const override;
  std::string kind() const override { return "averaged"; }
  void save(std::ostream& out) const override;
  static std::unique_ptr<AveragedRiskModel> load(std::istream& in);

  const std::vector<std::shared_ptr<const RiskModel>>& parts() const { return parts_; }

 private:
  std::vector<std::shared_ptr<const RiskModel>> parts_;
};

}  // namespace prognos
