#include "prognos/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "prognos/stats.hpp"

namespace prognos {

const char* to_string(Modality m) {
  return m == Modality::clinical ? "clinical" : "pathology";
}

Modality modality_from_string(const std::string& s) {
  if (s == "clinical") return Modality::clinical;
  if (s == "pathology") return Modality::pathology;
  throw ValidationError("invalid modality '" + s + "'");
}

MinMaxNormalizer MinMaxNormalizer::fit(std::span<const double> validation_predictions) {
  if (validation_predictions.empty())
    throw ValidationError("normalizer: no validation predictions");
  MinMaxNormalizer n;
  n.min = *std::min_element(validation_predictions.begin(), validation_predictions.end());
  n.max = *std::max_element(validation_predictions.begin(), validation_predictions.end());
  n.validate();
  return n;
}

void MinMaxNormalizer::validate() const {
  if (!(max > min))
    throw ValidationError(
        "degenerate ensemble member: constant predictions over the validation set");
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw ValidationError("ensemble has no members");
  for (const auto& member : members) {
    if (!member.model) throw ValidationError("ensemble member without a model");
    member.normalizer.validate();
  }
}

double modality_score(const EnsembleSpec& spec, const SubjectInputs& inputs) {
  spec.validate();
  double sum = 0.0;
  for (const auto& member : spec.members) {
    double raw;
    try {
      raw = member.model->score_subject(inputs);
    } catch (const std::exception& e) {
      throw ValidationError("member '" + member.ref + "' cannot score subject: " + e.what());
    }
    sum += member.normalizer.apply(raw);
  }
  return sum / static_cast<double>(spec.members.size());
}

double fuse_unclamped(double clinical_score, double pathology_score) {
  return 0.5 * (clinical_score + pathology_score);
}

double fuse(double clinical_score, double pathology_score) {
  return std::clamp(fuse_unclamped(clinical_score, pathology_score), 0.0, 1.0);
}

RiskCutoff compute_cutoff(std::span<const double> scores, double percentile,
                          std::string source_population) {
  if (!(percentile > 0.0 && percentile < 100.0))
    throw ValidationError("cutoff percentile must lie in (0,100)");
  RiskCutoff cutoff;
  cutoff.percentile = percentile;
  cutoff.value = stats::percentile_linear(scores.data(),
                                          static_cast<long>(scores.size()), percentile);
  cutoff.source_population = std::move(source_population);
  return cutoff;
}

}  // namespace prognos
