#pragma once

#include <span>
#include <string>
#include <vector>

#include "prognos/models.hpp"

namespace prognos {

enum class Modality { clinical, pathology };
const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

// Linear rescale fitted on a member's validation-set predictions. Test-time
// values may land outside [0,1]; the rescale is only approximate by design.
struct MinMaxNormalizer {
  double min = 0.0;
  double max = 1.0;

  static MinMaxNormalizer fit(std::span<const double> validation_predictions);
  double apply(double raw) const { return (raw - min) / (max - min); }
  void validate() const;
};

struct EnsembleMember {
  std::shared_ptr<const RiskModel> model;
  MinMaxNormalizer normalizer;
  std::string ref;           // artifact path, for the manifest
  std::string content_hash;  // sha256 of the saved member record
};

struct EnsembleSpec {
  Modality modality = Modality::clinical;
  std::vector<EnsembleMember> members;

  int member_count() const { return static_cast<int>(members.size()); }
  void validate() const;
};

// Arithmetic mean of normalized member predictions for one subject.
double modality_score(const EnsembleSpec& spec, const SubjectInputs& inputs);

// Multimodal fusion: the average of the two modality scores, clamped to
// [0,1]. The unclamped value stays available for analysis.
double fuse_unclamped(double clinical_score, double pathology_score);
double fuse(double clinical_score, double pathology_score);

struct RiskCutoff {
  double percentile = 80.0;
  double value = 0.0;
  std::string source_population;
};

RiskCutoff compute_cutoff(std::span<const double> scores, double percentile,
                          std::string source_population);

inline bool is_high_risk(double score, const RiskCutoff& cutoff) {
  return score > cutoff.value;
}

}  // namespace prognos
