#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "prognos/common.hpp"

namespace prognos {

enum class Endpoint { OS, DFI, DRFI, RFS, DRFS };

const char* to_string(Endpoint e);
Endpoint endpoint_from_string(const std::string& s);
inline constexpr Endpoint kAllEndpoints[] = {Endpoint::OS, Endpoint::DFI, Endpoint::DRFI,
                                             Endpoint::RFS, Endpoint::DRFS};

// Raw per-subject outcome events, all times in years from diagnosis.
struct OutcomeRecord {
  std::optional<double> local_regional_recurrence_time;
  std::optional<double> distant_recurrence_time;
  std::optional<double> death_time;
  std::optional<double> last_followup_time;

  // Throws ValidationError when a present time is non-positive or non-finite.
  void validate() const;
};

struct EndpointObservation {
  Endpoint endpoint;
  double time;
  bool event;

  TimeEvent time_event() const { return {time, event}; }
};

// Maps raw outcomes to a (time, event) pair for one endpoint. Event kinds per
// endpoint: OS counts death; DFI counts local-regional and distant recurrence;
// DRFI counts distant recurrence; RFS counts all three; DRFS counts distant
// recurrence and death. Interval endpoints (DFI, DRFI) censor at death.
EndpointObservation derive_endpoint(const OutcomeRecord& outcome, Endpoint endpoint);

enum class ReceptorStatus { positive, negative, unknown };
enum class Her2Status { positive, negative, equivocal, unknown };
enum class TStage { T1mi, T1a, T1b, T1c, T2, T3, T4, TX, unknown };
enum class NStage { N0, N1, N2, N3, NX, unknown };
enum class YesNo { yes, no, unknown };
enum class Race { white, black, asian, other_unknown };

const char* to_string(ReceptorStatus v);
const char* to_string(Her2Status v);
const char* to_string(TStage v);
const char* to_string(NStage v);
const char* to_string(YesNo v);
const char* to_string(Race v);
ReceptorStatus receptor_from_string(const std::string& s);
Her2Status her2_from_string(const std::string& s);
TStage t_stage_from_string(const std::string& s);
NStage n_stage_from_string(const std::string& s);
YesNo yes_no_from_string(const std::string& s);
Race race_from_string(const std::string& s);

struct ClinicalCovariates {
  double age = 0.0;  // years, [0,100]
  ReceptorStatus er = ReceptorStatus::unknown;
  ReceptorStatus pr = ReceptorStatus::unknown;
  Her2Status her2 = Her2Status::unknown;
  TStage t_stage = TStage::unknown;
  NStage n_stage = NStage::unknown;
  YesNo idc = YesNo::unknown;
  YesNo ilc = YesNo::unknown;
  std::optional<int> grade;            // Nottingham grade, 1..3
  std::optional<Race> race;
  std::optional<double> oncotype_score;  // [0,100]

  void validate() const;
};

struct SubjectRecord {
  std::string subject_id;
  std::string dataset_id;
  ClinicalCovariates clinical;
  OutcomeRecord outcome;
  std::vector<std::string> embedding_refs;  // slide ids
};

// Variable-size set of fixed-dimension patch feature vectors for one slide.
struct EmbeddingBag {
  std::string slide_id;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> vectors;

  int dim() const { return static_cast<int>(vectors.cols()); }
  int n_patches() const { return static_cast<int>(vectors.rows()); }
  void validate() const;
};

struct Cohort {
  std::string dataset_id;
  std::vector<SubjectRecord> subjects;
};

struct CohortSet {
  std::vector<Cohort> cohorts;

  const Cohort& by_id(const std::string& dataset_id) const;
  bool has(const std::string& dataset_id) const;
  std::size_t total_subjects() const;
};

// One-hot encoding layout for the clinical covariates. Each categorical field
// gets an indicator per non-reference level; unknown is an ordinary level.
struct EncodingScheme {
  ReceptorStatus er_ref = ReceptorStatus::negative;
  ReceptorStatus pr_ref = ReceptorStatus::negative;
  Her2Status her2_ref = Her2Status::negative;
  TStage t_ref = TStage::T1mi;
  NStage n_ref = NStage::N0;
  YesNo idc_ref = YesNo::no;
  YesNo ilc_ref = YesNo::no;
  Race race_ref = Race::white;
  bool include_grade = false;     // numeric slot, 1..3
  bool include_race = false;      // indicators vs race_ref
  bool include_oncotype = false;  // numeric slot, raw score / 20

  std::vector<std::string> feature_names() const;
  int dim() const { return static_cast<int>(feature_names().size()); }
};

Eigen::VectorXd encode_covariates(const ClinicalCovariates& c, const EncodingScheme& scheme);

}  // namespace prognos
