#include "prognos/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prognos {

namespace {

void check_positive(const std::optional<double>& t, const char* name) {
  if (t && !(*t > 0.0 && std::isfinite(*t)))
    throw ValidationError(std::string(name) + " must be a positive finite time");
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& s, const char* (&names)[N], const char* field) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<Enum>(i);
  throw ValidationError("invalid value '" + s + "' for " + field);
}

const char* kEndpointNames[] = {"OS", "DFI", "DRFI", "RFS", "DRFS"};
const char* kReceptorNames[] = {"positive", "negative", "unknown"};
const char* kHer2Names[] = {"positive", "negative", "equivocal", "unknown"};
const char* kTStageNames[] = {"T1mi", "T1a", "T1b", "T1c", "T2", "T3", "T4", "TX", "unknown"};
const char* kNStageNames[] = {"N0", "N1", "N2", "N3", "NX", "unknown"};
const char* kYesNoNames[] = {"yes", "no", "unknown"};
const char* kRaceNames[] = {"white", "black", "asian", "other_unknown"};

}  // namespace

const char* to_string(Endpoint e) { return kEndpointNames[static_cast<int>(e)]; }
const char* to_string(ReceptorStatus v) { return kReceptorNames[static_cast<int>(v)]; }
const char* to_string(Her2Status v) { return kHer2Names[static_cast<int>(v)]; }
const char* to_string(TStage v) { return kTStageNames[static_cast<int>(v)]; }
const char* to_string(NStage v) { return kNStageNames[static_cast<int>(v)]; }
const char* to_string(YesNo v) { return kYesNoNames[static_cast<int>(v)]; }
const char* to_string(Race v) { return kRaceNames[static_cast<int>(v)]; }

Endpoint endpoint_from_string(const std::string& s) {
  return parse_enum<Endpoint>(s, kEndpointNames, "endpoint");
}
ReceptorStatus receptor_from_string(const std::string& s) {
  return parse_enum<ReceptorStatus>(s, kReceptorNames, "receptor status");
}
Her2Status her2_from_string(const std::string& s) {
  return parse_enum<Her2Status>(s, kHer2Names, "her2");
}
TStage t_stage_from_string(const std::string& s) {
  return parse_enum<TStage>(s, kTStageNames, "t_stage");
}
NStage n_stage_from_string(const std::string& s) {
  return parse_enum<NStage>(s, kNStageNames, "n_stage");
}
YesNo yes_no_from_string(const std::string& s) {
  return parse_enum<YesNo>(s, kYesNoNames, "yes/no field");
}
Race race_from_string(const std::string& s) {
  return parse_enum<Race>(s, kRaceNames, "race");
}

void OutcomeRecord::validate() const {
  check_positive(local_regional_recurrence_time, "local_regional_recurrence_time");
  check_positive(distant_recurrence_time, "distant_recurrence_time");
  check_positive(death_time, "death_time");
  check_positive(last_followup_time, "last_followup_time");
}

EndpointObservation derive_endpoint(const OutcomeRecord& outcome, Endpoint endpoint) {
  outcome.validate();

  bool use_local = false, use_distant = false, use_death = false;
  switch (endpoint) {
    case Endpoint::OS: use_death = true; break;
    case Endpoint::DFI: use_local = use_distant = true; break;
    case Endpoint::DRFI: use_distant = true; break;
    case Endpoint::RFS: use_local = use_distant = use_death = true; break;
    case Endpoint::DRFS: use_distant = use_death = true; break;
  }

  double event_time = std::numeric_limits<double>::infinity();
  bool any_event = false;
  auto consider = [&](const std::optional<double>& t) {
    if (t) {
      any_event = true;
      event_time = std::min(event_time, *t);
    }
  };
  if (use_local) consider(outcome.local_regional_recurrence_time);
  if (use_distant) consider(outcome.distant_recurrence_time);
  if (use_death) consider(outcome.death_time);

  if (any_event) return {endpoint, event_time, true};

  // Censored. Interval endpoints stop observation at death when death
  // precedes the end of follow-up.
  bool interval = endpoint == Endpoint::DFI || endpoint == Endpoint::DRFI;
  std::optional<double> censor = outcome.last_followup_time;
  if (interval && outcome.death_time) {
    censor = censor ? std::min(*censor, *outcome.death_time) : outcome.death_time;
  }
  if (!censor)
    throw ValidationError("record has no follow-up time and no qualifying event");
  return {endpoint, *censor, false};
}

void ClinicalCovariates::validate() const {
  if (!(age >= 0.0 && age <= 100.0)) throw ValidationError("age outside [0,100]");
  if (grade && (*grade < 1 || *grade > 3)) throw ValidationError("grade outside 1..3");
  if (oncotype_score && !(*oncotype_score >= 0.0 && *oncotype_score <= 100.0))
    throw ValidationError("oncotype_score outside [0,100]");
}

void EmbeddingBag::validate() const {
  if (n_patches() < 1) throw ValidationError("embedding bag '" + slide_id + "' is empty");
  if (dim() < 1) throw ValidationError("embedding bag '" + slide_id + "' has zero dim");
  if (!vectors.allFinite())
    throw ValidationError("embedding bag '" + slide_id + "' has non-finite values");
}

const Cohort& CohortSet::by_id(const std::string& dataset_id) const {
  for (const auto& c : cohorts)
    if (c.dataset_id == dataset_id) return c;
  throw MissingArtifactError("unknown dataset '" + dataset_id + "'");
}

bool CohortSet::has(const std::string& dataset_id) const {
  return std::any_of(cohorts.begin(), cohorts.end(),
                     [&](const Cohort& c) { return c.dataset_id == dataset_id; });
}

std::size_t CohortSet::total_subjects() const {
  std::size_t n = 0;
  for (const auto& c : cohorts) n += c.subjects.size();
  return n;
}

namespace {

template <typename Enum, std::size_t N>
void append_levels(std::vector<std::string>& out, const char* prefix,
                   const char* (&names)[N], Enum ref) {
  for (std::size_t i = 0; i < N; ++i)
    if (static_cast<Enum>(i) != ref)
      out.push_back(std::string(prefix) + "=" + names[i]);
}

template <typename Enum, std::size_t N>
void set_indicator(Eigen::VectorXd& x, int& pos, const char* (&)[N], Enum value, Enum ref) {
  for (std::size_t i = 0; i < N; ++i) {
    if (static_cast<Enum>(i) == ref) continue;
    x[pos++] = (value == static_cast<Enum>(i)) ? 1.0 : 0.0;
  }
}

}  // namespace

std::vector<std::string> EncodingScheme::feature_names() const {
  std::vector<std::string> names;
  names.push_back("age");
  if (include_oncotype) names.push_back("oncotype_div20");
  append_levels(names, "er", kReceptorNames, er_ref);
  append_levels(names, "pr", kReceptorNames, pr_ref);
  append_levels(names, "her2", kHer2Names, her2_ref);
  append_levels(names, "t_stage", kTStageNames, t_ref);
  append_levels(names, "n_stage", kNStageNames, n_ref);
  append_levels(names, "idc", kYesNoNames, idc_ref);
  append_levels(names, "ilc", kYesNoNames, ilc_ref);
  if (include_grade) names.push_back("grade");
  if (include_race) append_levels(names, "race", kRaceNames, race_ref);
  return names;
}

Eigen::VectorXd encode_covariates(const ClinicalCovariates& c, const EncodingScheme& scheme) {
  c.validate();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(scheme.dim());
  int pos = 0;
  x[pos++] = c.age;
  if (scheme.include_oncotype) {
    if (!c.oncotype_score)
      throw ValidationError("encoding requests oncotype but the record has none");
    x[pos++] = *c.oncotype_score / 20.0;
  }
  set_indicator(x, pos, kReceptorNames, c.er, scheme.er_ref);
  set_indicator(x, pos, kReceptorNames, c.pr, scheme.pr_ref);
  set_indicator(x, pos, kHer2Names, c.her2, scheme.her2_ref);
  set_indicator(x, pos, kTStageNames, c.t_stage, scheme.t_ref);
  set_indicator(x, pos, kNStageNames, c.n_stage, scheme.n_ref);
  set_indicator(x, pos, kYesNoNames, c.idc, scheme.idc_ref);
  set_indicator(x, pos, kYesNoNames, c.ilc, scheme.ilc_ref);
  if (scheme.include_grade) {
    if (!c.grade) throw ValidationError("encoding requests grade but the record has none");
    x[pos++] = static_cast<double>(*c.grade);
  }
  if (scheme.include_race) {
    if (!c.race) throw ValidationError("encoding requests race but the record has none");
    set_indicator(x, pos, kRaceNames, *c.race, scheme.race_ref);
  }
  return x;
}

}  // namespace prognos
