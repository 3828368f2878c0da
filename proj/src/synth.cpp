#include "prognos/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "prognos/rng.hpp"

namespace prognos {

namespace {

// Fixed clinical effect map on the log-hazard scale (scaled by
// spec.clinical_effect). Chosen so that adverse categories raise risk.
double clinical_log_hazard(const ClinicalCovariates& c) {
  double risk = 0.012 * (c.age - 58.0);
  if (c.er == ReceptorStatus::negative) risk += 0.45;
  if (c.pr == ReceptorStatus::negative) risk += 0.25;
  if (c.her2 == Her2Status::positive) risk += 0.35;
  switch (c.t_stage) {
    case TStage::T2: risk += 0.35; break;
    case TStage::T3: risk += 0.7; break;
    case TStage::T4: risk += 1.0; break;
    default: break;
  }
  switch (c.n_stage) {
    case NStage::N1: risk += 0.4; break;
    case NStage::N2: risk += 0.8; break;
    case NStage::N3: risk += 1.1; break;
    default: break;
  }
  if (c.grade && *c.grade == 3) risk += 0.3;
  return risk;
}

ClinicalCovariates sample_clinical(Rng& rng, bool with_oncotype) {
  ClinicalCovariates c;
  c.age = std::clamp(rng.normal(58.0, 12.0), 25.0, 95.0);
  double u = rng.uniform01();
  c.er = u < 0.78 ? ReceptorStatus::positive
                  : (u < 0.92 ? ReceptorStatus::negative : ReceptorStatus::unknown);
  u = rng.uniform01();
  c.pr = u < 0.65 ? ReceptorStatus::positive
                  : (u < 0.88 ? ReceptorStatus::negative : ReceptorStatus::unknown);
  u = rng.uniform01();
  c.her2 = u < 0.12 ? Her2Status::positive
                    : (u < 0.86 ? Her2Status::negative
                                : (u < 0.93 ? Her2Status::equivocal : Her2Status::unknown));
  u = rng.uniform01();
  if (u < 0.08)
    c.t_stage = TStage::T1b;
  else if (u < 0.42)
    c.t_stage = TStage::T1c;
  else if (u < 0.80)
    c.t_stage = TStage::T2;
  else if (u < 0.88)
    c.t_stage = TStage::T3;
  else if (u < 0.92)
    c.t_stage = TStage::T4;
  else
    c.t_stage = TStage::unknown;
  u = rng.uniform01();
  if (u < 0.55)
    c.n_stage = NStage::N0;
  else if (u < 0.82)
    c.n_stage = NStage::N1;
  else if (u < 0.90)
    c.n_stage = NStage::N2;
  else if (u < 0.95)
    c.n_stage = NStage::N3;
  else
    c.n_stage = NStage::unknown;
  u = rng.uniform01();
  c.idc = u < 0.75 ? YesNo::yes : (u < 0.95 ? YesNo::no : YesNo::unknown);
  u = rng.uniform01();
  c.ilc = u < 0.12 ? YesNo::yes : (u < 0.95 ? YesNo::no : YesNo::unknown);
  c.grade = 1 + static_cast<int>(rng.index(3));
  u = rng.uniform01();
  c.race = u < 0.70 ? Race::white
                    : (u < 0.85 ? Race::black : (u < 0.93 ? Race::asian : Race::other_unknown));
  if (with_oncotype) c.oncotype_score = std::clamp(rng.normal(25.0, 12.0), 0.0, 100.0);
  return c;
}

// Expected fraction of subjects censored for recurrence given exponential
// censoring at rate m, administrative cap, per-subject recurrence hazards and
// death hazards (death also censors the interval endpoint).
double expected_censoring(const std::vector<double>& recurrence_rates,
                          const std::vector<double>& stop_rates, double m, double cap) {
  double total = 0.0;
  for (std::size_t i = 0; i < recurrence_rates.size(); ++i) {
    double lambda = recurrence_rates[i];
    double competing = stop_rates[i] + m;
    // P(recurrence observed) = λ/(λ+ρ) (1 - e^{-(λ+ρ) cap})
    double rate = lambda + competing;
    double p_event = lambda / rate * (1.0 - std::exp(-rate * cap));
    total += 1.0 - p_event;
  }
  return total / static_cast<double>(recurrence_rates.size());
}

}  // namespace

void SynthSpec::validate() const {
  if (cohorts.empty()) throw ValidationError("synth: no cohorts");
  if (embedding_dim < 1 || signal_dims < 0 || signal_dims > embedding_dim)
    throw ValidationError("synth: invalid embedding dimensions");
  if (patches_min < 1 || patches_max < patches_min)
    throw ValidationError("synth: invalid patch counts");
  if (!(censoring_rate >= 0.0 && censoring_rate < 1.0))
    throw ValidationError("synth: censoring rate outside [0,1)");
  if (!(followup_cap_years > 0.0)) throw ValidationError("synth: non-positive follow-up cap");
  for (const auto& cohort : cohorts) {
    if (cohort.n_subjects < 1) throw ValidationError("synth: empty cohort");
    if (cohort.dataset_id.empty()) throw ValidationError("synth: cohort without id");
  }
}

SynthResult synth(const SynthSpec& spec) {
  spec.validate();
  SynthResult result;

  // One fixed unit direction over the signal coordinates defines the planted
  // embedding effect.
  Rng direction_rng(derive_seed(spec.seed, {0xE5}));
  Eigen::VectorXd signal_direction = Eigen::VectorXd::Zero(spec.embedding_dim);
  for (int d = 0; d < spec.signal_dims; ++d) signal_direction[d] = direction_rng.normal();
  if (spec.signal_dims > 0) signal_direction.normalize();

  for (std::size_t ci = 0; ci < spec.cohorts.size(); ++ci) {
    const SynthCohortSpec& cohort_spec = spec.cohorts[ci];
    Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(ci) + 1}));
    Cohort cohort;
    cohort.dataset_id = cohort_spec.dataset_id;

    std::vector<double> recurrence_rates, stop_rates;
    struct Draft {
      SubjectRecord subject;
      double risk = 0.0;
      Eigen::VectorXd latent;
    };
    std::vector<Draft> drafts;

    for (int i = 0; i < cohort_spec.n_subjects; ++i) {
      Draft draft;
      draft.subject.subject_id =
          cohort_spec.dataset_id + "_" + std::to_string(1000 + i);
      draft.subject.dataset_id = cohort_spec.dataset_id;
      draft.subject.clinical = sample_clinical(rng, spec.with_oncotype);

      draft.latent = Eigen::VectorXd::Zero(spec.embedding_dim);
      for (int d = 0; d < spec.signal_dims; ++d) draft.latent[d] = rng.normal();

      draft.risk = spec.embedding_effect * signal_direction.dot(draft.latent) +
                   spec.clinical_effect * clinical_log_hazard(draft.subject.clinical);
      recurrence_rates.push_back(
          std::exp(spec.recurrence_base_log_hazard + cohort_spec.baseline_shift + draft.risk));
      stop_rates.push_back(
          std::exp(spec.death_base_log_hazard + cohort_spec.baseline_shift + 0.7 * draft.risk));
      drafts.push_back(std::move(draft));
    }

    // Solve the exponential censoring rate m for the requested censored
    // fraction of the recurrence endpoint by bisection.
    double min_censoring = expected_censoring(recurrence_rates, stop_rates, 0.0,
                                              spec.followup_cap_years);
    if (spec.censoring_rate < min_censoring - 1e-9)
      throw ValidationError(
          "synth: infeasible censoring rate " + io::fmt_double(spec.censoring_rate) +
          " (death and the follow-up cap alone censor " + io::fmt_double(min_censoring) + ")");
    double m_lo = 0.0, m_hi = 1.0;
    while (expected_censoring(recurrence_rates, stop_rates, m_hi, spec.followup_cap_years) <
               spec.censoring_rate &&
           m_hi < 1e6)
      m_hi *= 2.0;
    for (int iter = 0; iter < 200; ++iter) {
      double mid = 0.5 * (m_lo + m_hi);
      if (expected_censoring(recurrence_rates, stop_rates, mid, spec.followup_cap_years) <
          spec.censoring_rate)
        m_lo = mid;
      else
        m_hi = mid;
    }
    double censor_rate = 0.5 * (m_lo + m_hi);

    for (std::size_t i = 0; i < drafts.size(); ++i) {
      Draft& draft = drafts[i];
      double recurrence_time = rng.exponential(recurrence_rates[i]);
      double death_time = rng.exponential(
          std::exp(spec.death_base_log_hazard + cohort_spec.baseline_shift + 0.7 * draft.risk));
      double censor_time = censor_rate > 0.0 ? rng.exponential(censor_rate)
                                             : std::numeric_limits<double>::infinity();
      double followup_end = std::min({death_time, censor_time, spec.followup_cap_years});

      OutcomeRecord outcome;
      outcome.last_followup_time = std::max(followup_end, 1e-3);
      if (death_time <= std::min(censor_time, spec.followup_cap_years))
        outcome.death_time = std::max(death_time, 1e-3);
      if (recurrence_time <= followup_end) {
        double t = std::max(recurrence_time, 1e-3);
        if (rng.uniform01() < 0.45)
          outcome.local_regional_recurrence_time = t;
        else
          outcome.distant_recurrence_time = t;
      }
      draft.subject.outcome = outcome;

      int n_slides = rng.uniform01() < spec.multi_slide_fraction ? 2 : 1;
      for (int s = 0; s < n_slides; ++s) {
        EmbeddingBag bag;
        bag.slide_id = draft.subject.subject_id + "_s" + std::to_string(s);
        int n_patches = spec.patches_min +
                        static_cast<int>(rng.index(spec.patches_max - spec.patches_min + 1));
        bag.vectors.resize(n_patches, spec.embedding_dim);
        for (int pi = 0; pi < n_patches; ++pi)
          for (int d = 0; d < spec.embedding_dim; ++d)
            bag.vectors(pi, d) = static_cast<float>(
                draft.latent[d] + spec.patch_noise * rng.normal());
        draft.subject.embedding_refs.push_back(bag.slide_id);
        result.embeddings.add(std::move(bag));
      }

      result.true_risk[draft.subject.subject_id] = draft.risk;
      cohort.subjects.push_back(std::move(draft.subject));
    }
    result.cohorts.cohorts.push_back(std::move(cohort));
  }
  return result;
}

void write_synth(const SynthResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "cohorts");
  for (const auto& cohort : result.cohorts.cohorts)
    io::write_cohort_csv(cohort, out_dir / "cohorts" / (cohort.dataset_id + ".csv"));

  for (const auto& [slide_id, bag] : result.embeddings.all())
    io::write_embedding_file(bag, out_dir / "embeddings");

  std::ofstream risks(out_dir / "true_risks.tsv");
  risks << "subject_id\ttrue_risk\n";
  for (const auto& [subject_id, risk] : result.true_risk)
    risks << subject_id << '\t' << io::fmt_double(risk) << '\n';
}

}  // namespace prognos
