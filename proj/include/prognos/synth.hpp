#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prognos/domain.hpp"
#include "prognos/io.hpp"

namespace prognos {

// Reproducible cohorts with a known subject-level risk: a linear effect over
// the leading embedding coordinates plus fixed clinical effects. Event and
// censoring times are exponential; each cohort carries its own baseline
// log-hazard shift.
struct SynthCohortSpec {
  std::string dataset_id;
  int n_subjects = 100;
  double baseline_shift = 0.0;  // added to the log-hazard of every subject
};

struct SynthSpec {
  std::vector<SynthCohortSpec> cohorts;
  int embedding_dim = 32;
  int signal_dims = 4;       // embedding coordinates carrying risk signal
  int patches_min = 8;
  int patches_max = 24;
  double patch_noise = 0.6;
  double embedding_effect = 2.4;  // scale of the planted linear effect
  double clinical_effect = 1.0;   // scale of the clinical contributions
  double censoring_rate = 0.3;    // target fraction censored for recurrence
  double followup_cap_years = 30.0;
  double recurrence_base_log_hazard = -1.6;
  double death_base_log_hazard = -4.2;
  double multi_slide_fraction = 0.1;
  bool with_oncotype = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  CohortSet cohorts;
  io::EmbeddingStore embeddings;
  // True planted log-risk per subject id, the oracle for concordance checks.
  std::map<std::string, double> true_risk;
};

SynthResult synth(const SynthSpec& spec);

// Writes cohorts/<dataset>.csv, embeddings/<slide>, true_risks.tsv.
void write_synth(const SynthResult& result, const std::filesystem::path& out_dir);

}  // namespace prognos
