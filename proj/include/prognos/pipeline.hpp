#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "prognos/ensemble.hpp"
#include "prognos/io.hpp"
#include "prognos/search.hpp"

namespace prognos::pipeline {

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> endpoint;
  std::optional<std::string> subgroup;
  std::optional<std::string> out;
};

struct RunConfig {
  io::KeyValueConfig values;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  Endpoint endpoint = Endpoint::DFI;
  std::string subgroup;
  int workers = 0;
  std::string config_hash;  // sha256 of the canonical effective config

  static RunConfig load(const std::filesystem::path& config_file,
                        const CliOverrides& overrides);
};

// Conjunctive filter over clinical fields, age, grade, and dataset, e.g.
// "er=positive AND her2=negative AND age<50".
class SubgroupFilter {
 public:
  static SubgroupFilter parse(const std::string& expression);
  bool matches(const SubjectRecord& subject) const;
  bool empty() const { return conditions_.empty(); }
  const std::string& expression() const { return expression_; }

 private:
  struct Condition {
    std::string field;
    std::string op;
    std::string value;
  };
  std::vector<Condition> conditions_;
  std::string expression_;
};

// Members of a stored modality ensemble plus where they came from.
struct LoadedEnsemble {
  EnsembleSpec spec;
  std::filesystem::path manifest_path;
};

LoadedEnsemble load_ensemble_manifest(const std::filesystem::path& manifest_path);

struct LoadedMultimodal {
  LoadedEnsemble clinical;
  LoadedEnsemble pathology;
  RiskCutoff cutoff;
};

LoadedMultimodal load_multimodal_manifest(const std::filesystem::path& manifest_path);

struct FusedScore {
  double clinical = 0.0;
  double pathology = 0.0;
  double fused = 0.0;
  double fused_unclamped = 0.0;
};

FusedScore score_subject(const LoadedMultimodal& ensemble, const SubjectInputs& inputs);

// Training callbacks and default search spaces, also used by the tests.
TrainFn make_pathology_trainer(const std::string& combo, const RunConfig& config);
TrainFn make_clinical_trainer();
HyperparameterSpace pathology_space(const std::string& combo);
HyperparameterSpace clinical_space();

void cmd_synth(const RunConfig& config);
void cmd_tile(const RunConfig& config);
void cmd_train_pathology(const RunConfig& config);
void cmd_train_clinical(const RunConfig& config);
void cmd_build_ensemble(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_pool(const RunConfig& config);
void cmd_stratify(const RunConfig& config);
void cmd_report(const RunConfig& config);

}  // namespace prognos::pipeline
