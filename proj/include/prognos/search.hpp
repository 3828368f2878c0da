#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prognos/io.hpp"
#include "prognos/models.hpp"
#include "prognos/rng.hpp"

namespace prognos {

// A validation dataset appeared in a fold's training provenance. Never
// downgraded to a trial disqualification; the whole run aborts.
struct LeakageError : ValidationError {
  using ValidationError::ValidationError;
};

struct ParamSpec {
  enum class Kind { uniform, log_uniform, categorical };
  Kind kind = Kind::uniform;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> choices;

  static ParamSpec make_uniform(double lo, double hi);
  static ParamSpec make_log_uniform(double lo, double hi);
  static ParamSpec make_categorical(std::vector<std::string> choices);
};

struct HyperparameterSpace {
  std::vector<std::pair<std::string, ParamSpec>> params;  // sampled in order

  void add(std::string name, ParamSpec spec) { params.emplace_back(std::move(name), spec); }
  bool empty() const { return params.empty(); }
};

struct Hyperparameters {
  std::map<std::string, double> reals;
  std::map<std::string, std::string> cats;

  double real(const std::string& name) const;
  const std::string& cat(const std::string& name) const;
  std::string to_json() const;
  static Hyperparameters from_json(const std::string& json_text);
};

// Independent draws per declared parameter; fully determined by the RNG state.
Hyperparameters sample_hyperparameters(const HyperparameterSpace& space, Rng& rng);

// Rotating-evaluation dataset layout: train_only datasets are always in the
// training pool; rotate datasets each take one turn as the held-out fold.
struct DatasetPartition {
  std::vector<std::string> train_only;
  std::vector<std::string> rotate;

  void validate() const;
};

struct FoldScore {
  std::string dataset;
  double v = 0.0;    // validation concordance, averaged over seeds
  long long c = 0;   // comparable pairs backing the concordance
};

struct TrialRecord {
  int index = -1;
  Hyperparameters theta;
  std::vector<FoldScore> fold_scores;
  double overall = 0.0;  // (1/K) sum_k c_k v_k
  std::vector<std::uint64_t> seeds;
  std::shared_ptr<const RiskModel> model;  // prediction-average over folds and seeds
  std::uint64_t wall_ms = 0;
  bool disqualified = false;
  std::string reason;
};

// Everything training and validation need to see for one run.
struct DataContext {
  const CohortSet* cohorts = nullptr;
  const io::EmbeddingStore* embeddings = nullptr;  // may be null for clinical-only
  Endpoint endpoint = Endpoint::DFI;

  SubjectInputs inputs_for(const SubjectRecord& subject) const;
  std::vector<const SubjectRecord*> subjects_of(
      std::span<const std::string> dataset_ids) const;
};

// Trains one model on the given datasets. Implementations must tag the model
// with its training dataset ids.
using TrainFn = std::function<std::shared_ptr<RiskModel>(
    const DataContext& data, const std::vector<std::string>& train_datasets,
    const Hyperparameters& theta, std::uint64_t seed)>;

// Scores every subject of one dataset with the model and returns the
// concordance result for the context endpoint.
CIndexResult evaluate_model_c_index(const RiskModel& model, const DataContext& data,
                                    const std::string& dataset_id);

// Append-only delimited-text trial log; one writer, rows keyed by context and
// trial index.
class TrialLedger {
 public:
  explicit TrialLedger(std::filesystem::path file);

  void append(const std::string& context, const TrialRecord& trial);

  struct Row {
    std::string context;
    int trial = -1;
    std::string theta_json;
    std::vector<std::uint64_t> seeds;
    std::vector<FoldScore> folds;
    double overall = 0.0;
    std::uint64_t wall_ms = 0;
    bool disqualified = false;
    std::string reason;
  };
  static std::vector<Row> read(const std::filesystem::path& file);

 private:
  std::filesystem::path file_;
};

// Recomputes overall scores from the logged fold entries and reselects the
// winner (ties break to the lowest trial index).
struct ReplaySelection {
  int best_trial = -1;
  double best_overall = 0.0;
};
ReplaySelection replay_selection(std::span<const TrialLedger::Row> rows,
                                 const std::string& context);

struct MSCVOptions {
  int n_trials = 20;
  int seeds_per_theta = 1;
  std::uint64_t master_seed = 0;
  int workers = 1;
};

struct MSCVResult {
  TrialRecord best;
  std::vector<TrialRecord> trials;
};

// Rotating-fold search: for each sampled theta, train one model per rotate
// dataset on everything else, validate on the held-out dataset, and score the
// trial by the comparison-weighted sum (1/K) sum_k c_k v_k. Several seeds per
// theta are trained and their validation scores averaged. The trial's model
// averages the predictions of all fold models.
MSCVResult mscv_pathology(const DataContext& data, const DatasetPartition& partition,
                          const HyperparameterSpace& space, const TrainFn& trainer,
                          const MSCVOptions& options, TrialLedger* ledger,
                          const std::string& context_label);

struct ClinicalSplitWinner {
  std::string label;
  std::vector<std::string> validation_datasets;
  int best_trial = -1;
  Hyperparameters theta;
  double score = 0.0;
  std::shared_ptr<const RiskModel> model;
};

struct ClinicalMSCVResult {
  std::vector<ClinicalSplitWinner> winners;
  std::shared_ptr<const RiskModel> final_model;  // prediction-average of winners
};

// Simpler split rotation for low-dimensional clinical models: per split, pick
// the best of N sampled settings by validation on that split, then average
// the per-split winners.
ClinicalMSCVResult mscv_clinical(const DataContext& data,
                                 const std::vector<std::vector<std::string>>& splits,
                                 const HyperparameterSpace& space, const TrainFn& trainer,
                                 const MSCVOptions& options, TrialLedger* ledger,
                                 const std::string& context_label);

}  // namespace prognos
