#include "prognos/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prognos/parallel.hpp"

namespace prognos {

namespace {

std::string join_ids(std::span<const std::string> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ",";
    out += ids[i];
  }
  return out;
}

void assert_no_leakage(const RiskModel& model, const std::string& validation_dataset,
                       const std::string& context) {
  if (model.training_datasets().empty())
    throw LeakageError(context + ": trained model carries no dataset provenance");
  if (model.training_datasets().count(validation_dataset))
    throw LeakageError(context + ": validation dataset '" + validation_dataset +
                       "' leaked into training");
}

}  // namespace

ParamSpec ParamSpec::make_uniform(double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("uniform parameter: lo must be < hi");
  ParamSpec spec;
  spec.kind = Kind::uniform;
  spec.lo = lo;
  spec.hi = hi;
  return spec;
}

ParamSpec ParamSpec::make_log_uniform(double lo, double hi) {
  if (!(lo > 0.0 && lo < hi))
    throw ValidationError("log-uniform parameter: need 0 < lo < hi");
  ParamSpec spec;
  spec.kind = Kind::log_uniform;
  spec.lo = lo;
  spec.hi = hi;
  return spec;
}

ParamSpec ParamSpec::make_categorical(std::vector<std::string> choices) {
  if (choices.empty()) throw ValidationError("categorical parameter: no choices");
  ParamSpec spec;
  spec.kind = Kind::categorical;
  spec.choices = std::move(choices);
  return spec;
}

double Hyperparameters::real(const std::string& name) const {
  auto it = reals.find(name);
  if (it == reals.end()) throw ValidationError("hyperparameter '" + name + "' not sampled");
  return it->second;
}

const std::string& Hyperparameters::cat(const std::string& name) const {
  auto it = cats.find(name);
  if (it == cats.end()) throw ValidationError("hyperparameter '" + name + "' not sampled");
  return it->second;
}

std::string Hyperparameters::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : reals) j[k] = v;
  for (const auto& [k, v] : cats) j[k] = v;
  return j.dump();
}

Hyperparameters Hyperparameters::from_json(const std::string& json_text) {
  Hyperparameters theta;
  nlohmann::json j = nlohmann::json::parse(json_text);
  for (const auto& [k, v] : j.items()) {
    if (v.is_string())
      theta.cats[k] = v.get<std::string>();
    else
      theta.reals[k] = v.get<double>();
  }
  return theta;
}

Hyperparameters sample_hyperparameters(const HyperparameterSpace& space, Rng& rng) {
  if (space.empty()) throw ValidationError("hyperparameter space is empty");
  Hyperparameters theta;
  for (const auto& [name, spec] : space.params) {
    switch (spec.kind) {
      case ParamSpec::Kind::uniform:
        theta.reals[name] = rng.uniform(spec.lo, spec.hi);
        break;
      case ParamSpec::Kind::log_uniform:
        theta.reals[name] = rng.log_uniform(spec.lo, spec.hi);
        break;
      case ParamSpec::Kind::categorical:
        theta.cats[name] = spec.choices[rng.index(spec.choices.size())];
        break;
    }
  }
  return theta;
}

void DatasetPartition::validate() const {
  if (rotate.empty()) throw ValidationError("partition: rotate set is empty");
  std::set<std::string> seen;
  for (const auto& id : train_only)
    if (!seen.insert(id).second)
      throw ValidationError("partition: duplicate dataset '" + id + "'");
  for (const auto& id : rotate)
    if (!seen.insert(id).second)
      throw ValidationError("partition: dataset '" + id + "' listed twice");
}

SubjectInputs DataContext::inputs_for(const SubjectRecord& subject) const {
  SubjectInputs inputs;
  inputs.subject = &subject;
  if (embeddings) {
    for (const auto& slide_id : subject.embedding_refs) {
      const EmbeddingBag* bag = embeddings->find(slide_id);
      if (bag) inputs.bags.push_back(bag);
    }
  }
  return inputs;
}

std::vector<const SubjectRecord*> DataContext::subjects_of(
    std::span<const std::string> dataset_ids) const {
  std::vector<const SubjectRecord*> out;
  for (const auto& id : dataset_ids) {
    const Cohort& cohort = cohorts->by_id(id);
    for (const auto& subject : cohort.subjects) out.push_back(&subject);
  }
  return out;
}

CIndexResult evaluate_model_c_index(const RiskModel& model, const DataContext& data,
                                    const std::string& dataset_id) {
  const Cohort& cohort = data.cohorts->by_id(dataset_id);
  std::vector<ScoredObservation> scored;
  scored.reserve(cohort.subjects.size());
  for (const auto& subject : cohort.subjects) {
    EndpointObservation obs = derive_endpoint(subject.outcome, data.endpoint);
    double risk = model.score_subject(data.inputs_for(subject));
    scored.push_back({risk, obs.time, obs.event});
  }
  return c_index(scored);
}

TrialLedger::TrialLedger(std::filesystem::path file) : file_(std::move(file)) {
  std::filesystem::create_directories(file_.parent_path());
  if (!std::filesystem::exists(file_)) {
    std::ofstream out(file_);
    out << "context\ttrial\ttheta\tseeds\tfolds\toverall\tstatus\treason\twall_ms\n";
  }
}

void TrialLedger::append(const std::string& context, const TrialRecord& trial) {
  std::ofstream out(file_, std::ios::app);
  if (!out) throw ValidationError("cannot append to trial ledger '" + file_.string() + "'");
  out << context << '\t' << trial.index << '\t' << trial.theta.to_json() << '\t';
  for (std::size_t i = 0; i < trial.seeds.size(); ++i)
    out << (i ? "," : "") << trial.seeds[i];
  out << '\t';
  for (std::size_t i = 0; i < trial.fold_scores.size(); ++i) {
    const auto& fold = trial.fold_scores[i];
    out << (i ? ";" : "") << fold.dataset << '=' << io::fmt_double(fold.v) << ':' << fold.c;
  }
  out << '\t' << io::fmt_double(trial.overall) << '\t'
      << (trial.disqualified ? "disqualified" : "ok") << '\t' << trial.reason << '\t'
      << trial.wall_ms << '\n';
}

std::vector<TrialLedger::Row> TrialLedger::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifactError("cannot open trial ledger '" + file.string() + "'");
  std::vector<Row> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string current;
    for (char c : line) {
      if (c == '\t') {
        cells.push_back(current);
        current.clear();
      } else {
        current += c;
      }
    }
    cells.push_back(current);
    if (cells.size() != 9)
      throw ValidationError("trial ledger row with " + std::to_string(cells.size()) +
                            " fields");
    Row row;
    row.context = cells[0];
    row.trial = std::stoi(cells[1]);
    row.theta_json = cells[2];
    if (!cells[3].empty()) {
      std::istringstream seeds(cells[3]);
      std::string token;
      while (std::getline(seeds, token, ',')) row.seeds.push_back(std::stoull(token));
    }
    if (!cells[4].empty()) {
      std::istringstream folds(cells[4]);
      std::string token;
      while (std::getline(folds, token, ';')) {
        FoldScore fold;
        std::size_t eq = token.find('=');
        std::size_t colon = token.rfind(':');
        if (eq == std::string::npos || colon == std::string::npos || colon < eq)
          throw ValidationError("malformed fold entry '" + token + "'");
        fold.dataset = token.substr(0, eq);
        fold.v = std::stod(token.substr(eq + 1, colon - eq - 1));
        fold.c = std::stoll(token.substr(colon + 1));
        row.folds.push_back(fold);
      }
    }
    row.overall = std::stod(cells[5]);
    row.disqualified = cells[6] != "ok";
    row.reason = cells[7];
    row.wall_ms = std::stoull(cells[8]);
    rows.push_back(std::move(row));
  }
  return rows;
}

ReplaySelection replay_selection(std::span<const TrialLedger::Row> rows,
                                 const std::string& context) {
  ReplaySelection selection;
  bool any = false;
  for (const auto& row : rows) {
    if (row.context != context || row.disqualified) continue;
    double overall = 0.0;
    for (const auto& fold : row.folds)
      overall += static_cast<double>(fold.c) * fold.v;
    overall /= static_cast<double>(row.folds.size());
    if (!any || overall > selection.best_overall) {
      any = true;
      selection.best_overall = overall;
      selection.best_trial = row.trial;
    }
  }
  if (!any) throw ValidationError("no usable trials for context '" + context + "'");
  return selection;
}

MSCVResult mscv_pathology(const DataContext& data, const DatasetPartition& partition,
                          const HyperparameterSpace& space, const TrainFn& trainer,
                          const MSCVOptions& options, TrialLedger* ledger,
                          const std::string& context_label) {
  partition.validate();
  if (options.n_trials < 1) throw ValidationError("search: need at least one trial");
  const int n_folds = static_cast<int>(partition.rotate.size());
  const int n_seeds = std::max(1, options.seeds_per_theta);

  // Validation folds need comparable pairs for the weighted score.
  for (const auto& id : partition.rotate) data.cohorts->by_id(id);

  std::vector<TrialRecord> trials(static_cast<std::size_t>(options.n_trials));
  parallel_for(options.n_trials, options.workers, [&](long t) {
    auto started = std::chrono::steady_clock::now();
    TrialRecord& trial = trials[static_cast<std::size_t>(t)];
    trial.index = static_cast<int>(t);
    Rng theta_rng(derive_seed(options.master_seed, {static_cast<std::uint64_t>(t), 0xA1}));
    trial.theta = sample_hyperparameters(space, theta_rng);

    try {
      std::vector<double> fold_v(static_cast<std::size_t>(n_folds), 0.0);
      std::vector<long long> fold_c(static_cast<std::size_t>(n_folds), 0);
      std::vector<std::shared_ptr<const RiskModel>> parts;
      for (int s = 0; s < n_seeds; ++s) {
        std::uint64_t seed =
            derive_seed(options.master_seed, {static_cast<std::uint64_t>(t),
                                              static_cast<std::uint64_t>(s), 0xB2});
        trial.seeds.push_back(seed);
        for (int k = 0; k < n_folds; ++k) {
          std::vector<std::string> train_ids = partition.train_only;
          for (int m = 0; m < n_folds; ++m)
            if (m != k) train_ids.push_back(partition.rotate[m]);
          const std::string& validation_id = partition.rotate[k];

          std::shared_ptr<RiskModel> model = trainer(
              data, train_ids, trial.theta, derive_seed(seed, {static_cast<std::uint64_t>(k)}));
          assert_no_leakage(*model, validation_id, context_label);

          CIndexResult v = evaluate_model_c_index(*model, data, validation_id);
          if (!v.defined)
            throw ValidationError("validation dataset '" + validation_id +
                                  "' has no comparable pairs");
          fold_v[static_cast<std::size_t>(k)] += v.value;
          fold_c[static_cast<std::size_t>(k)] = v.comparable_pairs;
          parts.push_back(std::move(model));
        }
      }
      double overall = 0.0;
      for (int k = 0; k < n_folds; ++k) {
        FoldScore fold;
        fold.dataset = partition.rotate[static_cast<std::size_t>(k)];
        fold.v = fold_v[static_cast<std::size_t>(k)] / n_seeds;
        fold.c = fold_c[static_cast<std::size_t>(k)];
        trial.fold_scores.push_back(fold);
        overall += static_cast<double>(fold.c) * fold.v;
      }
      trial.overall = overall / n_folds;
      trial.model = std::make_shared<AveragedRiskModel>(std::move(parts));
    } catch (const LeakageError&) {
      throw;
    } catch (const std::exception& e) {
      trial.disqualified = true;
      trial.reason = e.what();
      trial.fold_scores.clear();
      trial.model.reset();
      trial.overall = 0.0;
    }
    trial.wall_ms = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started)
            .count());
  });

  if (ledger)
    for (const auto& trial : trials) ledger->append(context_label, trial);

  MSCVResult result;
  result.trials = trials;
  bool any = false;
  for (const auto& trial : trials) {
    if (trial.disqualified) continue;
    if (!any || trial.overall > result.best.overall) {
      any = true;
      result.best = trial;
    }
  }
  if (!any)
    throw NumericalError("search '" + context_label + "': every trial was disqualified");
  return result;
}

ClinicalMSCVResult mscv_clinical(const DataContext& data,
                                 const std::vector<std::vector<std::string>>& splits,
                                 const HyperparameterSpace& space, const TrainFn& trainer,
                                 const MSCVOptions& options, TrialLedger* ledger,
                                 const std::string& context_label) {
  if (splits.size() < 2) throw ValidationError("clinical search: need at least 2 splits");
  if (options.n_trials < 1) throw ValidationError("search: need at least one trial");
  const int n_splits = static_cast<int>(splits.size());

  ClinicalMSCVResult result;
  std::vector<std::vector<TrialRecord>> all_trials(static_cast<std::size_t>(n_splits));

  for (int k = 0; k < n_splits; ++k) {
    std::vector<std::string> train_ids;
    for (int m = 0; m < n_splits; ++m)
      if (m != k) train_ids.insert(train_ids.end(), splits[m].begin(), splits[m].end());
    const std::vector<std::string>& validation_ids = splits[static_cast<std::size_t>(k)];
    std::string split_label = context_label + "/split_" + join_ids(validation_ids);

    std::vector<TrialRecord>& trials = all_trials[static_cast<std::size_t>(k)];
    trials.resize(static_cast<std::size_t>(options.n_trials));
    parallel_for(options.n_trials, options.workers, [&](long t) {
      auto started = std::chrono::steady_clock::now();
      TrialRecord& trial = trials[static_cast<std::size_t>(t)];
      trial.index = static_cast<int>(t);
      Rng theta_rng(derive_seed(options.master_seed,
                                {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t),
                                 0xC3}));
      trial.theta = sample_hyperparameters(space, theta_rng);
      std::uint64_t seed = derive_seed(options.master_seed,
                                       {static_cast<std::uint64_t>(k),
                                        static_cast<std::uint64_t>(t), 0xD4});
      trial.seeds.push_back(seed);
      try {
        std::shared_ptr<RiskModel> model = trainer(data, train_ids, trial.theta, seed);
        for (const auto& id : validation_ids) assert_no_leakage(*model, id, split_label);

        double v_sum = 0.0;
        long long c_sum = 0;
        for (const auto& id : validation_ids) {
          CIndexResult v = evaluate_model_c_index(*model, data, id);
          if (!v.defined) continue;
          v_sum += v.value * static_cast<double>(v.comparable_pairs);
          c_sum += v.comparable_pairs;
        }
        if (c_sum == 0)
          throw ValidationError("validation split has no comparable pairs");
        FoldScore fold;
        fold.dataset = join_ids(validation_ids);
        fold.v = v_sum / static_cast<double>(c_sum);
        fold.c = c_sum;
        trial.fold_scores.push_back(fold);
        trial.overall = static_cast<double>(fold.c) * fold.v;
        trial.model = std::move(model);
      } catch (const LeakageError&) {
        throw;
      } catch (const std::exception& e) {
        trial.disqualified = true;
        trial.reason = e.what();
        trial.model.reset();
      }
      trial.wall_ms = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - started)
              .count());
    });

    if (ledger)
      for (const auto& trial : trials) ledger->append(split_label, trial);

    const TrialRecord* best = nullptr;
    for (const auto& trial : trials) {
      if (trial.disqualified) continue;
      if (!best || trial.overall > best->overall) best = &trial;
    }
    if (!best)
      throw NumericalError("clinical search split '" + split_label +
                           "': every trial was disqualified");
    ClinicalSplitWinner winner;
    winner.label = split_label;
    winner.validation_datasets = validation_ids;
    winner.best_trial = best->index;
    winner.theta = best->theta;
    winner.score = best->overall;
    winner.model = best->model;
    result.winners.push_back(std::move(winner));
  }

  std::vector<std::shared_ptr<const RiskModel>> parts;
  for (const auto& winner : result.winners) parts.push_back(winner.model);
  result.final_model = std::make_shared<AveragedRiskModel>(std::move(parts));
  return result;
}

}  // namespace prognos
