#include "prognos/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "prognos/mil.hpp"
#include "prognos/parallel.hpp"
#include "prognos/synth.hpp"
#include "prognos/tiling.hpp"

#include "pipeline_internal.hpp"

namespace prognos::pipeline {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& config_file,
                          const CliOverrides& overrides) {
  RunConfig config;
  config.values = io::KeyValueConfig::parse_file(config_file);
  if (overrides.seed) config.values.set("seed", std::to_string(*overrides.seed));
  if (overrides.endpoint) config.values.set("endpoint", *overrides.endpoint);
  if (overrides.subgroup) config.values.set("subgroup", *overrides.subgroup);
  if (overrides.out) config.values.set("out", *overrides.out);

  config.seed = static_cast<std::uint64_t>(config.values.get_long("seed", 1));
  config.endpoint = endpoint_from_string(config.values.get_or("endpoint", "DFI"));
  config.subgroup = config.values.get_or("subgroup", "");
  config.workers = static_cast<int>(config.values.get_long("workers", 0));
  if (!config.values.has("out")) throw ValidationError("config misses required key 'out'");
  config.out_dir = io::resolve_path(config.values.get("out"));
  config.config_hash = io::sha256_hex(config.values.canonical_without({"out"}));
  return config;
}

SubgroupFilter SubgroupFilter::parse(const std::string& expression) {
  SubgroupFilter filter;
  filter.expression_ = expression;
  std::string text = expression;
  if (text.find_first_not_of(" \t") == std::string::npos) return filter;

  // Split on the AND keyword (case-insensitive).
  std::vector<std::string> clauses;
  std::size_t pos = 0;
  std::string upper_text = text;
  std::transform(upper_text.begin(), upper_text.end(), upper_text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  while (true) {
    std::size_t next = upper_text.find(" AND ", pos);
    clauses.push_back(text.substr(pos, next == std::string::npos ? next : next - pos));
    if (next == std::string::npos) break;
    pos = next + 5;
  }

  for (const auto& clause : clauses) {
    static const char* ops[] = {"<=", ">=", "!=", "<", ">", "="};
    std::size_t op_pos = std::string::npos;
    std::string op;
    for (const char* candidate : ops) {
      std::size_t p = clause.find(candidate);
      if (p != std::string::npos && (op_pos == std::string::npos || p < op_pos)) {
        op_pos = p;
        op = candidate;
      }
    }
    if (op_pos == std::string::npos)
      throw ValidationError("subgroup clause '" + clause + "' has no comparison operator");
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    Condition condition;
    condition.field = lower(trim(clause.substr(0, op_pos)));
    condition.op = op;
    condition.value = trim(clause.substr(op_pos + op.size()));
    if (condition.field.empty() || condition.value.empty())
      throw ValidationError("subgroup clause '" + clause + "' is incomplete");
    static const std::set<std::string> known_fields = {
        "er",  "pr",   "her2",    "t_stage", "n_stage", "idc",
        "ilc", "race", "dataset", "age",     "grade",   "oncotype"};
    if (!known_fields.count(condition.field))
      throw ValidationError("unknown subgroup field '" + condition.field + "'");
    filter.conditions_.push_back(std::move(condition));
  }
  return filter;
}

bool SubgroupFilter::matches(const SubjectRecord& subject) const {
  for (const auto& condition : conditions_) {
    bool numeric = condition.field == "age" || condition.field == "grade" ||
                   condition.field == "oncotype";
    if (numeric) {
      double actual;
      if (condition.field == "age") {
        actual = subject.clinical.age;
      } else if (condition.field == "grade") {
        if (!subject.clinical.grade) return false;
        actual = *subject.clinical.grade;
      } else {
        if (!subject.clinical.oncotype_score) return false;
        actual = *subject.clinical.oncotype_score;
      }
      double target = std::stod(condition.value);
      bool ok = condition.op == "=" ? actual == target
                : condition.op == "!=" ? actual != target
                : condition.op == "<" ? actual < target
                : condition.op == "<=" ? actual <= target
                : condition.op == ">" ? actual > target
                                      : actual >= target;
      if (!ok) return false;
      continue;
    }

    std::string actual;
    if (condition.field == "er")
      actual = to_string(subject.clinical.er);
    else if (condition.field == "pr")
      actual = to_string(subject.clinical.pr);
    else if (condition.field == "her2")
      actual = to_string(subject.clinical.her2);
    else if (condition.field == "t_stage")
      actual = to_string(subject.clinical.t_stage);
    else if (condition.field == "n_stage")
      actual = to_string(subject.clinical.n_stage);
    else if (condition.field == "idc")
      actual = to_string(subject.clinical.idc);
    else if (condition.field == "ilc")
      actual = to_string(subject.clinical.ilc);
    else if (condition.field == "race")
      actual = subject.clinical.race ? to_string(*subject.clinical.race) : "";
    else if (condition.field == "dataset")
      actual = subject.dataset_id;
    else
      throw ValidationError("unknown subgroup field '" + condition.field + "'");

    bool equal = lower(actual) == lower(condition.value);
    if (condition.op == "=" && !equal) return false;
    if (condition.op == "!=" && equal) return false;
    if (condition.op != "=" && condition.op != "!=")
      throw ValidationError("subgroup field '" + condition.field +
                            "' only supports = and !=");
  }
  return true;
}

// ---------------------------------------------------------------------------
// shared data loading helpers

namespace detail {

CohortSet load_cohorts(const RunConfig& config) {
  return io::read_cohort_dir(config.values.get_path("data.cohorts"));
}

io::EmbeddingStore load_embeddings_for(const RunConfig& config, const CohortSet& cohorts,
                                       std::span<const std::string> dataset_ids) {
  std::set<std::string> slide_ids;
  for (const auto& id : dataset_ids)
    for (const auto& subject : cohorts.by_id(id).subjects)
      slide_ids.insert(subject.embedding_refs.begin(), subject.embedding_refs.end());
  return io::EmbeddingStore::load(config.values.get_path("data.embeddings"), slide_ids);
}

}  // namespace detail

namespace {

using detail::load_cohorts;
using detail::load_embeddings_for;

struct SlideRows {
  std::vector<const EmbeddingBag*> bags;
  std::vector<TimeEvent> obs;
  std::set<std::string> datasets;
  long excluded_subjects = 0;
};

// One training row per slide; subjects without bags are excluded.
SlideRows collect_slide_rows(const DataContext& data,
                             const std::vector<std::string>& dataset_ids) {
  SlideRows rows;
  for (const auto* subject : data.subjects_of(dataset_ids)) {
    EndpointObservation endpoint_obs = derive_endpoint(subject->outcome, data.endpoint);
    SubjectInputs inputs = data.inputs_for(*subject);
    if (inputs.bags.empty()) {
      ++rows.excluded_subjects;
      continue;
    }
    for (const auto* bag : inputs.bags) {
      rows.bags.push_back(bag);
      rows.obs.push_back(endpoint_obs.time_event());
    }
    rows.datasets.insert(subject->dataset_id);
  }
  if (rows.bags.empty()) throw ValidationError("no training slides with embeddings");
  return rows;
}

Eigen::MatrixXd pooled_features(const std::vector<const EmbeddingBag*>& bags, PoolKind pool) {
  Eigen::MatrixXd X(bags.size(), bags.front()->dim());
  for (std::size_t i = 0; i < bags.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) =
        (pool == PoolKind::mean ? pool_mean(*bags[i]) : pool_max(*bags[i])).transpose();
  return X;
}

ElasticNetConfig elastic_config_from_theta(const Hyperparameters& theta, std::uint64_t seed) {
  ElasticNetConfig cfg;
  cfg.alpha = theta.real("alpha");
  cfg.gamma = theta.real("gamma");
  cfg.step_size = theta.real("step_size");
  cfg.max_epochs = static_cast<int>(std::stol(theta.cat("epochs")));
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// trainers

TrainFn make_pathology_trainer(const std::string& combo, const RunConfig& config) {
  double horizon = config.values.get_double("dt.horizon", 10.0);
  if (combo == "mean_cox" || combo == "max_cox") {
    PoolKind pool = combo == "mean_cox" ? PoolKind::mean : PoolKind::max;
    return [pool](const DataContext& data, const std::vector<std::string>& train_ids,
                  const Hyperparameters& theta, std::uint64_t seed) {
      SlideRows rows = collect_slide_rows(data, train_ids);
      Eigen::MatrixXd X = pooled_features(rows.bags, pool);
      LinearScorer scorer = fit_cox_elastic_net(X, rows.obs, elastic_config_from_theta(theta, seed));
      auto model = std::make_shared<PooledCoxModel>(pool, std::move(scorer));
      model->set_training_datasets(rows.datasets);
      return std::static_pointer_cast<RiskModel>(model);
    };
  }
  if (combo == "attention_dt") {
    return [horizon](const DataContext& data, const std::vector<std::string>& train_ids,
                     const Hyperparameters& theta, std::uint64_t seed) {
      SlideRows rows = collect_slide_rows(data, train_ids);
      IntervalGrid grid = IntervalGrid::from_event_quantiles(
          rows.obs, static_cast<int>(std::stol(theta.cat("intervals"))));
      AttentionDTFit fit = fit_attention_discrete_time(
          rows.bags, rows.obs, grid, elastic_config_from_theta(theta, seed),
          static_cast<int>(std::stol(theta.cat("hidden"))),
          static_cast<int>(std::stol(theta.cat("attention_hidden"))), horizon);
      auto model = std::make_shared<AttentionDTRiskModel>(std::move(fit.model));
      model->set_training_datasets(rows.datasets);
      return std::static_pointer_cast<RiskModel>(model);
    };
  }
  throw ValidationError("unknown pathology combo '" + combo + "'");
}

TrainFn make_clinical_trainer() {
  return [](const DataContext& data, const std::vector<std::string>& train_ids,
            const Hyperparameters& theta, std::uint64_t seed) {
    (void)seed;  // the AFT likelihood optimum is deterministic
    EncodingScheme scheme;
    std::vector<const SubjectRecord*> subjects = data.subjects_of(train_ids);
    if (subjects.empty()) throw ValidationError("no clinical training subjects");
    Eigen::MatrixXd X(subjects.size(), scheme.dim());
    std::vector<TimeEvent> obs;
    std::set<std::string> datasets;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) =
          encode_covariates(subjects[i]->clinical, scheme).transpose();
      obs.push_back(derive_endpoint(subjects[i]->outcome, data.endpoint).time_event());
      datasets.insert(subjects[i]->dataset_id);
    }
    AFTModel aft = fit_aft(X, obs, aft_dist_from_string(theta.cat("dist")));
    auto model = std::make_shared<ClinicalAFTModel>(scheme, std::move(aft));
    model->set_training_datasets(datasets);
    return std::static_pointer_cast<RiskModel>(model);
  };
}

HyperparameterSpace pathology_space(const std::string& combo) {
  HyperparameterSpace space;
  space.add("alpha", ParamSpec::make_log_uniform(1e-5, 1e-1));
  space.add("gamma", ParamSpec::make_uniform(0.0, 1.0));
  if (combo == "attention_dt") {
    space.add("step_size", ParamSpec::make_log_uniform(5e-3, 5e-2));
    space.add("epochs", ParamSpec::make_categorical({"120", "200"}));
    space.add("hidden", ParamSpec::make_categorical({"16", "64", "256"}));
    space.add("attention_hidden", ParamSpec::make_categorical({"64", "128"}));
    space.add("intervals", ParamSpec::make_categorical({"4", "6", "8"}));
  } else {
    space.add("step_size", ParamSpec::make_log_uniform(1e-2, 2e-1));
    space.add("epochs", ParamSpec::make_categorical({"200", "350"}));
  }
  return space;
}

HyperparameterSpace clinical_space() {
  HyperparameterSpace space;
  space.add("dist", ParamSpec::make_categorical({"normal", "logistic", "extreme_value"}));
  return space;
}

// ---------------------------------------------------------------------------
// ensemble manifests

namespace {

void save_ensemble_manifest(const EnsembleSpec& spec, const std::filesystem::path& path,
                            const std::vector<std::string>& notes) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write ensemble manifest '" + path.string() + "'");
  out << "format = prognos-ensemble/1\n";
  out << "modality = " << to_string(spec.modality) << '\n';
  out << "members = " << spec.member_count() << '\n';
  for (int i = 0; i < spec.member_count(); ++i) {
    const EnsembleMember& member = spec.members[static_cast<std::size_t>(i)];
    out << "member." << i << ".path = " << member.ref << '\n';
    out << "member." << i << ".hash = " << member.content_hash << '\n';
    out << "member." << i << ".min = " << io::fmt_double(member.normalizer.min) << '\n';
    out << "member." << i << ".max = " << io::fmt_double(member.normalizer.max) << '\n';
    if (i < static_cast<int>(notes.size()) && !notes[static_cast<std::size_t>(i)].empty())
      out << "member." << i << ".note = " << notes[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace

LoadedEnsemble load_ensemble_manifest(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path))
    throw MissingArtifactError("missing ensemble manifest '" + manifest_path.string() + "'");
  io::KeyValueConfig manifest = io::KeyValueConfig::parse_file(manifest_path);
  LoadedEnsemble loaded;
  loaded.manifest_path = manifest_path;
  loaded.spec.modality = modality_from_string(manifest.get("modality"));
  long members = manifest.get_long("members", 0);
  if (members < 1) throw ValidationError("ensemble manifest lists no members");
  for (long i = 0; i < members; ++i) {
    std::string prefix = "member." + std::to_string(i) + ".";
    EnsembleMember member;
    member.ref = manifest.get(prefix + "path");
    member.content_hash = manifest.get(prefix + "hash");
    member.normalizer.min = std::stod(manifest.get(prefix + "min"));
    member.normalizer.max = std::stod(manifest.get(prefix + "max"));

    std::filesystem::path model_path = manifest_path.parent_path() / member.ref;
    if (!std::filesystem::exists(model_path))
      throw MissingArtifactError("ensemble member file '" + model_path.string() +
                                 "' is missing");
    std::string actual_hash = io::sha256_hex_file(model_path);
    if (actual_hash != member.content_hash)
      throw ValidationError("ensemble member '" + member.ref +
                            "' does not match its recorded content hash");
    std::ifstream in(model_path, std::ios::binary);
    member.model = load_risk_model(in);
    loaded.spec.members.push_back(std::move(member));
  }
  loaded.spec.validate();
  return loaded;
}

LoadedMultimodal load_multimodal_manifest(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path))
    throw MissingArtifactError("missing multimodal manifest '" + manifest_path.string() + "'");
  io::KeyValueConfig manifest = io::KeyValueConfig::parse_file(manifest_path);
  LoadedMultimodal loaded;
  auto base = manifest_path.parent_path();
  loaded.clinical = load_ensemble_manifest(base / manifest.get("clinical_manifest"));
  loaded.pathology = load_ensemble_manifest(base / manifest.get("pathology_manifest"));
  loaded.cutoff.percentile = manifest.get_double("cutoff.percentile", 80.0);
  loaded.cutoff.value = std::stod(manifest.get("cutoff.value"));
  loaded.cutoff.source_population = manifest.get_or("cutoff.source", "");
  return loaded;
}

FusedScore score_subject(const LoadedMultimodal& ensemble, const SubjectInputs& inputs) {
  FusedScore score;
  score.clinical = modality_score(ensemble.clinical.spec, inputs);
  score.pathology = modality_score(ensemble.pathology.spec, inputs);
  score.fused_unclamped = fuse_unclamped(score.clinical, score.pathology);
  score.fused = fuse(score.clinical, score.pathology);
  return score;
}

// ---------------------------------------------------------------------------
// subcommands: synth and tile

void cmd_synth(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "synth", config.config_hash);

  SynthSpec spec;
  for (const auto& entry : config.values.get_list("synth.datasets")) {
    // id:n[:baseline_shift]
    std::vector<std::string> parts;
    std::istringstream stream(entry);
    std::string token;
    while (std::getline(stream, token, ':')) parts.push_back(token);
    if (parts.size() < 2)
      throw ValidationError("synth.datasets entry '" + entry + "' should be id:n[:shift]");
    SynthCohortSpec cohort;
    cohort.dataset_id = parts[0];
    cohort.n_subjects = std::stoi(parts[1]);
    if (parts.size() > 2) cohort.baseline_shift = std::stod(parts[2]);
    spec.cohorts.push_back(std::move(cohort));
  }
  spec.embedding_dim = static_cast<int>(config.values.get_long("synth.embedding_dim", 32));
  spec.signal_dims = static_cast<int>(config.values.get_long("synth.signal_dims", 4));
  spec.patches_min = static_cast<int>(config.values.get_long("synth.patches_min", 8));
  spec.patches_max = static_cast<int>(config.values.get_long("synth.patches_max", 24));
  spec.patch_noise = config.values.get_double("synth.patch_noise", 0.6);
  spec.embedding_effect = config.values.get_double("synth.embedding_effect", 1.4);
  spec.clinical_effect = config.values.get_double("synth.clinical_effect", 1.0);
  spec.censoring_rate = config.values.get_double("synth.censoring_rate", 0.3);
  spec.followup_cap_years = config.values.get_double("synth.followup_cap", 15.0);
  spec.multi_slide_fraction = config.values.get_double("synth.multi_slide_fraction", 0.1);
  spec.with_oncotype = config.values.get_bool("synth.with_oncotype", false);
  spec.seed = config.seed;

  SynthResult result = synth(spec);
  write_synth(result, config.out_dir);

  std::ofstream summary(config.out_dir / "cohort_summary.tsv");
  summary << io::cohort_summary_tsv(result.cohorts);

  io::RunManifest manifest;
  manifest.command = "synth";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.outputs = {"cohorts", "embeddings", "true_risks.tsv", "cohort_summary.tsv"};
  io::write_run_manifest(manifest, config.out_dir);
}

void cmd_tile(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "tile", config.config_hash);
  std::filesystem::create_directories(config.out_dir / "manifests");

  TilingConfig tiling;
  tiling.patch_size = static_cast<int>(config.values.get_long("tile.patch_size", 256));
  tiling.min_foreground = config.values.get_double("tile.min_foreground", 0.1);
  tiling.foreground_is_dark = config.values.get_bool("tile.foreground_is_dark", true);
  double mpp = config.values.get_double("tile.mpp", 0.5);

  std::vector<std::filesystem::path> images;
  std::filesystem::path input = config.values.get_path("tile.images");
  if (std::filesystem::is_directory(input)) {
    for (const auto& entry : std::filesystem::directory_iterator(input))
      if (entry.is_regular_file()) images.push_back(entry.path());
    std::sort(images.begin(), images.end());
  } else {
    images.push_back(input);
  }
  if (images.empty()) throw MissingArtifactError("tile: no input images found");

  io::RunManifest manifest;
  manifest.command = "tile";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  for (const auto& image_path : images) {
    GrayImage image = load_image_gray(image_path);
    std::string slide_id = image_path.stem().string();
    PatchManifest patch_manifest = extract_patches(image, slide_id, mpp, tiling);
    auto out_file = config.out_dir / "manifests" / (slide_id + ".tsv");
    write_manifest(patch_manifest, out_file);
    manifest.outputs.push_back("manifests/" + slide_id + ".tsv");
  }
  io::write_run_manifest(manifest, config.out_dir);
}

// ---------------------------------------------------------------------------
// subcommands: training

namespace {

struct MemberArtifacts {
  EnsembleSpec spec;
  std::vector<std::string> notes;
};

std::string save_member(const RiskModel& model, const std::filesystem::path& out_dir,
                        const std::string& name, EnsembleMember& member) {
  std::filesystem::create_directories(out_dir / "models");
  std::string rel = "models/" + name + ".bin";
  std::ofstream out(out_dir / rel, std::ios::binary);
  model.save(out);
  out.close();
  member.ref = rel;
  member.content_hash = io::sha256_hex_file(out_dir / rel);
  return rel;
}

// Out-of-fold predictions: for each rotate dataset, average the per-seed fold
// models that held that dataset out. Parts are ordered seed-major then fold.
std::vector<double> out_of_fold_predictions(const TrialRecord& trial,
                                            const DatasetPartition& partition,
                                            const DataContext& data) {
  const auto* averaged = dynamic_cast<const AveragedRiskModel*>(trial.model.get());
  if (!averaged) throw NumericalError("trial model is not an averaged model");
  const int n_folds = static_cast<int>(partition.rotate.size());
  const int n_seeds = static_cast<int>(averaged->parts().size()) / n_folds;

  std::vector<double> predictions;
  for (int k = 0; k < n_folds; ++k) {
    const Cohort& cohort = data.cohorts->by_id(partition.rotate[static_cast<std::size_t>(k)]);
    for (const auto& subject : cohort.subjects) {
      SubjectInputs inputs = data.inputs_for(subject);
      if (inputs.bags.empty()) continue;
      double sum = 0.0;
      for (int s = 0; s < n_seeds; ++s)
        sum += averaged->parts()[static_cast<std::size_t>(s * n_folds + k)]->score_subject(inputs);
      predictions.push_back(sum / n_seeds);
    }
  }
  return predictions;
}

}  // namespace

void cmd_train_pathology(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "train-pathology", config.config_hash);
  std::filesystem::create_directories(config.out_dir);

  DatasetPartition partition;
  partition.train_only = config.values.get_list("partition.train_only");
  partition.rotate = config.values.get_list("partition.rotate");
  partition.validate();

  CohortSet cohorts = load_cohorts(config);
  std::vector<std::string> all_ids = partition.train_only;
  all_ids.insert(all_ids.end(), partition.rotate.begin(), partition.rotate.end());
  io::EmbeddingStore embeddings = load_embeddings_for(config, cohorts, all_ids);

  DataContext data{&cohorts, &embeddings, config.endpoint};
  MSCVOptions options;
  options.n_trials = static_cast<int>(config.values.get_long("search.trials", 20));
  options.seeds_per_theta =
      static_cast<int>(config.values.get_long("search.seeds_per_theta", 1));
  options.master_seed = config.seed;
  options.workers = config.workers;

  std::vector<std::string> combos = config.values.get_list("pathology.combos");
  if (combos.empty()) combos = {"mean_cox", "max_cox", "attention_dt"};

  TrialLedger ledger(config.out_dir / "ledger_pathology.tsv");
  struct Candidate {
    std::string combo;
    TrialRecord trial;
  };
  std::vector<Candidate> candidates;
  for (const auto& combo : combos) {
    MSCVResult result =
        mscv_pathology(data, partition, pathology_space(combo),
                       make_pathology_trainer(combo, config), options, &ledger,
                       "pathology/" + combo);
    for (const auto& trial : result.trials)
      if (!trial.disqualified) candidates.push_back({combo, trial});
  }
  if (candidates.empty()) throw NumericalError("pathology training produced no usable trials");

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.trial.overall > b.trial.overall;
                   });
  int member_count =
      std::min<long>(config.values.get_long("ensemble.members", 4),
                     static_cast<long>(candidates.size()));

  MemberArtifacts artifacts;
  artifacts.spec.modality = Modality::pathology;
  for (int i = 0; i < member_count; ++i) {
    const Candidate& candidate = candidates[static_cast<std::size_t>(i)];
    EnsembleMember member;
    std::vector<double> oof = out_of_fold_predictions(candidate.trial, partition, data);
    member.normalizer = MinMaxNormalizer::fit(oof);
    member.model = candidate.trial.model;
    save_member(*candidate.trial.model, config.out_dir,
                "pathology_member_" + std::to_string(i), member);
    artifacts.spec.members.push_back(std::move(member));
    artifacts.notes.push_back(candidate.combo + " trial " +
                              std::to_string(candidate.trial.index) + " score " +
                              io::fmt_double(candidate.trial.overall));
  }
  save_ensemble_manifest(artifacts.spec, config.out_dir / "ensemble_pathology.txt",
                         artifacts.notes);

  std::ofstream summary(config.out_dir / "cohort_summary_pathology.tsv");
  summary << io::cohort_summary_tsv(cohorts);

  io::RunManifest manifest;
  manifest.command = "train-pathology";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.outputs = {"ensemble_pathology.txt", "ledger_pathology.tsv"};
  for (int i = 0; i < member_count; ++i)
    manifest.outputs.push_back("models/pathology_member_" + std::to_string(i) + ".bin");
  io::write_run_manifest(manifest, config.out_dir);
}

void cmd_train_clinical(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "train-clinical", config.config_hash);
  std::filesystem::create_directories(config.out_dir);

  // clinical.splits = A,B;C;D  (semicolon-separated groups of dataset ids)
  std::vector<std::vector<std::string>> splits;
  {
    std::istringstream stream(config.values.get("clinical.splits"));
    std::string group;
    while (std::getline(stream, group, ';')) {
      std::vector<std::string> ids;
      std::istringstream group_stream(group);
      std::string id;
      while (std::getline(group_stream, id, ',')) {
        std::size_t a = id.find_first_not_of(" \t");
        std::size_t b = id.find_last_not_of(" \t");
        if (a != std::string::npos) ids.push_back(id.substr(a, b - a + 1));
      }
      if (!ids.empty()) splits.push_back(std::move(ids));
    }
  }

  CohortSet cohorts = load_cohorts(config);
  DataContext data{&cohorts, nullptr, config.endpoint};

  MSCVOptions options;
  options.n_trials = static_cast<int>(config.values.get_long("search.trials", 12));
  options.master_seed = config.seed;
  options.workers = config.workers;

  TrialLedger ledger(config.out_dir / "ledger_clinical.tsv");
  ClinicalMSCVResult result = mscv_clinical(data, splits, clinical_space(),
                                            make_clinical_trainer(), options, &ledger,
                                            "clinical");

  MemberArtifacts artifacts;
  artifacts.spec.modality = Modality::clinical;
  for (std::size_t k = 0; k < result.winners.size(); ++k) {
    const ClinicalSplitWinner& winner = result.winners[k];
    std::vector<double> validation_predictions;
    for (const auto& id : winner.validation_datasets)
      for (const auto& subject : cohorts.by_id(id).subjects)
        validation_predictions.push_back(
            winner.model->score_subject(data.inputs_for(subject)));
    EnsembleMember member;
    member.normalizer = MinMaxNormalizer::fit(validation_predictions);
    member.model = winner.model;
    save_member(*winner.model, config.out_dir, "clinical_member_" + std::to_string(k),
                member);
    artifacts.spec.members.push_back(std::move(member));
    artifacts.notes.push_back(winner.label + " trial " + std::to_string(winner.best_trial) +
                              " score " + io::fmt_double(winner.score));
  }
  save_ensemble_manifest(artifacts.spec, config.out_dir / "ensemble_clinical.txt",
                         artifacts.notes);

  io::RunManifest manifest;
  manifest.command = "train-clinical";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.outputs = {"ensemble_clinical.txt", "ledger_clinical.tsv"};
  for (std::size_t k = 0; k < result.winners.size(); ++k)
    manifest.outputs.push_back("models/clinical_member_" + std::to_string(k) + ".bin");
  io::write_run_manifest(manifest, config.out_dir);
}

void cmd_build_ensemble(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "build-ensemble", config.config_hash);

  LoadedMultimodal multimodal;
  multimodal.clinical = load_ensemble_manifest(config.out_dir / "ensemble_clinical.txt");
  multimodal.pathology = load_ensemble_manifest(config.out_dir / "ensemble_pathology.txt");

  std::string cutoff_dataset = config.values.get("cutoff.dataset");
  double percentile = config.values.get_double("cutoff.percentile", 80.0);
  std::string cutoff_subgroup = config.values.get_or("cutoff.subgroup", "");
  SubgroupFilter filter = SubgroupFilter::parse(cutoff_subgroup);

  CohortSet cohorts = load_cohorts(config);
  std::vector<std::string> source_ids = {cutoff_dataset};
  io::EmbeddingStore embeddings = load_embeddings_for(config, cohorts, source_ids);
  DataContext data{&cohorts, &embeddings, config.endpoint};

  std::vector<double> fused_scores;
  for (const auto& subject : cohorts.by_id(cutoff_dataset).subjects) {
    if (!filter.matches(subject)) continue;
    SubjectInputs inputs = data.inputs_for(subject);
    if (inputs.bags.empty()) continue;
    fused_scores.push_back(score_subject(multimodal, inputs).fused);
  }
  if (fused_scores.empty())
    throw ValidationError("cutoff source population '" + cutoff_dataset + "' is empty");

  std::string label = cutoff_dataset;
  if (!cutoff_subgroup.empty()) label += " / " + cutoff_subgroup;
  RiskCutoff cutoff = compute_cutoff(fused_scores, percentile, label);

  std::ofstream out(config.out_dir / "ensemble_multimodal.txt");
  out << "format = prognos-multimodal/1\n";
  out << "clinical_manifest = ensemble_clinical.txt\n";
  out << "pathology_manifest = ensemble_pathology.txt\n";
  out << "cutoff.percentile = " << io::fmt_double(cutoff.percentile) << '\n';
  out << "cutoff.value = " << io::fmt_double(cutoff.value) << '\n';
  out << "cutoff.source = " << cutoff.source_population << '\n';
  out << "cutoff.source_n = " << fused_scores.size() << '\n';
  out.close();

  io::RunManifest manifest;
  manifest.command = "build-ensemble";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.inputs = {
      {"clinical", io::sha256_hex_file(config.out_dir / "ensemble_clinical.txt")},
      {"pathology", io::sha256_hex_file(config.out_dir / "ensemble_pathology.txt")}};
  manifest.outputs = {"ensemble_multimodal.txt"};
  io::write_run_manifest(manifest, config.out_dir);
}

}  // namespace prognos::pipeline
