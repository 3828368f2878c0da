#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "prognos/meta.hpp"
#include "prognos/pipeline.hpp"
#include "prognos/stats.hpp"

#include "pipeline_internal.hpp"

namespace prognos::pipeline {

namespace {

using io::fmt_double;

struct ScoredSubject {
  const SubjectRecord* subject;
  FusedScore score;
  TimeEvent obs;
};

struct DatasetScores {
  std::string dataset_id;
  std::vector<ScoredSubject> subjects;
  long excluded = 0;
};

std::vector<std::string> eval_dataset_ids(const RunConfig& config) {
  std::vector<std::string> ids = config.values.get_list("eval.datasets");
  if (ids.empty()) throw ValidationError("config misses eval.datasets");
  return ids;
}

std::vector<DatasetScores> score_datasets(const RunConfig& config,
                                          const LoadedMultimodal& ensemble,
                                          const CohortSet& cohorts,
                                          const DataContext& data,
                                          const SubgroupFilter& filter,
                                          std::vector<std::string>* exclusions) {
  std::vector<DatasetScores> out;
  for (const auto& id : eval_dataset_ids(config)) {
    DatasetScores scores;
    scores.dataset_id = id;
    for (const auto& subject : cohorts.by_id(id).subjects) {
      if (!filter.matches(subject)) continue;
      SubjectInputs inputs = data.inputs_for(subject);
      if (inputs.bags.empty()) {
        ++scores.excluded;
        if (exclusions)
          exclusions->push_back(id + '\t' + subject.subject_id + "\tno embedding bags");
        continue;
      }
      ScoredSubject row;
      row.subject = &subject;
      row.score = score_subject(ensemble, inputs);
      row.obs = derive_endpoint(subject.outcome, data.endpoint).time_event();
      scores.subjects.push_back(row);
    }
    out.push_back(std::move(scores));
  }
  return out;
}

struct MetricRow {
  std::string dataset;
  std::string metric;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p = std::numeric_limits<double>::quiet_NaN();
  long n = 0;
  long events = 0;
};

void write_metric_rows(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "dataset\tmetric\testimate\tse\tci_lower\tci_upper\tp\tn\tevents\n";
  for (const auto& r : rows) {
    out << r.dataset << '\t' << r.metric << '\t' << fmt_double(r.estimate) << '\t'
        << fmt_double(r.se) << '\t' << fmt_double(r.ci_lower) << '\t'
        << fmt_double(r.ci_upper) << '\t' << fmt_double(r.p) << '\t' << r.n << '\t'
        << r.events << '\n';
  }
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifactError("missing metrics table '" + file.string() + "'");
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream stream(line);
    MetricRow r;
    std::string estimate, se, lo, hi, p, n, events;
    std::getline(stream, r.dataset, '\t');
    std::getline(stream, r.metric, '\t');
    std::getline(stream, estimate, '\t');
    std::getline(stream, se, '\t');
    std::getline(stream, lo, '\t');
    std::getline(stream, hi, '\t');
    std::getline(stream, p, '\t');
    std::getline(stream, n, '\t');
    std::getline(stream, events, '\t');
    r.estimate = std::stod(estimate);
    r.se = std::stod(se);
    r.ci_lower = std::stod(lo);
    r.ci_upper = std::stod(hi);
    r.p = std::stod(p);
    r.n = std::stol(n);
    r.events = std::stol(events);
    rows.push_back(std::move(r));
  }
  return rows;
}

long count_events(const std::vector<ScoredSubject>& subjects) {
  long events = 0;
  for (const auto& s : subjects) events += s.obs.event ? 1 : 0;
  return events;
}

// Multivariate presets: the fused score with dataset indicators, the two
// modality scores with dataset indicators, and (when the records carry them)
// the full adjustment with genomic assay score, grade, and race.
void write_multivariate_tables(const RunConfig& config,
                               const std::vector<DatasetScores>& all_scores) {
  std::ofstream out(config.out_dir / "eval" / "multivariate.tsv");
  out << "model\tterm\thr\tci_lower\tci_upper\tp\tbeta\tse\tn\tevents\n";

  std::vector<const ScoredSubject*> pool;
  for (const auto& dataset : all_scores)
    for (const auto& s : dataset.subjects) pool.push_back(&s);
  if (pool.size() < 8) return;

  std::string reference_dataset =
      config.values.get_or("eval.reference_dataset", all_scores.front().dataset_id);
  std::vector<std::string> other_datasets;
  for (const auto& dataset : all_scores)
    if (dataset.dataset_id != reference_dataset) other_datasets.push_back(dataset.dataset_id);

  std::vector<TimeEvent> obs;
  for (const auto* s : pool) obs.push_back(s->obs);

  auto dataset_columns = [&](NamedMatrix& terms, std::size_t row, const ScoredSubject& s) {
    for (std::size_t d = 0; d < other_datasets.size(); ++d)
      terms.X(static_cast<Eigen::Index>(row),
              static_cast<Eigen::Index>(terms.names.size() - other_datasets.size() + d)) =
          s.subject->dataset_id == other_datasets[d] ? 1.0 : 0.0;
  };

  auto emit = [&](const std::string& model_name, const CoxFitResult& fit, long n,
                  long events) {
    for (std::size_t j = 0; j < fit.term_names.size(); ++j) {
      out << model_name << '\t' << fit.term_names[j] << '\t' << fmt_double(fit.hr[j]) << '\t'
          << fmt_double(fit.ci[j].first) << '\t' << fmt_double(fit.ci[j].second) << '\t'
          << fmt_double(fit.wald_p[j]) << '\t' << fmt_double(fit.beta[j]) << '\t'
          << fmt_double(fit.se[j]) << '\t' << n << '\t' << events << '\n';
    }
  };

  long events = 0;
  for (const auto* s : pool) events += s->obs.event ? 1 : 0;

  // Fused score (x5 so a 0.2 step maps to one unit) plus dataset indicators.
  {
    NamedMatrix terms;
    terms.names.push_back("ai_score_x5");
    for (const auto& d : other_datasets) terms.names.push_back("dataset=" + d);
    terms.X = Eigen::MatrixXd::Zero(pool.size(), terms.names.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      terms.X(static_cast<Eigen::Index>(i), 0) = 5.0 * pool[i]->score.fused;
      dataset_columns(terms, i, *pool[i]);
    }
    if (other_datasets.empty()) {
      terms.names.resize(1);
      terms.X.conservativeResize(Eigen::NoChange, 1);
    }
    emit("ai_dataset", fit_cox_multivariate(terms, obs), static_cast<long>(pool.size()),
         events);
  }

  // Modality scores with dataset indicators.
  {
    NamedMatrix terms;
    terms.names = {"clinical_score", "pathology_score"};
    for (const auto& d : other_datasets) terms.names.push_back("dataset=" + d);
    terms.X = Eigen::MatrixXd::Zero(pool.size(), terms.names.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      terms.X(static_cast<Eigen::Index>(i), 0) = pool[i]->score.clinical;
      terms.X(static_cast<Eigen::Index>(i), 1) = pool[i]->score.pathology;
      dataset_columns(terms, i, *pool[i]);
    }
    if (other_datasets.empty()) {
      terms.names.resize(2);
      terms.X.conservativeResize(Eigen::NoChange, 2);
    }
    emit("modalities", fit_cox_multivariate(terms, obs), static_cast<long>(pool.size()),
         events);
  }

  // Full adjustment, restricted to subjects carrying assay score, grade, race.
  {
    std::vector<const ScoredSubject*> complete;
    for (const auto* s : pool)
      if (s->subject->clinical.oncotype_score && s->subject->clinical.grade &&
          s->subject->clinical.race)
        complete.push_back(s);
    if (complete.size() >= 8) {
      std::vector<TimeEvent> complete_obs;
      long complete_events = 0;
      for (const auto* s : complete) {
        complete_obs.push_back(s->obs);
        complete_events += s->obs.event ? 1 : 0;
      }
      NamedMatrix terms;
      terms.names = {"ai_score_x5", "oncotype_div20", "grade", "race=black", "race=asian",
                     "race=other_unknown"};
      for (const auto& d : other_datasets) terms.names.push_back("dataset=" + d);
      terms.X = Eigen::MatrixXd::Zero(complete.size(), terms.names.size());
      for (std::size_t i = 0; i < complete.size(); ++i) {
        const auto& c = complete[i]->subject->clinical;
        terms.X(static_cast<Eigen::Index>(i), 0) = 5.0 * complete[i]->score.fused;
        terms.X(static_cast<Eigen::Index>(i), 1) = *c.oncotype_score / 20.0;
        terms.X(static_cast<Eigen::Index>(i), 2) = static_cast<double>(*c.grade);
        terms.X(static_cast<Eigen::Index>(i), 3) = *c.race == Race::black ? 1.0 : 0.0;
        terms.X(static_cast<Eigen::Index>(i), 4) = *c.race == Race::asian ? 1.0 : 0.0;
        terms.X(static_cast<Eigen::Index>(i), 5) = *c.race == Race::other_unknown ? 1.0 : 0.0;
        dataset_columns(terms, i, *complete[i]);
      }
      try {
        emit("full_adjustment", fit_cox_multivariate(terms, complete_obs),
             static_cast<long>(complete.size()), complete_events);
      } catch (const std::exception&) {
        // Sparse strata can make this preset unfit on small synthetic runs; the
        // other presets still report.
      }
    }
  }
}

// Continuous hazard ratio reported per 0.2-unit increase of the fused score.
MetricRow continuous_hr_row(const DatasetScores& scores) {
  const auto& subjects = scores.subjects;
  Eigen::MatrixXd X(subjects.size(), 1);
  std::vector<TimeEvent> obs;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = subjects[i].score.fused;
    obs.push_back(subjects[i].obs);
  }
  CoxFitResult fit = fit_cox_exact(X, obs, {"fused_score"});
  const double unit = 0.2;
  MetricRow row;
  row.dataset = scores.dataset_id;
  row.metric = "hr_continuous_per_0.2";
  row.estimate = std::exp(unit * fit.beta[0]);
  row.se = unit * fit.se[0];  // on the log scale
  double z = stats::norm_quantile(0.975);
  row.ci_lower = std::exp(unit * fit.beta[0] - z * row.se);
  row.ci_upper = std::exp(unit * fit.beta[0] + z * row.se);
  row.p = fit.wald_p[0];
  row.n = static_cast<long>(subjects.size());
  row.events = count_events(subjects);
  return row;
}

}  // namespace

void cmd_evaluate(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "evaluate", config.config_hash);
  auto ensemble = load_multimodal_manifest(config.out_dir / "ensemble_multimodal.txt");

  CohortSet cohorts = detail::load_cohorts(config);
  std::vector<std::string> ids = eval_dataset_ids(config);
  io::EmbeddingStore embeddings = detail::load_embeddings_for(config, cohorts, ids);
  DataContext data{&cohorts, &embeddings, config.endpoint};
  SubgroupFilter filter = SubgroupFilter::parse(config.subgroup);

  std::filesystem::create_directories(config.out_dir / "eval");
  std::vector<std::string> exclusions;
  std::vector<DatasetScores> all_scores =
      score_datasets(config, ensemble, cohorts, data, filter, &exclusions);

  // Per-subject scores.
  {
    std::ofstream out(config.out_dir / "eval" / "scores.tsv");
    out << "dataset\tsubject_id\ty_clinical\ty_pathology\ty_fused\ty_unclamped\ttime\tevent\n";
    for (const auto& dataset : all_scores)
      for (const auto& s : dataset.subjects)
        out << dataset.dataset_id << '\t' << s.subject->subject_id << '\t'
            << fmt_double(s.score.clinical) << '\t' << fmt_double(s.score.pathology) << '\t'
            << fmt_double(s.score.fused) << '\t' << fmt_double(s.score.fused_unclamped)
            << '\t' << fmt_double(s.obs.time) << '\t' << (s.obs.event ? 1 : 0) << '\n';
  }

  const int bootstrap = static_cast<int>(config.values.get_long("eval.bootstrap", 1000));
  const double horizon = config.values.get_double("dt.horizon", 10.0);
  std::vector<MetricRow> metric_rows;
  std::ofstream quartiles(config.out_dir / "eval" / "km_quartiles.tsv");
  quartiles << "dataset\tquartile\tscore_mean\tevent_rate\tci_lower\tci_upper\ttruncated\tn\n";
  std::ofstream curves(config.out_dir / "eval" / "km_curves.tsv");
  curves << "dataset\tgroup\ttime\tsurvival\tci_lower\tci_upper\tat_risk\tevents\n";

  for (const auto& dataset : all_scores) {
    if (dataset.subjects.size() < 4)
      throw ValidationError("evaluation dataset '" + dataset.dataset_id +
                            "' has fewer than 4 scorable subjects");
    std::vector<ScoredObservation> scored;
    std::vector<TimeEvent> obs;
    Eigen::VectorXd fused(dataset.subjects.size());
    for (std::size_t i = 0; i < dataset.subjects.size(); ++i) {
      const auto& s = dataset.subjects[i];
      scored.push_back({s.score.fused, s.obs.time, s.obs.event});
      obs.push_back(s.obs);
      fused[static_cast<Eigen::Index>(i)] = s.score.fused;
    }

    CIndexResult ci = c_index(scored);
    if (!ci.defined)
      throw NumericalError("dataset '" + dataset.dataset_id + "': concordance undefined");
    MetricRow c_row;
    c_row.dataset = dataset.dataset_id;
    c_row.metric = "c_index";
    c_row.estimate = ci.value;
    c_row.se = bootstrap_c_index_se(scored, bootstrap,
                                    derive_seed(config.seed, {0xEE}), config.workers);
    double z = stats::norm_quantile(0.975);
    c_row.ci_lower = ci.value - z * c_row.se;
    c_row.ci_upper = ci.value + z * c_row.se;
    c_row.n = static_cast<long>(dataset.subjects.size());
    c_row.events = count_events(dataset.subjects);
    metric_rows.push_back(c_row);

    metric_rows.push_back(continuous_hr_row(dataset));

    DichotomizedHR dich = dichotomized_hr(fused, ensemble.cutoff.value, obs);
    MetricRow d_row;
    d_row.dataset = dataset.dataset_id;
    d_row.metric = "hr_dichotomized";
    d_row.estimate = dich.cox.hr[0];
    d_row.se = dich.cox.se[0];
    d_row.ci_lower = dich.cox.ci[0].first;
    d_row.ci_upper = dich.cox.ci[0].second;
    d_row.p = dich.cox.wald_p[0];
    d_row.n = dich.n_low + dich.n_high;
    d_row.events = count_events(dataset.subjects);
    metric_rows.push_back(d_row);

    MetricRow lr_row;
    lr_row.dataset = dataset.dataset_id;
    lr_row.metric = "logrank_chi2";
    lr_row.estimate = dich.logrank.chi_square;
    lr_row.se = 0.0;
    lr_row.ci_lower = lr_row.ci_upper = dich.logrank.chi_square;
    lr_row.p = dich.logrank.p;
    lr_row.n = dich.n_low + dich.n_high;
    lr_row.events = count_events(dataset.subjects);
    metric_rows.push_back(lr_row);

    for (std::size_t q = 0; auto& row : recurrence_rate_by_quartile(scored, horizon)) {
      quartiles << dataset.dataset_id << '\t' << (q + 1) << '\t' << fmt_double(row.score_mean)
                << '\t' << fmt_double(row.km_event_rate) << '\t' << fmt_double(row.ci_lower)
                << '\t' << fmt_double(row.ci_upper) << '\t' << (row.truncated ? 1 : 0) << '\t'
                << row.n << '\n';
      ++q;
    }

    auto emit_curve = [&](const std::string& group, const std::vector<TimeEvent>& group_obs) {
      if (group_obs.empty()) return;
      KMCurve km = kaplan_meier(group_obs);
      for (std::size_t k = 0; k < km.times.size(); ++k)
        curves << dataset.dataset_id << '\t' << group << '\t' << fmt_double(km.times[k])
               << '\t' << fmt_double(km.survival[k]) << '\t' << fmt_double(km.ci_lower[k])
               << '\t' << fmt_double(km.ci_upper[k]) << '\t' << km.at_risk[k] << '\t'
               << km.events[k] << '\n';
    };
    std::vector<TimeEvent> low, high;
    for (const auto& s : dataset.subjects)
      (is_high_risk(s.score.fused, ensemble.cutoff) ? high : low).push_back(s.obs);
    emit_curve("all", obs);
    emit_curve("low", low);
    emit_curve("high", high);
  }

  {
    std::ofstream out(config.out_dir / "eval" / "metrics.tsv");
    write_metric_rows(out, metric_rows);
  }
  write_multivariate_tables(config, all_scores);
  {
    std::ofstream out(config.out_dir / "eval" / "cohort_summary.tsv");
    out << io::cohort_summary_tsv(cohorts);
  }
  {
    std::ofstream out(config.out_dir / "eval" / "exclusions.tsv");
    out << "dataset\tsubject_id\treason\n";
    for (const auto& line : exclusions) out << line << '\n';
  }

  io::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.inputs = {{"multimodal",
                      io::sha256_hex_file(config.out_dir / "ensemble_multimodal.txt")}};
  manifest.outputs = {"eval/scores.tsv",      "eval/metrics.tsv",
                      "eval/km_quartiles.tsv", "eval/km_curves.tsv",
                      "eval/multivariate.tsv", "eval/cohort_summary.tsv",
                      "eval/exclusions.tsv"};
  io::write_run_manifest(manifest, config.out_dir);
}

void cmd_pool(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "pool", config.config_hash);
  std::vector<MetricRow> rows = read_metric_rows(config.out_dir / "eval" / "metrics.tsv");

  std::ofstream out(config.out_dir / "eval" / "pooled.tsv");
  out << "metric\tscale\tk\tmu\tci_lower\tci_upper\ttau2\n";
  struct Plan {
    std::string metric;
    bool log_scale;
  };
  for (const Plan& plan : {Plan{"c_index", false}, Plan{"hr_continuous_per_0.2", true},
                           Plan{"hr_dichotomized", true}}) {
    std::vector<StudyEstimate> studies;
    for (const auto& row : rows) {
      if (row.metric != plan.metric) continue;
      StudyEstimate study;
      study.dataset_id = row.dataset;
      study.metric = plan.metric;
      study.value = plan.log_scale ? std::log(row.estimate) : row.estimate;
      study.se = row.se;  // hazard ratios already carry log-scale errors
      study.n = row.n;
      study.events = row.events;
      studies.push_back(std::move(study));
    }
    if (studies.empty()) continue;
    PooledEstimate pooled = pool_random_effects(studies);
    double mu = plan.log_scale ? std::exp(pooled.mu) : pooled.mu;
    double lo = plan.log_scale ? std::exp(pooled.ci_lower) : pooled.ci_lower;
    double hi = plan.log_scale ? std::exp(pooled.ci_upper) : pooled.ci_upper;
    out << plan.metric << '\t' << (plan.log_scale ? "log" : "raw") << '\t' << studies.size()
        << '\t' << fmt_double(mu) << '\t' << fmt_double(lo) << '\t' << fmt_double(hi) << '\t'
        << fmt_double(pooled.tau2) << '\n';
  }
  out.close();

  io::RunManifest manifest;
  manifest.command = "pool";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.inputs = {{"metrics", io::sha256_hex_file(config.out_dir / "eval" / "metrics.tsv")}};
  manifest.outputs = {"eval/pooled.tsv"};
  io::write_run_manifest(manifest, config.out_dir);
}

void cmd_stratify(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "stratify", config.config_hash);
  auto ensemble = load_multimodal_manifest(config.out_dir / "ensemble_multimodal.txt");

  auto scores_path = config.out_dir / "eval" / "scores.tsv";
  std::ifstream in(scores_path);
  if (!in)
    throw MissingArtifactError("stratify needs '" + scores_path.string() +
                               "'; run evaluate first");

  RiskCutoff cutoff = ensemble.cutoff;
  std::ofstream out(config.out_dir / "eval" / "strata.tsv");
  out << "dataset\tsubject_id\tscore\tgroup\n";
  std::map<std::string, std::pair<long, long>> counts;  // dataset -> (low, high)
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream stream(line);
    std::string dataset, subject, clinical, pathology, fused;
    std::getline(stream, dataset, '\t');
    std::getline(stream, subject, '\t');
    std::getline(stream, clinical, '\t');
    std::getline(stream, pathology, '\t');
    std::getline(stream, fused, '\t');
    double score = std::stod(fused);
    bool high = is_high_risk(score, cutoff);
    out << dataset << '\t' << subject << '\t' << fused << '\t' << (high ? "high" : "low")
        << '\n';
    auto& c = counts[dataset];
    (high ? c.second : c.first) += 1;
  }
  out.close();

  std::ofstream cut(config.out_dir / "eval" / "cutoffs.tsv");
  cut << "label\tpercentile\tvalue\tdataset\tn_low\tn_high\n";
  for (const auto& [dataset, c] : counts)
    cut << cutoff.source_population << '\t' << fmt_double(cutoff.percentile) << '\t'
        << fmt_double(cutoff.value) << '\t' << dataset << '\t' << c.first << '\t' << c.second
        << '\n';
  cut.close();

  io::RunManifest manifest;
  manifest.command = "stratify";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;
  manifest.inputs = {{"scores", io::sha256_hex_file(scores_path)}};
  manifest.outputs = {"eval/strata.tsv", "eval/cutoffs.tsv"};
  io::write_run_manifest(manifest, config.out_dir);
}

namespace {

// Minimal static forest plot.
void write_forest_svg(const std::filesystem::path& path, const std::string& title,
                      const std::vector<ForestRow>& rows, bool log_scale) {
  const int width = 760, row_height = 26, top = 70, label_width = 180;
  const int plot_left = label_width + 10, plot_right = width - 170;
  const int height = top + row_height * static_cast<int>(rows.size()) + 40;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.ci_lower);
    hi = std::max(hi, r.ci_upper);
  }
  if (log_scale) lo = std::max(lo, 1e-6);
  auto tx = [&](double v) {
    double a = log_scale ? std::log(lo) : lo;
    double b = log_scale ? std::log(hi) : hi;
    double x = log_scale ? std::log(std::max(v, 1e-6)) : v;
    if (b - a < 1e-12) return 0.5 * (plot_left + plot_right);
    return plot_left + (x - a) / (b - a) * (plot_right - plot_left);
  };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"20\" y=\"24\" font-size=\"15\" font-weight=\"bold\">" << title
      << "</text>\n";
  double ref = log_scale ? 1.0 : 0.5;
  if (ref > lo && ref < hi)
    out << "<line x1=\"" << tx(ref) << "\" y1=\"" << top - 14 << "\" x2=\"" << tx(ref)
        << "\" y2=\"" << height - 30 << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";

  int y = top;
  char buffer[128];
  for (const auto& r : rows) {
    int cy = y + row_height / 2 - 4;
    out << "<text x=\"12\" y=\"" << cy + 4 << "\">" << r.label << "</text>\n";
    out << "<line x1=\"" << tx(r.ci_lower) << "\" y1=\"" << cy << "\" x2=\""
        << tx(r.ci_upper) << "\" y2=\"" << cy << "\" stroke=\"#222\"/>\n";
    if (r.pooled) {
      double cx = tx(r.estimate);
      out << "<polygon points=\"" << cx - 7 << ',' << cy << ' ' << cx << ',' << cy - 6 << ' '
          << cx + 7 << ',' << cy << ' ' << cx << ',' << cy + 6
          << "\" fill=\"#1f4e8c\"/>\n";
    } else {
      double size = 3.0 + 7.0 * r.weight;
      out << "<rect x=\"" << tx(r.estimate) - size / 2 << "\" y=\"" << cy - size / 2
          << "\" width=\"" << size << "\" height=\"" << size << "\" fill=\"#444\"/>\n";
    }
    std::snprintf(buffer, sizeof(buffer), "%.3f [%.3f, %.3f]", r.estimate, r.ci_lower,
                  r.ci_upper);
    out << "<text x=\"" << plot_right + 12 << "\" y=\"" << cy + 4 << "\">" << buffer
        << "</text>\n";
    y += row_height;
  }
  out << "</svg>\n";
}

void write_forest_tsv(const std::filesystem::path& path, const std::vector<ForestRow>& rows) {
  std::ofstream out(path);
  out << "label\testimate\tci_lower\tci_upper\tevents\tn\tweight\tpooled\n";
  for (const auto& r : rows)
    out << r.label << '\t' << fmt_double(r.estimate) << '\t' << fmt_double(r.ci_lower) << '\t'
        << fmt_double(r.ci_upper) << '\t' << r.events << '\t' << r.n << '\t'
        << fmt_double(r.weight) << '\t' << (r.pooled ? 1 : 0) << '\n';
}

}  // namespace

void cmd_report(const RunConfig& config) {
  io::check_out_dir(config.out_dir, "report", config.config_hash);
  std::vector<MetricRow> rows = read_metric_rows(config.out_dir / "eval" / "metrics.tsv");
  std::filesystem::create_directories(config.out_dir / "report");

  io::RunManifest manifest;
  manifest.command = "report";
  manifest.config_hash = config.config_hash;
  manifest.seed = config.seed;

  struct Plan {
    std::string metric;
    std::string title;
    std::string file;
    bool log_scale;
  };
  for (const Plan& plan :
       {Plan{"c_index", "Concordance index by dataset", "forest_c_index", false},
        Plan{"hr_continuous_per_0.2", "Hazard ratio per 0.2 score increase",
             "forest_hr_continuous", true},
        Plan{"hr_dichotomized", "Hazard ratio, high vs low risk", "forest_hr_dichotomized",
             true}}) {
    std::vector<StudyEstimate> studies;
    for (const auto& row : rows) {
      if (row.metric != plan.metric) continue;
      StudyEstimate study;
      study.dataset_id = row.dataset;
      study.metric = plan.metric;
      study.value = plan.log_scale ? std::log(row.estimate) : row.estimate;
      study.se = row.se;
      study.n = row.n;
      study.events = row.events;
      studies.push_back(std::move(study));
    }
    if (studies.empty()) continue;
    PooledEstimate pooled = pool_random_effects(studies);
    std::vector<ForestRow> forest = forest_rows(studies, pooled);
    if (plan.log_scale) {
      for (auto& r : forest) {
        r.estimate = std::exp(r.estimate);
        r.ci_lower = std::exp(r.ci_lower);
        r.ci_upper = std::exp(r.ci_upper);
      }
    }
    write_forest_tsv(config.out_dir / "report" / (plan.file + ".tsv"), forest);
    write_forest_svg(config.out_dir / "report" / (plan.file + ".svg"), plan.title, forest,
                     plan.log_scale);
    manifest.outputs.push_back("report/" + plan.file + ".tsv");
    manifest.outputs.push_back("report/" + plan.file + ".svg");
  }

  // KM curve data travels with the report for plotting downstream.
  auto km_src = config.out_dir / "eval" / "km_curves.tsv";
  if (std::filesystem::exists(km_src)) {
    std::filesystem::copy_file(km_src, config.out_dir / "report" / "km_curves.tsv",
                               std::filesystem::copy_options::overwrite_existing);
    manifest.outputs.push_back("report/km_curves.tsv");
  }
  auto quartile_src = config.out_dir / "eval" / "km_quartiles.tsv";
  if (std::filesystem::exists(quartile_src)) {
    std::filesystem::copy_file(quartile_src, config.out_dir / "report" / "km_quartiles.tsv",
                               std::filesystem::copy_options::overwrite_existing);
    manifest.outputs.push_back("report/km_quartiles.tsv");
  }

  manifest.inputs = {{"metrics", io::sha256_hex_file(config.out_dir / "eval" / "metrics.tsv")}};
  io::write_run_manifest(manifest, config.out_dir);
}

}  // namespace prognos::pipeline
