#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prognos/aft.hpp"
#include "prognos/coxfit.hpp"
#include "prognos/discrete_time.hpp"
#include "prognos/domain.hpp"
#include "prognos/ensemble.hpp"
#include "prognos/meta.hpp"
#include "prognos/metrics.hpp"
#include "prognos/pooling.hpp"
#include "prognos/stats.hpp"
#include "prognos/tiling.hpp"

namespace py = pybind11;
using namespace prognos;

namespace {

std::vector<TimeEvent> to_obs(const Eigen::VectorXd& times,
                              const std::vector<bool>& events) {
  if (times.size() != static_cast<Eigen::Index>(events.size()))
    throw ValidationError("times and events must have equal length");
  std::vector<TimeEvent> obs(events.size());
  for (std::size_t i = 0; i < events.size(); ++i)
    obs[i] = {times[static_cast<Eigen::Index>(i)], events[i]};
  return obs;
}

std::vector<ScoredObservation> to_scored(const Eigen::VectorXd& risks,
                                         const Eigen::VectorXd& times,
                                         const std::vector<bool>& events) {
  if (risks.size() != times.size() || times.size() != static_cast<Eigen::Index>(events.size()))
    throw ValidationError("risks, times and events must have equal length");
  std::vector<ScoredObservation> obs(events.size());
  for (std::size_t i = 0; i < events.size(); ++i)
    obs[i] = {risks[static_cast<Eigen::Index>(i)], times[static_cast<Eigen::Index>(i)],
              events[i]};
  return obs;
}

py::dict cox_result_dict(const CoxFitResult& fit) {
  py::dict d;
  d["beta"] = fit.beta;
  d["se"] = fit.se;
  d["hr"] = fit.hr;
  d["wald_p"] = fit.wald_p;
  d["loglik"] = fit.loglik;
  d["converged"] = fit.converged;
  d["iterations"] = fit.iterations;
  py::list ci;
  for (const auto& [lo, hi] : fit.ci) ci.append(py::make_tuple(lo, hi));
  d["ci"] = ci;
  d["terms"] = fit.term_names;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Survival modeling toolkit: concordance, Cox fits, discrete-time hazards, "
            "pooling, AFT, ensembling, meta-analysis, tiling.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);

  m.def(
      "c_index",
      [](const Eigen::VectorXd& risks, const Eigen::VectorXd& times,
         const std::vector<bool>& events) {
        CIndexResult r = c_index(to_scored(risks, times, events));
        if (!r.defined) throw NumericalError("no comparable pairs");
        return py::make_tuple(r.value, r.comparable_pairs);
      },
      py::arg("risks"), py::arg("times"), py::arg("events"),
      "Concordance index and the number of comparable pairs.");

  m.def(
      "kaplan_meier",
      [](const Eigen::VectorXd& times, const std::vector<bool>& events, double conf_level) {
        KMCurve km = kaplan_meier(to_obs(times, events), conf_level);
        py::dict d;
        d["times"] = km.times;
        d["survival"] = km.survival;
        d["at_risk"] = km.at_risk;
        d["events"] = km.events;
        d["ci_lower"] = km.ci_lower;
        d["ci_upper"] = km.ci_upper;
        return d;
      },
      py::arg("times"), py::arg("events"), py::arg("conf_level") = 0.95);

  m.def(
      "logrank",
      [](const Eigen::VectorXd& times_a, const std::vector<bool>& events_a,
         const Eigen::VectorXd& times_b, const std::vector<bool>& events_b) {
        LogrankResult r = logrank(to_obs(times_a, events_a), to_obs(times_b, events_b));
        if (!r.defined) throw NumericalError("logrank statistic undefined");
        return py::make_tuple(r.chi_square, r.p);
      },
      py::arg("times_a"), py::arg("events_a"), py::arg("times_b"), py::arg("events_b"));

  m.def(
      "recurrence_rate_by_quartile",
      [](const Eigen::VectorXd& risks, const Eigen::VectorXd& times,
         const std::vector<bool>& events, double horizon) {
        py::list rows;
        for (const auto& row :
             recurrence_rate_by_quartile(to_scored(risks, times, events), horizon)) {
          py::dict d;
          d["score_mean"] = row.score_mean;
          d["event_rate"] = row.km_event_rate;
          d["ci_lower"] = row.ci_lower;
          d["ci_upper"] = row.ci_upper;
          d["truncated"] = row.truncated;
          d["n"] = row.n;
          rows.append(d);
        }
        return rows;
      },
      py::arg("risks"), py::arg("times"), py::arg("events"), py::arg("horizon") = 10.0);

  m.def(
      "cox_partial_loss",
      [](const Eigen::VectorXd& scores, const Eigen::VectorXd& times,
         const std::vector<bool>& events) {
        return cox_partial_loss(scores, to_obs(times, events));
      },
      py::arg("scores"), py::arg("times"), py::arg("events"));

  m.def(
      "fit_cox",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
         const std::vector<bool>& events) {
        return cox_result_dict(fit_cox_exact(X, to_obs(times, events)));
      },
      py::arg("X"), py::arg("times"), py::arg("events"),
      "Newton-Raphson Cox proportional hazards fit.");

  m.def(
      "fit_cox_elastic_net",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
         const std::vector<bool>& events, double alpha, double gamma, double step_size,
         int epochs, std::uint64_t seed) {
        ElasticNetConfig cfg{alpha, gamma, step_size, epochs, seed};
        LinearScorer scorer = fit_cox_elastic_net(X, to_obs(times, events), cfg);
        py::dict d;
        d["beta"] = scorer.beta;
        d["mean"] = scorer.stats.mean;
        d["sd"] = scorer.stats.sd;
        d["scores"] = scorer.score_rows(X);
        return d;
      },
      py::arg("X"), py::arg("times"), py::arg("events"), py::arg("alpha") = 0.01,
      py::arg("gamma") = 0.5, py::arg("step_size") = 0.05, py::arg("epochs") = 400,
      py::arg("seed") = 0);

  m.def(
      "dichotomized_hr",
      [](const Eigen::VectorXd& risks, double cutoff, const Eigen::VectorXd& times,
         const std::vector<bool>& events) {
        DichotomizedHR r = dichotomized_hr(risks, cutoff, to_obs(times, events));
        py::dict d = cox_result_dict(r.cox);
        d["logrank_chi2"] = r.logrank.chi_square;
        d["logrank_p"] = r.logrank.p;
        d["n_high"] = r.n_high;
        d["n_low"] = r.n_low;
        return d;
      },
      py::arg("risks"), py::arg("cutoff"), py::arg("times"), py::arg("events"));

  m.def(
      "discretize",
      [](double time, bool event, const std::vector<double>& cut_points) {
        IntervalGrid grid{cut_points};
        return discretize(TimeEvent{time, event}, grid);
      },
      py::arg("time"), py::arg("event"), py::arg("cut_points"));

  py::class_<DiscreteTimeModel>(m, "DiscreteTimeModel")
      .def("hazards", &DiscreteTimeModel::hazards, py::arg("x"))
      .def("risk_score", &DiscreteTimeModel::risk_score, py::arg("x"))
      .def(
          "survival",
          [](const DiscreteTimeModel& model, const Eigen::VectorXd& x, double t) {
            return model.survival_curve(x).at(t);
          },
          py::arg("x"), py::arg("t"));

  m.def(
      "fit_discrete_time",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
         const std::vector<bool>& events, const std::vector<double>& cut_points,
         double alpha, double gamma, double step_size, int epochs, std::uint64_t seed,
         int hidden, double horizon) {
        IntervalGrid grid{cut_points};
        ElasticNetConfig cfg{alpha, gamma, step_size, epochs, seed};
        return fit_discrete_time(X, to_obs(times, events), grid, cfg, hidden, horizon).model;
      },
      py::arg("X"), py::arg("times"), py::arg("events"), py::arg("cut_points"),
      py::arg("alpha") = 0.01, py::arg("gamma") = 0.5, py::arg("step_size") = 0.05,
      py::arg("epochs") = 300, py::arg("seed") = 0, py::arg("hidden") = 16,
      py::arg("horizon") = 10.0);

  m.def(
      "pool_mean",
      [](const Eigen::MatrixXf& patches) {
        EmbeddingBag bag{"bag", patches};
        return pool_mean(bag);
      },
      py::arg("patches"));
  m.def(
      "pool_max",
      [](const Eigen::MatrixXf& patches) {
        EmbeddingBag bag{"bag", patches};
        return pool_max(bag);
      },
      py::arg("patches"));
  m.def(
      "pool_gated_attention",
      [](const Eigen::MatrixXd& patches, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u,
         const Eigen::VectorXd& w) {
        AttentionPooled pooled = pool_gated_attention(patches, GatedAttentionParams{v, u, w});
        return py::make_tuple(pooled.pooled, pooled.weights);
      },
      py::arg("patches"), py::arg("v"), py::arg("u"), py::arg("w"));

  m.def(
      "fit_aft",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
         const std::vector<bool>& events, const std::string& dist) {
        AFTModel model = fit_aft(X, to_obs(times, events), aft_dist_from_string(dist));
        py::dict d;
        d["beta"] = model.beta;
        d["intercept"] = model.intercept;
        d["sigma"] = model.sigma;
        d["dist"] = std::string(to_string(model.dist));
        d["flagged"] = model.flagged;
        d["risk"] = model.risk_rows(X);
        return d;
      },
      py::arg("X"), py::arg("times"), py::arg("events"), py::arg("dist") = "normal");

  m.def(
      "aft_negloglik",
      [](const Eigen::VectorXd& beta, double intercept, double sigma, const std::string& dist,
         const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
         const std::vector<bool>& events) {
        AFTModel model;
        model.beta = beta;
        model.intercept = intercept;
        model.sigma = sigma;
        model.dist = aft_dist_from_string(dist);
        return aft_negloglik(model, X, to_obs(times, events));
      },
      py::arg("beta"), py::arg("intercept"), py::arg("sigma"), py::arg("dist"), py::arg("X"),
      py::arg("times"), py::arg("events"));

  m.def(
      "normalize",
      [](double raw, double lo, double hi) {
        MinMaxNormalizer n{lo, hi};
        n.validate();
        return n.apply(raw);
      },
      py::arg("raw"), py::arg("min"), py::arg("max"));
  m.def("fuse", &fuse, py::arg("clinical"), py::arg("pathology"));
  m.def("fuse_unclamped", &fuse_unclamped, py::arg("clinical"), py::arg("pathology"));
  m.def(
      "percentile",
      [](const Eigen::VectorXd& values, double pct) {
        return stats::percentile_linear(values.data(), values.size(), pct);
      },
      py::arg("values"), py::arg("pct"));

  m.def(
      "pool_random_effects",
      [](const Eigen::VectorXd& values, const Eigen::VectorXd& ses) {
        if (values.size() != ses.size())
          throw ValidationError("values and ses must have equal length");
        std::vector<StudyEstimate> studies;
        for (Eigen::Index i = 0; i < values.size(); ++i)
          studies.push_back({"study" + std::to_string(i), "metric", values[i], ses[i], 0, 0});
        PooledEstimate pooled = pool_random_effects(studies);
        py::dict d;
        d["mu"] = pooled.mu;
        d["tau2"] = pooled.tau2;
        d["ci_lower"] = pooled.ci_lower;
        d["ci_upper"] = pooled.ci_upper;
        d["weights"] = pooled.weights;
        return d;
      },
      py::arg("values"), py::arg("ses"));

  m.def(
      "bootstrap_c_index_se",
      [](const Eigen::VectorXd& risks, const Eigen::VectorXd& times,
         const std::vector<bool>& events, int resamples, std::uint64_t seed) {
        return bootstrap_c_index_se(to_scored(risks, times, events), resamples, seed);
      },
      py::arg("risks"), py::arg("times"), py::arg("events"), py::arg("resamples") = 1000,
      py::arg("seed") = 0);

  m.def(
      "otsu_threshold",
      [](const std::vector<std::uint64_t>& histogram) {
        if (histogram.size() != 256)
          throw ValidationError("histogram must have 256 bins");
        std::array<std::uint64_t, 256> bins;
        std::copy(histogram.begin(), histogram.end(), bins.begin());
        return otsu_threshold(bins);
      },
      py::arg("histogram"));

  m.def(
      "extract_patches",
      [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> image,
         double mpp, int patch_size, double min_foreground, bool foreground_is_dark) {
        if (image.ndim() != 2) throw ValidationError("image must be 2-D grayscale");
        GrayImage gray;
        gray.height = static_cast<int>(image.shape(0));
        gray.width = static_cast<int>(image.shape(1));
        gray.pixels.assign(image.data(), image.data() + image.size());
        TilingConfig cfg{patch_size, min_foreground, foreground_is_dark};
        PatchManifest manifest = extract_patches(gray, "array", mpp, cfg);
        py::list rows;
        for (const auto& e : manifest.coords)
          rows.append(py::make_tuple(e.row, e.col, e.foreground_fraction));
        py::dict d;
        d["coords"] = rows;
        d["image_too_small"] = manifest.image_too_small;
        return d;
      },
      py::arg("image"), py::arg("mpp") = 0.5, py::arg("patch_size") = 256,
      py::arg("min_foreground") = 0.1, py::arg("foreground_is_dark") = true);

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
