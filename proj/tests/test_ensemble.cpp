#include <doctest.h>

#include <cmath>
#include <sstream>

#include "prognos/ensemble.hpp"
#include "prognos/rng.hpp"
#include "prognos/stats.hpp"

using namespace prognos;

namespace {

// Fixed-output stand-in scorer for ensemble algebra tests.
class ConstantModel final : public RiskModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  double score_subject(const SubjectInputs&) const override { return value_; }
  std::string kind() const override { return "constant"; }
  void save(std::ostream&) const override {}

 private:
  double value_;
};

EnsembleMember member(double value, double lo = 0.0, double hi = 1.0) {
  EnsembleMember m;
  m.model = std::make_shared<ConstantModel>(value);
  m.normalizer = {lo, hi};
  m.ref = "member(" + std::to_string(value) + ")";
  return m;
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("min-max normalization identities") {
  MinMaxNormalizer n{0.2, 0.8};
  CHECK(n.apply(0.5) == doctest::Approx(0.5));
  CHECK(n.apply(0.2) == doctest::Approx(0.0));
  CHECK(n.apply(0.8) == doctest::Approx(1.0));
  // values outside the fitted range are allowed before fusion
  CHECK(n.apply(1.0) == doctest::Approx(4.0 / 3.0));

  std::vector<double> degenerate = {0.4, 0.4, 0.4};
  CHECK_THROWS_AS(MinMaxNormalizer::fit(degenerate), ValidationError);
  std::vector<double> fine = {0.1, 0.9, 0.4};
  MinMaxNormalizer fitted = MinMaxNormalizer::fit(fine);
  CHECK(fitted.min == 0.1);
  CHECK(fitted.max == 0.9);
}

TEST_CASE("modality score is the member mean and ignores order") {
  EnsembleSpec spec;
  spec.modality = Modality::clinical;
  spec.members = {member(0.2), member(0.4), member(0.6)};
  SubjectInputs inputs;
  CHECK(modality_score(spec, inputs) == doctest::Approx(0.4));

  EnsembleSpec shuffled;
  shuffled.modality = Modality::clinical;
  shuffled.members = {member(0.6), member(0.2), member(0.4)};
  CHECK(modality_score(shuffled, inputs) == doctest::Approx(modality_score(spec, inputs)));

  EnsembleSpec single;
  single.modality = Modality::pathology;
  single.members = {member(0.7)};
  CHECK(modality_score(single, inputs) == doctest::Approx(0.7));

  EnsembleSpec empty;
  CHECK_THROWS_AS(modality_score(empty, inputs), ValidationError);
}

TEST_CASE("fusion: averaging, symmetry, monotonicity, clamping") {
  CHECK(fuse(0.4, 0.6) == doctest::Approx(0.5));
  CHECK(fuse(0.0, 0.0) == doctest::Approx(0.0));
  CHECK(fuse(1.0, 1.0) == doctest::Approx(1.0));

  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    double a = rng.uniform(-0.5, 1.5);
    double b = rng.uniform(-0.5, 1.5);
    CHECK(fuse(a, b) == doctest::Approx(fuse(b, a)));
    CHECK(fuse_unclamped(a, b) == doctest::Approx(0.5 * (a + b)));
    CHECK(fuse(a, b) >= 0.0);
    CHECK(fuse(a, b) <= 1.0);
    double eps = 0.01;
    CHECK(fuse(a + eps, b) + 1e-12 >= fuse(a, b));
    CHECK(fuse(a, b + eps) + 1e-12 >= fuse(a, b));
  }
  // out-of-range pre-fusion values clamp only after averaging
  CHECK(fuse_unclamped(-0.2, 0.1) == doctest::Approx(-0.05));
  CHECK(fuse(-0.2, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("80th percentile cutoff on 19 evenly spaced scores") {
  std::vector<double> scores;
  for (int i = 1; i <= 19; ++i) scores.push_back(0.05 * i);
  RiskCutoff cutoff = compute_cutoff(scores, 80.0, "toy");
  // inclusive linear interpolation: h = 18 * 0.8 = 14.4 between 0.75 and 0.80
  CHECK(cutoff.value == doctest::Approx(0.77));
  int high = 0;
  for (double s : scores)
    if (is_high_risk(s, cutoff)) ++high;
  CHECK(high == 4);  // ceil(0.2 * 19) = 4
}

TEST_CASE("stratification flags about a fifth of distinct scores") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 5 + static_cast<int>(rng.index(400));
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) scores.push_back(rng.uniform01() + i * 1e-9);
    RiskCutoff cutoff = compute_cutoff(scores, 80.0, "population");
    long high = 0;
    for (double s : scores)
      if (is_high_risk(s, cutoff)) ++high;
    long expected = static_cast<long>(std::ceil(0.2 * n));
    CHECK(std::abs(high - expected) <= 1);
  }
  CHECK_THROWS_AS(compute_cutoff(std::vector<double>{0.1}, 0.0, "x"), ValidationError);
  CHECK_THROWS_AS(compute_cutoff(std::vector<double>{0.1}, 100.0, "x"), ValidationError);
}

TEST_CASE("subgroup cutoffs use the same percentile rule on their population") {
  Rng rng(15);
  std::vector<double> population, subgroup;
  for (int i = 0; i < 500; ++i) {
    double s = rng.uniform01();
    population.push_back(s);
    if (s > 0.3) subgroup.push_back(s);  // a shifted subpopulation
  }
  RiskCutoff full = compute_cutoff(population, 80.0, "all");
  RiskCutoff sub = compute_cutoff(subgroup, 80.0, "subgroup");
  CHECK(sub.value > full.value);
  CHECK(sub.value ==
        doctest::Approx(stats::percentile_linear(subgroup.data(),
                                                 static_cast<long>(subgroup.size()), 80.0)));
}

TEST_CASE("unscorable member is reported by name") {
  class ThrowingModel final : public RiskModel {
   public:
    double score_subject(const SubjectInputs&) const override {
      throw ValidationError("no inputs");
    }
    std::string kind() const override { return "throwing"; }
    void save(std::ostream&) const override {}
  };
  EnsembleSpec spec;
  spec.members.push_back({std::make_shared<ThrowingModel>(), {0.0, 1.0}, "bad_member", ""});
  SubjectInputs inputs;
  try {
    modality_score(spec, inputs);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bad_member") != std::string::npos);
  }
}

}  // TEST_SUITE
