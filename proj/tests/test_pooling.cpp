#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prognos/mil.hpp"
#include "prognos/pooling.hpp"
#include "prognos/rng.hpp"

using namespace prognos;

namespace {

EmbeddingBag make_bag(const Eigen::MatrixXf& patches, std::string id = "bag") {
  EmbeddingBag bag;
  bag.slide_id = std::move(id);
  bag.vectors = patches;
  return bag;
}

GatedAttentionParams random_params(Rng& rng, int dim, int hidden) {
  GatedAttentionParams params;
  params.v.resize(dim, hidden);
  params.u.resize(dim, hidden);
  params.w.resize(hidden);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < hidden; ++j) {
      params.v(i, j) = rng.normal();
      params.u(i, j) = rng.normal();
    }
  for (int j = 0; j < hidden; ++j) params.w[j] = rng.normal();
  return params;
}

}  // namespace

TEST_SUITE("pooling") {

TEST_CASE("single-patch bag pools to the patch itself") {
  Eigen::MatrixXf patches(1, 3);
  patches << 0.5f, -1.0f, 2.0f;
  EmbeddingBag bag = make_bag(patches);
  Eigen::VectorXd expected(3);
  expected << 0.5, -1.0, 2.0;
  CHECK((pool_mean(bag) - expected).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK((pool_max(bag) - expected).lpNorm<Eigen::Infinity>() <= 1e-7);

  Rng rng(1);
  GatedAttentionParams params = random_params(rng, 3, 4);
  AttentionPooled out = pool_gated_attention(bag, params);
  CHECK(out.weights.size() == 1);
  CHECK(out.weights[0] == doctest::Approx(1.0));
  CHECK((out.pooled - expected).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("opposite patches: mean zero, max is the magnitude") {
  Eigen::MatrixXf patches(2, 4);
  patches << 1.0f, -2.0f, 0.5f, 0.0f, -1.0f, 2.0f, -0.5f, 0.0f;
  EmbeddingBag bag = make_bag(patches);
  CHECK(pool_mean(bag).lpNorm<Eigen::Infinity>() <= 1e-7);
  Eigen::VectorXd expected_max(4);
  expected_max << 1.0, 2.0, 0.5, 0.0;
  CHECK((pool_max(bag) - expected_max).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("random bag matches a scalar loop oracle") {
  Rng rng(22);
  Eigen::MatrixXf patches(100, 8);
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 8; ++j) patches(i, j) = static_cast<float>(rng.normal());
  EmbeddingBag bag = make_bag(patches);
  Eigen::VectorXd mean = pool_mean(bag);
  Eigen::VectorXd max = pool_max(bag);
  for (int j = 0; j < 8; ++j) {
    double sum = 0.0, best = -1e300;
    for (int i = 0; i < 100; ++i) {
      sum += static_cast<double>(patches(i, j));
      best = std::max(best, static_cast<double>(patches(i, j)));
    }
    CHECK(mean[j] == doctest::Approx(sum / 100.0).epsilon(1e-12));
    CHECK(max[j] == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("empty bags and dimension mismatches are rejected") {
  EmbeddingBag empty = make_bag(Eigen::MatrixXf(0, 4));
  CHECK_THROWS_AS(pool_mean(empty), ValidationError);
  CHECK_THROWS_AS(pool_max(empty), ValidationError);

  Rng rng(2);
  Eigen::MatrixXf patches(3, 4);
  patches.setZero();
  GatedAttentionParams params = random_params(rng, 5, 2);  // wrong dim
  CHECK_THROWS_AS(pool_gated_attention(make_bag(patches), params), ValidationError);
}

TEST_CASE("attention on a two-patch bag matches hand arithmetic") {
  // dim 2, hidden 1
  GatedAttentionParams params;
  params.v.resize(2, 1);
  params.v << 0.5, -0.25;
  params.u.resize(2, 1);
  params.u << 1.0, 0.5;
  params.w.resize(1);
  params.w << 2.0;

  Eigen::MatrixXd patches(2, 2);
  patches << 1.0, 2.0, -1.0, 0.5;

  auto score = [&](double x0, double x1) {
    double t = std::tanh(0.5 * x0 - 0.25 * x1);
    double g = 1.0 / (1.0 + std::exp(-(1.0 * x0 + 0.5 * x1)));
    return 2.0 * t * g;
  };
  double s0 = score(1.0, 2.0);
  double s1 = score(-1.0, 0.5);
  double m = std::max(s0, s1);
  double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
  double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);

  AttentionPooled out = pool_gated_attention(patches, params);
  CHECK(out.weights[0] == doctest::Approx(a0).epsilon(1e-10));
  CHECK(out.weights[1] == doctest::Approx(a1).epsilon(1e-10));
  CHECK(out.pooled[0] == doctest::Approx(a0 * 1.0 + a1 * -1.0).epsilon(1e-10));
  CHECK(out.pooled[1] == doctest::Approx(a0 * 2.0 + a1 * 0.5).epsilon(1e-10));
}

TEST_CASE("duplicated patches halve each weight and keep the output") {
  Rng rng(9);
  Eigen::MatrixXd patches(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) patches(i, j) = rng.normal();
  GatedAttentionParams params = random_params(rng, 5, 3);
  AttentionPooled base = pool_gated_attention(patches, params);

  Eigen::MatrixXd doubled(6, 5);
  doubled << patches, patches;
  AttentionPooled dup = pool_gated_attention(doubled, params);
  for (int i = 0; i < 3; ++i) {
    CHECK(dup.weights[i] == doctest::Approx(base.weights[i] / 2.0).epsilon(1e-10));
    CHECK(dup.weights[i + 3] == doctest::Approx(base.weights[i] / 2.0).epsilon(1e-10));
  }
  CHECK((dup.pooled - base.pooled).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("pooling operators are permutation-invariant") {
  Rng rng(33);
  Eigen::MatrixXf patches(12, 6);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 6; ++j) patches(i, j) = static_cast<float>(rng.normal());
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 11; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  Eigen::MatrixXf shuffled(12, 6);
  for (int i = 0; i < 12; ++i) shuffled.row(i) = patches.row(perm[i]);

  EmbeddingBag a = make_bag(patches), b = make_bag(shuffled);
  CHECK((pool_mean(a) - pool_mean(b)).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((pool_max(a) - pool_max(b)).lpNorm<Eigen::Infinity>() == 0.0);

  GatedAttentionParams params = random_params(rng, 6, 4);
  AttentionPooled pa = pool_gated_attention(make_bag(patches), params);
  AttentionPooled pb = pool_gated_attention(make_bag(shuffled), params);
  CHECK((pa.pooled - pb.pooled).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("attention weights form a strict simplex") {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng.index(30));
    int dim = 2 + static_cast<int>(rng.index(6));
    Eigen::MatrixXd patches(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) patches(i, j) = 3.0 * rng.normal();
    GatedAttentionParams params = random_params(rng, dim, 2 + static_cast<int>(rng.index(4)));
    AttentionPooled out = pool_gated_attention(patches, params);
    CHECK(std::abs(out.weights.sum() - 1.0) <= 1e-12);
    CHECK(out.weights.minCoeff() > 0.0);
  }
}

TEST_CASE("mean norm bound and max domination on non-negative bags") {
  Rng rng(50);
  Eigen::MatrixXf patches(20, 5);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 5; ++j) patches(i, j) = static_cast<float>(std::abs(rng.normal()));
  EmbeddingBag bag = make_bag(patches);
  Eigen::VectorXd mean = pool_mean(bag);
  Eigen::VectorXd max = pool_max(bag);
  double max_patch_norm = 0.0;
  for (int i = 0; i < 20; ++i)
    max_patch_norm =
        std::max(max_patch_norm, patches.row(i).cast<double>().matrix().norm());
  CHECK(mean.norm() <= max_patch_norm + 1e-9);
  for (int j = 0; j < 5; ++j) CHECK(max[j] + 1e-12 >= mean[j]);
}

TEST_CASE("joint attention + hazard training: gradient check") {
  Rng rng(77);
  const int dim = 3;
  IntervalGrid grid{{0.0, 1.0, 2.0}};
  std::vector<EmbeddingBag> storage;
  std::vector<const EmbeddingBag*> bags;
  std::vector<TimeEvent> obs;
  for (int i = 0; i < 6; ++i) {
    Eigen::MatrixXf patches(2 + static_cast<int>(rng.index(4)), dim);
    for (int r = 0; r < patches.rows(); ++r)
      for (int c = 0; c < dim; ++c) patches(r, c) = static_cast<float>(rng.normal());
    storage.push_back(make_bag(patches, "s" + std::to_string(i)));
    obs.push_back({rng.uniform(0.3, 3.5), rng.uniform01() < 0.6});
  }
  for (const auto& bag : storage) bags.push_back(&bag);

  AttentionDTModel model;
  model.grid = grid;
  model.stats = Standardizer::identity(dim);
  model.horizon = 10.0;
  Rng init_rng(5);
  model.attn = random_params(init_rng, dim, 2);
  model.scorer = Mlp::init(dim, 4, grid.intervals(), init_rng);

  Eigen::VectorXd grad = attention_dt_negloglik_grad(model, bags, obs);
  Eigen::VectorXd params = model.flatten();
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    Eigen::VectorXd up = params, down = params;
    up[k] += h;
    down[k] -= h;
    AttentionDTModel m_up = model, m_down = model;
    m_up.unflatten(up);
    m_down.unflatten(down);
    double fd = (attention_dt_negloglik(m_up, bags, obs) -
                 attention_dt_negloglik(m_down, bags, obs)) /
                (2 * h);
    CHECK(std::abs(grad[k] - fd) <= 2e-5 * std::max({1.0, std::abs(grad[k]), std::abs(fd)}));
  }
}

TEST_CASE("joint attention + hazard training ranks a planted signal") {
  Rng rng(123);
  const int dim = 4;
  std::vector<EmbeddingBag> storage;
  std::vector<TimeEvent> obs;
  for (int i = 0; i < 300; ++i) {
    double signal = rng.normal();
    Eigen::MatrixXf patches(6, dim);
    for (int r = 0; r < 6; ++r) {
      patches(r, 0) = static_cast<float>(signal + 0.3 * rng.normal());
      for (int c = 1; c < dim; ++c) patches(r, c) = static_cast<float>(rng.normal());
    }
    storage.push_back(make_bag(patches, "p" + std::to_string(i)));
    obs.push_back({rng.exponential(std::exp(1.3 * signal)), rng.uniform01() < 0.85});
  }
  std::vector<const EmbeddingBag*> bags;
  for (const auto& bag : storage) bags.push_back(&bag);

  IntervalGrid grid = IntervalGrid::from_event_quantiles(obs, 4);
  ElasticNetConfig cfg;
  cfg.alpha = 1e-4;
  cfg.gamma = 0.5;
  cfg.step_size = 0.02;
  cfg.max_epochs = 200;
  cfg.seed = 31;
  AttentionDTFit fit = fit_attention_discrete_time(bags, obs, grid, cfg, 16, 8, 10.0);

  std::vector<ScoredObservation> scored;
  for (std::size_t i = 0; i < bags.size(); ++i)
    scored.push_back({fit.model.risk_score(*bags[i]), obs[i].time, obs[i].event});
  CHECK(c_index(scored).value > 0.7);

  // determinism per seed
  AttentionDTFit again = fit_attention_discrete_time(bags, obs, grid, cfg, 16, 8, 10.0);
  CHECK(again.model.risk_score(*bags[0]) == fit.model.risk_score(*bags[0]));
}

}  // TEST_SUITE
