#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../support/fixtures.hpp"
#include "mr3/inference.hpp"

using namespace mr3;
using namespace mr3::testing;

namespace {

ModelParams filled(std::size_t I, std::size_t J, std::size_t F, std::size_t L, double v) {
  ModelParams p = ModelParams::zeros(I, J, F, L);
  for_each_block(p, [v](std::span<double> b) { std::fill(b.begin(), b.end(), v); });
  return p;
}

Corpus one_doc(std::vector<Index> words, std::size_t L) {
  Corpus c;
  c.vocab.resize(L);
  c.docs = {std::move(words)};
  c.assignments = {std::vector<Index>(c.docs[0].size(), 0)};
  return c;
}

// Rank-2 ratings on a fully observed 20 x 30 grid, no noise.
TrainingData low_rank_data(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix U(20, 2), V(30, 2);
  for (double& x : U.flat()) x = normal(rng);
  for (double& x : V.flat()) x = normal(rng);
  std::vector<Rating> t;
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < 30; ++j) t.push_back({i, j, 3.0 + dot(U.row(i), V.row(j)), std::nullopt});
  TrainingData d;
  d.ratings = center_ratings(SparseRatings(20, 30, t)).first;
  d.graph = SocialGraph(20);
  d.corpus.vocab = {"w"};
  d.corpus.docs.assign(30, {});
  d.corpus.assignments.assign(30, {});
  return d;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.factors = 3;
  cfg.learning_rate = 0.01;
  cfg.passes = 6;
  cfg.epochs_per_pass = 5;
  cfg.variant = {.lambda = 0.3, .lambda_rel = 0.5, .lambda_rev = 0.5};
  return cfg;
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("gd_step with zero gradient and velocity is a fixpoint") {
    ModelParams p = filled(2, 3, 2, 4, 0.7);
    const ModelParams before = p;
    OptimizerState s = OptimizerState::for_params(p);
    gd_step(p, filled(2, 3, 2, 4, 0.0), s, 0.1, 0.8);
    CHECK(p == before);
  }

  TEST_CASE("gd_step without momentum is plain gradient descent") {
    ModelParams p = filled(2, 3, 2, 4, 0.7);
    OptimizerState s = OptimizerState::for_params(p);
    gd_step(p, filled(2, 3, 2, 4, 2.0), s, 0.1, 0.0);
    for_each_block(p, [](std::span<double> b) {
      for (double x : b) CHECK(x == 0.7 - 0.1 * 2.0);
    });
  }

  TEST_CASE("two momentum steps under a constant gradient move by -lr g (2 + beta)") {
    const double lr = 0.05, beta = 0.8, g = 1.5;
    ModelParams p = filled(2, 3, 2, 4, 0.0);
    OptimizerState s = OptimizerState::for_params(p);
    const ModelParams grad = filled(2, 3, 2, 4, g);
    gd_step(p, grad, s, lr, beta);
    gd_step(p, grad, s, lr, beta);
    for_each_block(p, [&](std::span<double> b) {
      for (double x : b) CHECK(x == doctest::Approx(-lr * g * (2.0 + beta)).epsilon(1e-14));
    });
  }

  TEST_CASE("gd_step reports a non-finite parameter as divergence") {
    ModelParams p = filled(1, 1, 1, 1, 0.0);
    OptimizerState s = OptimizerState::for_params(p);
    ModelParams g = filled(1, 1, 1, 1, 0.0);
    g.V(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(gd_step(p, g, s, 0.1, 0.5), "divergence", DivergenceError);
  }

  TEST_CASE("sampler puts all mass on the only topic that can emit the word") {
    Matrix theta(1, 2);
    theta(0, 0) = 0.9;
    theta(0, 1) = 0.1;
    Matrix phi(2, 2);
    phi(0, 1) = 1.0;
    phi(1, 0) = 1.0;
    std::mt19937_64 rng(1);
    const Corpus c = one_doc(std::vector<Index>(1000, 0), 2);
    const auto z = sample_assignments(theta, phi, c, rng);
    for (Index t : z[0]) CHECK(t == 1);
  }

  TEST_CASE("sampler is uniform under uniform theta and phi") {
    const std::size_t F = 4, N = 100000;
    Matrix theta(1, F, 1.0 / F), phi(F, 3, 1.0 / 3.0);
    std::mt19937_64 rng(2);
    const auto z = sample_assignments(theta, phi, one_doc(std::vector<Index>(N, 1), 3), rng)[0];
    std::vector<double> hits(F, 0.0);
    for (Index t : z) hits[t] += 1.0;
    const double p = 1.0 / F, sigma = std::sqrt(N * p * (1.0 - p));
    for (double h : hits) CHECK(std::abs(h - N * p) <= 3.0 * sigma);
  }

  TEST_CASE("sampler follows the normalized theta-phi product on a 1-token doc") {
    const std::size_t F = 3, N = 100000;
    Matrix theta(1, F), phi(F, 2);
    const double th[] = {0.5, 0.3, 0.2}, ph[] = {0.2, 0.6, 0.5};
    for (std::size_t f = 0; f < F; ++f) {
      theta(0, f) = th[f];
      phi(f, 0) = ph[f];
      phi(f, 1) = 1.0 - ph[f];
    }
    double norm = 0.0;
    for (std::size_t f = 0; f < F; ++f) norm += th[f] * ph[f];
    std::mt19937_64 rng(3);
    const Corpus c = one_doc({0}, 2);
    std::vector<double> hits(F, 0.0);
    for (std::size_t n = 0; n < N; ++n) hits[sample_assignments(theta, phi, c, rng)[0][0]] += 1.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double p = th[f] * ph[f] / norm;
      CHECK(std::abs(hits[f] - N * p) <= 3.0 * std::sqrt(N * p * (1.0 - p)));
    }
  }

  TEST_CASE("sampler rejects a token no topic can emit") {
    Matrix theta(1, 2, 0.5), phi(2, 2);
    phi(0, 1) = 1.0;
    phi(1, 1) = 1.0;
    std::mt19937_64 rng(4);
    CHECK_THROWS_WITH_AS(sample_assignments(theta, phi, one_doc({0}, 2), rng),
                         "degenerate token distribution", std::domain_error);
  }

  TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.factors = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(parse_lr_policy("fixed") == LrPolicy::fixed);
    CHECK(parse_lr_policy(to_string(LrPolicy::halve_on_increase)) == LrPolicy::halve_on_increase);
    CHECK_THROWS_AS(parse_lr_policy("adam"), std::invalid_argument);
  }

  TEST_CASE("PMF fits a noiseless rank-2 matrix") {
    const TrainingData d = low_rank_data(5);
    TrainConfig cfg;
    cfg.factors = 2;
    cfg.learning_rate = 0.01;
    cfg.variant = {.lambda = 0.0, .lambda_rel = 0.0, .lambda_rev = 0.0,
                   .use_social_weights = false, .use_trust_values = false};
    const auto result = train(d, neutral_social_context(20), cfg);
    double se = 0.0;
    for (const auto& r : d.ratings.triples()) {
      const double e = predict(result.params, r.user, r.item) - d.ratings.raw_value(r);
      se += e * e;
    }
    CHECK(std::sqrt(se / static_cast<double>(d.ratings.size())) < 0.05);
  }

  TEST_CASE("history holds one objective per epoch and is non-increasing within a pass") {
    const Instance inst = random_instance(41);
    const TrainConfig cfg = small_config();
    const auto r = train(inst.data, inst.context, cfg);
    REQUIRE(r.history.size() == cfg.passes * cfg.epochs_per_pass);
    CHECK(r.lr_history.size() == r.history.size());
    for (std::size_t pass = 0; pass < cfg.passes; ++pass)
      for (std::size_t e = 1; e < cfg.epochs_per_pass; ++e)
        CHECK(r.history[pass * cfg.epochs_per_pass + e] <= r.history[pass * cfg.epochs_per_pass + e - 1]);
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const Instance inst = random_instance(42);
    const TrainConfig cfg = small_config();
    const auto a = train(inst.data, inst.context, cfg);
    const auto b = train(inst.data, inst.context, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history == b.history);
    CHECK(a.assignments == b.assignments);
  }

  TEST_CASE("without the review term, assignments never reach the rating parameters") {
    const Instance inst = random_instance(43);
    TrainConfig cfg = small_config();
    cfg.variant.lambda_rev = 0.0;
    cfg.sampling_seed = 1;
    const auto a = train(inst.data, inst.context, cfg);
    cfg.sampling_seed = 999;
    const auto b = train(inst.data, inst.context, cfg);
    CHECK(a.assignments != b.assignments);
    CHECK(a.params.U == b.params.U);
    CHECK(a.params.V == b.params.V);
    CHECK(a.params.H == b.params.H);
  }

  TEST_CASE("count invariants hold after every sweep") {
    const Instance inst = random_instance(44);
    std::size_t sweeps = 0;
    TrainObserver obs;
    obs.on_sweep = [&](std::size_t, const Corpus& c, const TopicCounts& counts) {
      ++sweeps;
      CHECK(counts_consistent(counts, c.n_tokens()));
      CHECK(counts == rebuild_counts(c, 3));
    };
    const TrainConfig cfg = small_config();
    train(inst.data, inst.context, cfg, obs);
    CHECK(sweeps == cfg.passes);
  }

  TEST_CASE("fixed policy reports divergence with the last finite state") {
    const Instance inst = random_instance(45);
    TrainConfig cfg = small_config();
    cfg.lr_policy = LrPolicy::fixed;
    cfg.learning_rate = 1e3;
    const auto r = train(inst.data, inst.context, cfg);
    REQUIRE(r.divergence.has_value());
    bool finite = true;
    for_each_block(r.last_params, [&](std::span<const double> b) {
      for (double x : b) finite = finite && std::isfinite(x);
    });
    CHECK(finite);
  }

  TEST_CASE("train writes one log line per epoch") {
    const Instance inst = random_instance(46);
    TrainConfig cfg = small_config();
    cfg.passes = 2;
    std::ostringstream log;
    train(inst.data, inst.context, cfg, {}, &log);
    const std::string s = log.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 10);
    CHECK(s.rfind("1\t4\t", 0) == std::string::npos);
    CHECK(s.find("\n1\t4\t") != std::string::npos);
  }

  TEST_CASE("train rejects uncentered ratings") {
    Instance inst = random_instance(47);
    inst.data.ratings = inst.raw;
    CHECK_THROWS_AS(train(inst.data, inst.context, small_config()), DataError);
  }
}
