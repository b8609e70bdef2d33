#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mr3/data_model.hpp"
#include "mr3/model_core.hpp"

using namespace mr3;

namespace {

SparseRatings make_ratings(std::size_t I, std::size_t J, const std::vector<double>& values) {
  std::vector<Rating> t;
  for (std::size_t n = 0; n < values.size(); ++n)
    t.push_back({static_cast<Index>(n % I), static_cast<Index>(n / I), values[n], std::nullopt});
  return SparseRatings(I, J, t);
}

Corpus make_corpus(std::vector<std::vector<Index>> docs, std::vector<std::vector<Index>> z,
                   std::size_t L) {
  Corpus c;
  c.vocab.resize(L);
  c.docs = std::move(docs);
  c.assignments = std::move(z);
  return c;
}

}  // namespace

TEST_SUITE("data-model") {
  TEST_CASE("center_ratings on a constant matrix leaves zero residuals") {
    const auto [c, mu] = center_ratings(make_ratings(2, 2, {3.0, 3.0, 3.0, 3.0}));
    CHECK(mu == 3.0);
    for (const auto& r : c.triples()) CHECK(r.value == 0.0);
    CHECK(c.centered());
    CHECK(c.global_mean() == 3.0);
  }

  TEST_CASE("center_ratings on {5, 3, 1}") {
    const auto [c, mu] = center_ratings(make_ratings(3, 1, {5.0, 3.0, 1.0}));
    CHECK(mu == 3.0);
    CHECK(c[0].value == 2.0);
    CHECK(c[1].value == 0.0);
    CHECK(c[2].value == -2.0);
    CHECK(c.raw_value(c[0]) == 5.0);
  }

  TEST_CASE("center_ratings matches a summation oracle on 100 random ratings") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> v(100);
    for (double& x : v) x = u(rng);
    long double acc = 0.0L;
    for (double x : v) acc += x;
    const double expected = static_cast<double>(acc / 100.0L);
    const auto [c, mu] = center_ratings(make_ratings(10, 10, v));
    CHECK(std::abs(mu - expected) <= 1e-12);
    double resid_sum = 0.0;
    for (const auto& r : c.triples()) resid_sum += r.value;
    CHECK(std::abs(resid_sum / 100.0) <= 1e-10);
  }

  TEST_CASE("center_ratings rejects an empty set") {
    CHECK_THROWS_WITH_AS(center_ratings(SparseRatings(2, 2, {})), "no observations", DataError);
  }

  TEST_CASE("SparseRatings rejects duplicates and out-of-range ids") {
    CHECK_THROWS_AS(SparseRatings(2, 2, {{0, 0, 1.0, {}}, {0, 0, 2.0, {}}}), DataError);
    CHECK_THROWS_AS(SparseRatings(2, 2, {{2, 0, 1.0, {}}}), DataError);
    CHECK_THROWS_AS(SparseRatings(2, 2, {{0, 2, 1.0, {}}}), DataError);
  }

  TEST_CASE("SparseRatings exposes user-major and item-major views") {
    const SparseRatings r(3, 2, {{2, 1, 1.0, {}}, {0, 1, 2.0, {}}, {0, 0, 3.0, {}}, {1, 1, 4.0, {}}});
    REQUIRE(r.size() == 4);
    CHECK(r[0].user == 0);
    CHECK(r[0].item == 0);
    CHECK(r.user_ratings(0).size() == 2);
    CHECK(r.user_ratings(2).size() == 1);
    const auto col = r.item_ratings(1);
    REQUIRE(col.size() == 3);
    for (std::size_t n = 0; n < col.size(); ++n) CHECK(r[col[n]].item == 1);
    CHECK(r[col[0]].user < r[col[1]].user);
  }

  TEST_CASE("SocialGraph degree sums equal the edge count") {
    const SocialGraph g(4, {{0, 1}, {1, 2}, {2, 0}, {3, 0}, {0, 2}});
    std::size_t out = 0, in = 0;
    for (Index u = 0; u < 4; ++u) {
      out += g.out_degree(u);
      in += g.in_degree(u);
    }
    CHECK(out == 5);
    CHECK(in == 5);
    CHECK(g.in_degree(0) == 2);
    CHECK_THROWS_AS(SocialGraph(2, {{1, 1}}), DataError);
    CHECK_THROWS_AS(SocialGraph(2, {{0, 1}, {0, 1}}), DataError);
  }

  TEST_CASE("rebuild_counts on a single token") {
    const auto c = rebuild_counts(make_corpus({{0}}, {{0}}, 1), 3);
    CHECK(c.doc_topic(0, 0) == 1.0);
    CHECK(c.doc_topic(0, 1) == 0.0);
    CHECK(c.doc_topic(0, 2) == 0.0);
    CHECK(c.doc_total[0] == 1.0);
  }

  TEST_CASE("rebuild_counts on an empty doc") {
    const auto c = rebuild_counts(make_corpus({{}, {1}}, {{}, {1}}, 2), 2);
    CHECK(c.doc_topic(0, 0) == 0.0);
    CHECK(c.doc_topic(0, 1) == 0.0);
    CHECK(c.doc_total[0] == 0.0);
    CHECK(counts_consistent(c, 1));
  }

  TEST_CASE("rebuild_counts rejects a topic id >= F") {
    CHECK_THROWS_WITH_AS(rebuild_counts(make_corpus({{0}}, {{3}}, 1), 3), "invalid topic id",
                         DataError);
  }

  TEST_CASE("rebuild_counts equals a brute-force tally, is idempotent and order-independent") {
    std::mt19937_64 rng(11);
    const std::size_t D = 5, F = 4, L = 30, N = 200;
    std::vector<std::vector<Index>> docs(D), z(D);
    for (std::size_t n = 0; n < N; ++n) {
      const auto d = rng() % D;
      docs[d].push_back(static_cast<Index>(rng() % L));
      z[d].push_back(static_cast<Index>(rng() % F));
    }
    const Corpus corpus = make_corpus(docs, z, L);
    const auto c = rebuild_counts(corpus, F);

    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t f = 0; f < F; ++f) {
        std::size_t tally = 0;
        for (std::size_t n = 0; n < docs[d].size(); ++n) tally += z[d][n] == f;
        CHECK(c.doc_topic(d, f) == static_cast<double>(tally));
      }
      CHECK(c.doc_total[d] == static_cast<double>(docs[d].size()));
    }
    for (std::size_t f = 0; f < F; ++f) {
      std::size_t total = 0;
      for (std::size_t w = 0; w < L; ++w) {
        std::size_t tally = 0;
        for (std::size_t d = 0; d < D; ++d)
          for (std::size_t n = 0; n < docs[d].size(); ++n) tally += z[d][n] == f && docs[d][n] == w;
        CHECK(c.topic_word(f, w) == static_cast<double>(tally));
        total += tally;
      }
      CHECK(c.topic_total[f] == static_cast<double>(total));
    }
    CHECK(counts_consistent(c, N));
    CHECK(rebuild_counts(corpus, F) == c);

    Corpus shuffled = corpus;
    for (std::size_t d = 0; d < D; ++d) {
      std::vector<std::size_t> order(docs[d].size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t n = 0; n < order.size(); ++n) {
        shuffled.docs[d][n] = docs[d][order[n]];
        shuffled.assignments[d][n] = z[d][order[n]];
      }
    }
    CHECK(rebuild_counts(shuffled, F) == c);
  }

  TEST_CASE("counts_consistent detects a broken row sum") {
    auto c = rebuild_counts(make_corpus({{0, 1}}, {{0, 1}}, 2), 2);
    CHECK(counts_consistent(c, 2));
    c.doc_total[0] = 3.0;
    CHECK_FALSE(counts_consistent(c, 2));
  }

  TEST_CASE("zero parameters predict mu for every pair") {
    const auto [c, mu] = center_ratings(make_ratings(3, 4, {1, 2, 3, 4, 5, 1, 2, 3, 4, 5, 1, 2}));
    ModelParams p = ModelParams::zeros(3, 4, 2, 5);
    p.mu = mu;
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 4; ++j) CHECK(predict(p, i, j) == mu);
  }
}
