#pragma once

// Random small instances and brute-force reference implementations shared by
// the unit tests and the acceptance binary. Nothing here calls into the
// objective or gradient code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "mr3/data_model.hpp"
#include "mr3/inference.hpp"
#include "mr3/model_core.hpp"
#include "mr3/social_context.hpp"

namespace mr3::testing {

struct InstanceShape {
  std::size_t users = 8;
  std::size_t items = 10;
  std::size_t factors = 3;
  std::size_t vocab = 20;
  std::size_t tokens = 50;
  std::size_t edges = 15;
  double density = 0.4;
};

struct Instance {
  SparseRatings raw;
  TrainingData data;  // centered ratings
  SocialContext context;
  TopicCounts counts;
  ModelParams params;

  ModelInputs inputs() const { return {data.ratings, data.graph, context, counts}; }
};

inline Instance random_instance(std::uint64_t seed, const InstanceShape& s = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(1.0, 5.0);
  std::bernoulli_distribution observed(s.density);
  std::normal_distribution<double> normal(0.0, 0.5);

  Instance inst;
  std::vector<Rating> triples;
  for (Index i = 0; i < s.users; ++i)
    for (Index j = 0; j < s.items; ++j)
      if (observed(rng)) triples.push_back({i, j, score(rng), std::nullopt});
  if (triples.empty()) triples.push_back({0, 0, 3.0, std::nullopt});
  inst.raw = SparseRatings(s.users, s.items, triples);
  inst.data.ratings = center_ratings(inst.raw).first;

  std::set<std::pair<Index, Index>> chosen;
  std::uniform_int_distribution<Index> user(0, static_cast<Index>(s.users - 1));
  while (chosen.size() < s.edges) {
    const Index a = user(rng), b = user(rng);
    if (a != b) chosen.insert({a, b});
  }
  std::vector<Edge> edges;
  for (const auto& [a, b] : chosen) edges.push_back({a, b});
  inst.data.graph = SocialGraph(s.users, edges);
  inst.context = build_social_context(inst.data.graph, inst.raw);

  Corpus& corpus = inst.data.corpus;
  corpus.vocab.resize(s.vocab);
  for (std::size_t w = 0; w < s.vocab; ++w) corpus.vocab[w] = "w" + std::to_string(w);
  corpus.docs.assign(s.items, {});
  corpus.assignments.assign(s.items, {});
  std::uniform_int_distribution<std::size_t> doc(0, s.items - 1);
  std::uniform_int_distribution<Index> word(0, static_cast<Index>(s.vocab - 1));
  std::uniform_int_distribution<Index> topic(0, static_cast<Index>(s.factors - 1));
  for (std::size_t n = 0; n < s.tokens; ++n) {
    const std::size_t d = doc(rng);
    corpus.docs[d].push_back(word(rng));
    corpus.assignments[d].push_back(topic(rng));
  }
  inst.counts = rebuild_counts(corpus, s.factors);

  ModelParams& p = inst.params;
  p = ModelParams::zeros(s.users, s.items, s.factors, s.vocab);
  p.mu = inst.data.ratings.global_mean();
  for_each_block(p, [&](std::span<double> block) {
    for (double& x : block) x = normal(rng);
  });
  p.kappa = 1.0 + normal(rng);
  return inst;
}

/// A fresh random parameter point congruent to `like`.
inline ModelParams random_params(const ModelParams& like, std::mt19937_64& rng, double sd = 0.5) {
  ModelParams p = like;
  std::normal_distribution<double> normal(0.0, sd);
  for_each_block(p, [&](std::span<double> block) {
    for (double& x : block) x = normal(rng);
  });
  return p;
}

// ---------------------------------------------------------------------------
// Reference objectives, written term by term from the model definition.

namespace oracle {

inline double residual(const ModelParams& p, const Rating& r) {
  double uv = 0.0;
  for (std::size_t f = 0; f < p.factors(); ++f) uv += p.U(r.user, f) * p.V(r.item, f);
  return r.value - (p.b_user[r.user] + p.b_item[r.item] + uv);
}

inline double frobenius(const ModelParams& p) {
  double s = 0.0;
  for (double x : p.U.flat()) s += x * x;
  for (double x : p.V.flat()) s += x * x;
  for (double x : p.H.flat()) s += x * x;
  return s;
}

inline double rank_weight(std::size_t rank) { return 1.0 / (1.0 + std::log(static_cast<double>(rank))); }

inline double squared_error(const ModelParams& p, const Instance& in, bool weighted) {
  double s = 0.0;
  for (const auto& r : in.data.ratings.triples()) {
    const double e = residual(p, r);
    s += (weighted ? rank_weight(in.context.rank[r.user]) : 1.0) * e * e;
  }
  return s;
}

/// sum over tokens of log theta_{d,z} + log phi_{z,w}, one token at a time.
inline double token_loglik(const ModelParams& p, const Corpus& corpus) {
  const std::size_t F = p.factors(), L = p.vocab_size();
  double s = 0.0;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    for (std::size_t n = 0; n < corpus.docs[d].size(); ++n) {
      const std::size_t z = corpus.assignments[d][n], w = corpus.docs[d][n];
      double zt = 0.0;
      for (std::size_t f = 0; f < F; ++f) zt += std::exp(p.kappa * p.V(d, f));
      double zp = 0.0;
      for (std::size_t v = 0; v < L; ++v) zp += std::exp(p.psi(z, v));
      s += std::log(std::exp(p.kappa * p.V(d, z)) / zt) + std::log(std::exp(p.psi(z, w)) / zp);
    }
  }
  return s;
}

inline double social_error(const ModelParams& p, const Instance& in, bool trusted) {
  const std::size_t F = p.factors();
  const auto edges = in.data.graph.edges();
  double s = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Index i = edges[e].from, k = edges[e].to;
    double uhu = 0.0;
    for (std::size_t a = 0; a < F; ++a)
      for (std::size_t b = 0; b < F; ++b) uhu += p.U(i, a) * p.H(a, b) * p.U(k, b);
    const double dout = static_cast<double>(in.data.graph.out_degree(i));
    const double din = static_cast<double>(in.data.graph.in_degree(k));
    const double c = trusted ? std::sqrt(din / (dout + din)) : 1.0;
    const double r = in.context.similarity[e] - uhu;
    s += c * r * r;
  }
  return s;
}

// The baselines below each carry lambda ||H||^2 so that they are comparable
// with the joint objective at arbitrary points; H is inert for PMF and HFT.

inline double pmf(const ModelParams& p, const Instance& in, double lambda) {
  return squared_error(p, in, false) + lambda * frobenius(p);
}

inline double hft(const ModelParams& p, const Instance& in, double lambda, double lambda_rev) {
  return squared_error(p, in, false) - lambda_rev * token_loglik(p, in.data.corpus) +
         lambda * frobenius(p);
}

inline double locabal(const ModelParams& p, const Instance& in, double lambda, double lambda_rel) {
  return squared_error(p, in, true) + lambda_rel * social_error(p, in, false) + lambda * frobenius(p);
}

inline double esmf(const ModelParams& p, const Instance& in, double lambda, double lambda_rel) {
  return squared_error(p, in, true) + lambda_rel * social_error(p, in, true) + lambda * frobenius(p);
}

inline double mr3(const ModelParams& p, const Instance& in, double lambda, double lambda_rel,
                  double lambda_rev) {
  return squared_error(p, in, true) - lambda_rev * token_loglik(p, in.data.corpus) +
         lambda_rel * social_error(p, in, true) + lambda * frobenius(p);
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Finite differences

/// Central differences of `f` at every fitted coordinate of `p`, in
/// for_each_block order.
inline std::vector<double> numeric_gradient(const ModelParams& p,
                                            const std::function<double(const ModelParams&)>& f,
                                            double h = 1e-5) {
  std::vector<double> out;
  ModelParams q = p;
  std::vector<std::span<double>> blocks;
  for_each_block(q, [&](std::span<double> b) { blocks.push_back(b); });
  for (auto block : blocks) {
    for (double& x : block) {
      const double x0 = x;
      x = x0 + h;
      const double up = f(q);
      x = x0 - h;
      const double down = f(q);
      x = x0;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

inline std::vector<double> flatten(const ModelParams& g) {
  std::vector<double> out;
  for_each_block(g, [&](std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); });
  return out;
}

/// max |a - n| / max(|a|, |n|, floor); the floor only guards 0 / 0.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-12) {
  double worst = 0.0;
  for (std::size_t x = 0; x < analytic.size(); ++x) {
    const double scale = std::max({std::abs(analytic[x]), std::abs(numeric[x]), floor});
    worst = std::max(worst, std::abs(analytic[x] - numeric[x]) / scale);
  }
  return worst;
}

}  // namespace mr3::testing
