#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include "mr3/experiment.hpp"

namespace mr3 {

Dataset synthesize(const SynthConfig& cfg, SynthTruth* truth) {
  if (cfg.users < 2 || cfg.items < 1 || cfg.factors < 1 || cfg.vocab < cfg.factors)
    throw std::invalid_argument("synthetic dataset is too small");
  if (!(cfg.density > 0.0 && cfg.density <= 1.0))
    throw std::invalid_argument("density must lie in (0, 1]");

  const std::size_t I = cfg.users, J = cfg.items, F = cfg.factors, L = cfg.vocab;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ModelParams p = ModelParams::zeros(I, J, F, L);
  p.mu = cfg.mean;
  p.kappa = cfg.kappa;
  for (double& x : p.U.flat()) x = cfg.factor_stddev * normal(rng);
  for (double& x : p.V.flat()) x = cfg.factor_stddev * normal(rng);
  for (double& x : p.b_user) x = cfg.bias_stddev * normal(rng);
  for (double& x : p.b_item) x = cfg.bias_stddev * normal(rng);
  // Each topic owns a contiguous block of the vocabulary.
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t w = 0; w < L; ++w)
      p.psi(f, w) = 0.5 * normal(rng) + (w * F / L == f ? cfg.topic_peak : 0.0);

  // Trust edges: out-degree ~ Poisson, trustee chosen with weight
  // popularity_k * exp(homophily * cos(U_i, U_k)).
  std::vector<double> popularity(I);
  std::lognormal_distribution<double> lognormal(0.0, 1.0);
  for (double& x : popularity) x = lognormal(rng);
  std::vector<double> norms(I);
  for (std::size_t i = 0; i < I; ++i) norms[i] = std::sqrt(squared_norm(p.U.row(i))) + 1e-12;
  std::poisson_distribution<std::size_t> out_degree(cfg.avg_out_degree);
  std::vector<Edge> edges;
  std::vector<double> w(I);
  for (std::size_t i = 0; i < I; ++i) {
    const std::size_t d = std::min(out_degree(rng), I - 1);
    for (std::size_t k = 0; k < I; ++k) {
      const double cosine = dot(p.U.row(i), p.U.row(k)) / (norms[i] * norms[k]);
      w[k] = k == i ? 0.0 : popularity[k] * std::exp(cfg.homophily * cosine);
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < d) {
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const std::size_t k = pick(rng);
      chosen.insert(k);
      w[k] = 0.0;
    }
    for (std::size_t k : chosen) edges.push_back({static_cast<Index>(i), static_cast<Index>(k)});
  }
  SocialGraph graph(I, edges);

  const auto rank = rank_by_score(pagerank(graph));
  std::vector<double> noise(I);
  for (std::size_t i = 0; i < I; ++i) noise[i] = cfg.noise_stddev / std::sqrt(rating_weight(rank[i]));

  std::bernoulli_distribution observed(cfg.density);
  std::vector<Rating> triples;
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      if (!observed(rng)) continue;
      const double r = predict(p, static_cast<Index>(i), static_cast<Index>(j)) + noise[i] * normal(rng);
      triples.push_back({static_cast<Index>(i), static_cast<Index>(j), std::max(0.0, r), std::nullopt});
    }
  }

  // One document of tokens_per_doc tokens per rated item, dealt round-robin
  // over that item's ratings as individual reviews.
  std::vector<std::vector<std::size_t>> item_ratings(J);
  for (std::size_t t = 0; t < triples.size(); ++t) item_ratings[triples[t].item].push_back(t);
  const Matrix theta = topic_proportions(p);
  const Matrix phi = word_distributions(p);
  Dataset data;
  std::vector<std::vector<Index>> per_rating(triples.size());
  for (std::size_t j = 0; j < J; ++j) {
    if (item_ratings[j].empty()) continue;
    std::discrete_distribution<std::size_t> topic(theta.row(j).begin(), theta.row(j).end());
    for (std::size_t n = 0; n < cfg.tokens_per_doc; ++n) {
      const std::size_t z = topic(rng);
      std::discrete_distribution<std::size_t> word(phi.row(z).begin(), phi.row(z).end());
      per_rating[item_ratings[j][n % item_ratings[j].size()]].push_back(static_cast<Index>(word(rng)));
    }
  }
  for (std::size_t t = 0; t < triples.size(); ++t) {
    if (per_rating[t].empty()) continue;
    triples[t].doc_ref = static_cast<Index>(data.reviews.size());
    data.reviews.push_back(std::move(per_rating[t]));
  }

  for (std::size_t i = 0; i < I; ++i) data.user_keys.push_back("u" + std::to_string(i));
  for (std::size_t j = 0; j < J; ++j) data.item_keys.push_back("i" + std::to_string(j));
  for (std::size_t v = 0; v < L; ++v) data.vocab.push_back("w" + std::to_string(v));
  data.ratings = SparseRatings(I, J, std::move(triples));
  data.graph = std::move(graph);
  data.tokenizer = "synthetic";

  if (truth) *truth = SynthTruth{std::move(p), std::move(noise)};
  return data;
}

void write_tsv(const Dataset& data, const std::string& ratings_path, const std::string& relations_path) {
  std::ofstream ratings(ratings_path);
  if (!ratings) throw DataError("cannot write " + ratings_path);
  char buf[64];
  for (const auto& r : data.ratings.triples()) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    ratings << data.user_keys[r.user] << '\t' << data.item_keys[r.item] << '\t' << buf;
    if (r.doc_ref) {
      ratings << '\t';
      const auto& tokens = data.reviews[*r.doc_ref];
      for (std::size_t n = 0; n < tokens.size(); ++n) ratings << (n ? " " : "") << data.vocab[tokens[n]];
    }
    ratings << '\n';
  }
  std::ofstream relations(relations_path);
  if (!relations) throw DataError("cannot write " + relations_path);
  for (const auto& e : data.graph.edges())
    relations << data.user_keys[e.from] << '\t' << data.user_keys[e.to] << '\n';
}

}  // namespace mr3
