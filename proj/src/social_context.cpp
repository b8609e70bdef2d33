#include "mr3/social_context.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace mr3 {

std::vector<double> pagerank(const SocialGraph& graph, const PageRankOptions& opts) {
  if (!(opts.damping > 0.0 && opts.damping < 1.0))
    throw std::invalid_argument("pagerank damping must lie in (0, 1)");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("pagerank tolerance must be positive");

  const std::size_t n = graph.n_users();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> rank(n, inv_n), next(n);

  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    double dangling = 0.0;
    for (Index u = 0; u < n; ++u)
      if (graph.out_degree(u) == 0) dangling += rank[u];

    std::fill(next.begin(), next.end(), 0.0);
    for (const auto& e : graph.edges())
      next[e.to] += rank[e.from] / static_cast<double>(graph.out_degree(e.from));

    const double base = (1.0 - opts.damping) * inv_n + opts.damping * dangling * inv_n;
    double change = 0.0, total = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      next[u] = base + opts.damping * next[u];
      total += next[u];
    }
    for (std::size_t u = 0; u < n; ++u) {
      next[u] /= total;
      change += std::abs(next[u] - rank[u]);
    }
    rank.swap(next);
    if (change < opts.tol) break;
  }
  return rank;
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos + 1;
  return rank;
}

double rating_weight(std::size_t rank) {
  if (rank == 0) throw std::invalid_argument("rank is 1-based");
  return 1.0 / (1.0 + std::log(static_cast<double>(rank)));
}

double trust_value(std::size_t out_deg_i, std::size_t in_deg_k) {
  if (out_deg_i == 0 && in_deg_k == 0)
    throw std::invalid_argument("zero degrees are impossible for an existing edge");
  return std::sqrt(static_cast<double>(in_deg_k) / static_cast<double>(out_deg_i + in_deg_k));
}

double rating_cosine(const SparseVector& a, const SparseVector& b) {
  double ab = 0.0;
  std::size_t p = 0, q = 0;
  while (p < a.index.size() && q < b.index.size()) {
    if (a.index[p] < b.index[q]) {
      ++p;
    } else if (b.index[q] < a.index[p]) {
      ++q;
    } else {
      ab += a.value[p++] * b.value[q++];
    }
  }
  const double na = std::sqrt(squared_norm(a.value));
  const double nb = std::sqrt(squared_norm(b.value));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return ab / (na * nb);
}

SocialContext build_social_context(const SocialGraph& graph, const SparseRatings& ratings,
                                   const PageRankOptions& opts) {
  if (graph.n_users() != ratings.n_users())
    throw DataError("social graph and ratings disagree on the number of users");
  SocialContext ctx;
  ctx.score = pagerank(graph, opts);
  ctx.rank = rank_by_score(ctx.score);
  ctx.weight_per_user.resize(graph.n_users());
  for (std::size_t u = 0; u < graph.n_users(); ++u)
    ctx.weight_per_user[u] = rating_weight(ctx.rank[u]);

  std::vector<SparseVector> rows(ratings.n_users());
  for (Index u = 0; u < ratings.n_users(); ++u) {
    for (const auto& r : ratings.user_ratings(u)) {
      rows[u].index.push_back(r.item);
      rows[u].value.push_back(ratings.raw_value(r));
    }
  }
  ctx.trust.reserve(graph.edges().size());
  ctx.similarity.reserve(graph.edges().size());
  for (const auto& e : graph.edges()) {
    ctx.trust.push_back(trust_value(graph.out_degree(e.from), graph.in_degree(e.to)));
    ctx.similarity.push_back(rating_cosine(rows[e.from], rows[e.to]));
  }
  return ctx;
}

SocialContext neutral_social_context(std::size_t n_users) {
  SocialContext ctx;
  ctx.score.assign(n_users, n_users ? 1.0 / static_cast<double>(n_users) : 0.0);
  ctx.rank.assign(n_users, 1);
  ctx.weight_per_user.assign(n_users, 1.0);
  return ctx;
}

void write_social_context(std::ostream& out, const SocialGraph& graph, const SocialContext& ctx) {
  out << "user\trank\tscore\tweight\n";
  for (std::size_t u = 0; u < ctx.rank.size(); ++u)
    out << u << '\t' << ctx.rank[u] << '\t' << ctx.score[u] << '\t' << ctx.weight_per_user[u]
        << '\n';
  out << "\nfrom\tto\ttrust\tsimilarity\n";
  const auto edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e)
    out << edges[e].from << '\t' << edges[e].to << '\t' << ctx.trust[e] << '\t'
        << ctx.similarity[e] << '\n';
}

}  // namespace mr3
