#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "mr3/data_model.hpp"

namespace mr3 {

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-10;
  std::size_t max_iter = 200;
};

/// Power iteration over the trust graph. Score flows along i -> k (i trusts k);
/// dangling users spread their score uniformly. Scores sum to 1.
std::vector<double> pagerank(const SocialGraph& graph, const PageRankOptions& opts = {});

/// 1-based ranks under descending score, ties broken by ascending user id.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores);

/// 1 / (1 + ln rank). Throws std::invalid_argument for rank 0.
double rating_weight(std::size_t rank);

/// sqrt(d-_k / (d+_i + d-_k)) for an edge i -> k.
double trust_value(std::size_t out_deg_i, std::size_t in_deg_k);

/// One user's ratings as (item, value) pairs sorted by item.
struct SparseVector {
  std::vector<Index> index;
  std::vector<double> value;
};

/// Cosine of two sparse vectors; 0 if either is empty or all-zero.
double rating_cosine(const SparseVector& a, const SparseVector& b);

/// Per-user weights and per-edge constants, aligned with graph.edges().
struct SocialContext {
  std::vector<double> score;
  std::vector<std::size_t> rank;
  std::vector<double> weight_per_user;
  std::vector<double> trust;
  std::vector<double> similarity;
};

/// Builds every social constant from the training ratings (values taken on the
/// raw scale) and the trust graph.
SocialContext build_social_context(const SocialGraph& graph, const SparseRatings& ratings,
                                   const PageRankOptions& opts = {});

/// A context with unit weights, unit trust and zero similarity, for data with
/// no graph.
SocialContext neutral_social_context(std::size_t n_users);

/// TSV dump: a `user rank score weight` table, then a `from to trust similarity` table.
void write_social_context(std::ostream& out, const SocialGraph& graph, const SocialContext& ctx);

}  // namespace mr3
