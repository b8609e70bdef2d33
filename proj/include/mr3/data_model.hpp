#pragma once

/**
 * Core containers shared by every stage of the MR3 pipeline.
 *
 *   SparseRatings : observed (user, item, rating) triples, sorted user-major,
 *                   with an item-major index view
 *   SocialGraph   : directed trust edges (i trusts k) with degree tables
 *   Corpus        : one token sequence per item, plus a topic id per token
 *   ModelParams   : mu, biases, U (I x F), V (J x F), H (F x F), psi (F x L), kappa
 *   TopicCounts   : doc-topic and topic-word tallies of the current assignments
 *
 * Latent factor matrices are stored one row per entity so that U_i and V_j
 * are contiguous spans of length F.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mr3 {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite objective or parameter during optimization.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Index = std::uint32_t;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

struct Rating {
  Index user = 0;
  Index item = 0;
  double value = 0.0;
  /// Id of the review text attached to this observation, if any. Reviews are
  /// aggregated into the document of the rated item.
  std::optional<Index> doc_ref;

  bool operator==(const Rating&) const = default;
};

/// Immutable set of observed ratings. At most one rating per (user, item).
class SparseRatings {
 public:
  SparseRatings() = default;
  /// Validates bounds and uniqueness; throws DataError on violation.
  SparseRatings(std::size_t n_users, std::size_t n_items, std::vector<Rating> triples,
                double global_mean = 0.0, bool centered = false);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  /// Triples sorted by (user, item).
  std::span<const Rating> triples() const { return triples_; }
  const Rating& operator[](std::size_t k) const { return triples_[k]; }

  /// Ratings of one user (contiguous, item-ascending).
  std::span<const Rating> user_ratings(Index user) const;
  /// Positions into triples() of the ratings of one item, user-ascending.
  std::span<const std::size_t> item_ratings(Index item) const;

  double global_mean() const { return global_mean_; }
  /// True when stored values are residuals r - mu.
  bool centered() const { return centered_; }
  /// Rating on the original scale.
  double raw_value(const Rating& r) const { return centered_ ? r.value + global_mean_ : r.value; }

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<Rating> triples_;
  std::vector<std::size_t> user_offsets_;
  std::vector<std::size_t> item_offsets_;
  std::vector<std::size_t> item_order_;
  double global_mean_ = 0.0;
  bool centered_ = false;
};

/// Returns the ratings with mu subtracted, and mu. Throws DataError("no observations").
std::pair<SparseRatings, double> center_ratings(const SparseRatings& raw);

struct Edge {
  Index from = 0;  // truster
  Index to = 0;    // trustee
  bool operator==(const Edge&) const = default;
};

/// Directed trust graph. No self-loops, no duplicate edges.
class SocialGraph {
 public:
  SocialGraph() = default;
  explicit SocialGraph(std::size_t n_users, std::vector<Edge> edges = {});

  std::size_t n_users() const { return n_users_; }
  std::span<const Edge> edges() const { return edges_; }
  std::size_t out_degree(Index u) const { return out_degree_[u]; }
  std::size_t in_degree(Index u) const { return in_degree_[u]; }

 private:
  std::size_t n_users_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> out_degree_;
  std::vector<std::size_t> in_degree_;
};

/// One document per item. assignments[d] is congruent to docs[d].
struct Corpus {
  std::vector<std::string> vocab;
  std::vector<std::vector<Index>> docs;
  std::vector<std::vector<Index>> assignments;

  std::size_t n_docs() const { return docs.size(); }
  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t n_tokens() const;
  /// Throws DataError if a token id is outside the vocabulary or shapes disagree.
  void validate() const;
};

struct ModelParams {
  double mu = 0.0;
  std::vector<double> b_user;
  std::vector<double> b_item;
  Matrix U;    // I x F
  Matrix V;    // J x F
  Matrix H;    // F x F
  Matrix psi;  // F x L
  double kappa = 1.0;

  /// All-zero parameters of the given shape (kappa = 0).
  static ModelParams zeros(std::size_t n_users, std::size_t n_items, std::size_t factors,
                           std::size_t vocab);

  std::size_t n_users() const { return b_user.size(); }
  std::size_t n_items() const { return b_item.size(); }
  std::size_t factors() const { return H.rows(); }
  std::size_t vocab_size() const { return psi.cols(); }

  bool operator==(const ModelParams&) const = default;
};

/// Calls fn(span) for each fitted block in a fixed order:
/// b_user, b_item, U, V, H, psi, kappa. mu is not a fitted block.
template <class P, class Fn>
void for_each_block(P& params, Fn&& fn) {
  fn(std::span(params.b_user));
  fn(std::span(params.b_item));
  fn(params.U.flat());
  fn(params.V.flat());
  fn(params.H.flat());
  fn(params.psi.flat());
  fn(std::span(&params.kappa, 1));
}

struct TopicCounts {
  Matrix doc_topic;                  // J x F  (M_j)
  std::vector<double> doc_total;     // J      (m_j)
  Matrix topic_word;                 // F x L  (M_w as columns)
  std::vector<double> topic_total;   // F      (m_f)

  bool operator==(const TopicCounts&) const = default;
};

/// Tallies the assignments of `corpus` into F topics.
/// Throws DataError("invalid topic id") for an assignment >= F.
TopicCounts rebuild_counts(const Corpus& corpus, std::size_t factors);

/// Checks the row-sum and grand-total invariants; returns false on any mismatch.
bool counts_consistent(const TopicCounts& counts, std::size_t n_tokens);

}  // namespace mr3
