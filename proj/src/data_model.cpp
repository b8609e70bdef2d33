#include "mr3/data_model.hpp"

#include <numeric>

namespace mr3 {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) s += a[f] * b[f];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

SparseRatings::SparseRatings(std::size_t n_users, std::size_t n_items, std::vector<Rating> triples,
                             double global_mean, bool centered)
    : n_users_(n_users),
      n_items_(n_items),
      triples_(std::move(triples)),
      global_mean_(global_mean),
      centered_(centered) {
  for (const auto& r : triples_) {
    if (r.user >= n_users_ || r.item >= n_items_)
      throw DataError("rating references user " + std::to_string(r.user) + " / item " +
                      std::to_string(r.item) + " outside " + std::to_string(n_users_) + " x " +
                      std::to_string(n_items_));
  }
  std::stable_sort(triples_.begin(), triples_.end(), [](const Rating& a, const Rating& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  });
  for (std::size_t k = 1; k < triples_.size(); ++k) {
    if (triples_[k].user == triples_[k - 1].user && triples_[k].item == triples_[k - 1].item)
      throw DataError("duplicate rating for user " + std::to_string(triples_[k].user) +
                      ", item " + std::to_string(triples_[k].item));
  }

  user_offsets_.assign(n_users_ + 1, 0);
  item_offsets_.assign(n_items_ + 1, 0);
  for (const auto& r : triples_) {
    ++user_offsets_[r.user + 1];
    ++item_offsets_[r.item + 1];
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
  std::partial_sum(item_offsets_.begin(), item_offsets_.end(), item_offsets_.begin());

  // Counting sort keeps each item's positions in user-ascending order.
  item_order_.resize(triples_.size());
  std::vector<std::size_t> cursor(item_offsets_.begin(), item_offsets_.end() - 1);
  for (std::size_t k = 0; k < triples_.size(); ++k) item_order_[cursor[triples_[k].item]++] = k;
}

std::span<const Rating> SparseRatings::user_ratings(Index user) const {
  return std::span(triples_).subspan(user_offsets_[user],
                                     user_offsets_[user + 1] - user_offsets_[user]);
}

std::span<const std::size_t> SparseRatings::item_ratings(Index item) const {
  return std::span(item_order_).subspan(item_offsets_[item],
                                        item_offsets_[item + 1] - item_offsets_[item]);
}

std::pair<SparseRatings, double> center_ratings(const SparseRatings& raw) {
  if (raw.empty()) throw DataError("no observations");
  double sum = 0.0;
  for (const auto& r : raw.triples()) sum += raw.raw_value(r);
  const double mu = sum / static_cast<double>(raw.size());

  std::vector<Rating> residuals(raw.triples().begin(), raw.triples().end());
  for (auto& r : residuals) r.value = raw.raw_value(r) - mu;
  return {SparseRatings(raw.n_users(), raw.n_items(), std::move(residuals), mu, true), mu};
}

SocialGraph::SocialGraph(std::size_t n_users, std::vector<Edge> edges)
    : n_users_(n_users), edges_(std::move(edges)), out_degree_(n_users, 0), in_degree_(n_users, 0) {
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (edge.from >= n_users_ || edge.to >= n_users_)
      throw DataError("edge endpoint outside user range");
    if (edge.from == edge.to)
      throw DataError("self-loop on user " + std::to_string(edge.from));
    if (e > 0 && edges_[e - 1] == edge)
      throw DataError("duplicate edge " + std::to_string(edge.from) + " -> " +
                      std::to_string(edge.to));
    ++out_degree_[edge.from];
    ++in_degree_[edge.to];
  }
}

std::size_t Corpus::n_tokens() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

void Corpus::validate() const {
  if (assignments.size() != docs.size())
    throw DataError("corpus assignments do not match documents");
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (assignments[d].size() != docs[d].size())
      throw DataError("document " + std::to_string(d) + " has mismatched assignments");
    for (Index w : docs[d])
      if (w >= vocab.size()) throw DataError("token id " + std::to_string(w) + " outside vocabulary");
  }
}

ModelParams ModelParams::zeros(std::size_t n_users, std::size_t n_items, std::size_t factors,
                               std::size_t vocab) {
  ModelParams p;
  p.b_user.assign(n_users, 0.0);
  p.b_item.assign(n_items, 0.0);
  p.U = Matrix(n_users, factors);
  p.V = Matrix(n_items, factors);
  p.H = Matrix(factors, factors);
  p.psi = Matrix(factors, vocab);
  p.kappa = 0.0;
  return p;
}

TopicCounts rebuild_counts(const Corpus& corpus, std::size_t factors) {
  TopicCounts c;
  c.doc_topic = Matrix(corpus.n_docs(), factors);
  c.doc_total.assign(corpus.n_docs(), 0.0);
  c.topic_word = Matrix(factors, corpus.vocab_size());
  c.topic_total.assign(factors, 0.0);
  for (std::size_t d = 0; d < corpus.n_docs(); ++d) {
    const auto& words = corpus.docs[d];
    const auto& topics = corpus.assignments[d];
    if (topics.size() != words.size())
      throw DataError("document " + std::to_string(d) + " has mismatched assignments");
    for (std::size_t n = 0; n < words.size(); ++n) {
      const Index z = topics[n];
      if (z >= factors) throw DataError("invalid topic id");
      if (words[n] >= corpus.vocab_size())
        throw DataError("token id " + std::to_string(words[n]) + " outside vocabulary");
      c.doc_topic(d, z) += 1.0;
      c.doc_total[d] += 1.0;
      c.topic_word(z, words[n]) += 1.0;
      c.topic_total[z] += 1.0;
    }
  }
  return c;
}

bool counts_consistent(const TopicCounts& counts, std::size_t n_tokens) {
  const std::size_t F = counts.topic_total.size();
  double doc_grand = 0.0;
  for (std::size_t d = 0; d < counts.doc_total.size(); ++d) {
    double s = 0.0;
    for (std::size_t f = 0; f < F; ++f) s += counts.doc_topic(d, f);
    if (s != counts.doc_total[d]) return false;
    doc_grand += s;
  }
  double word_grand = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    double s = 0.0;
    for (std::size_t w = 0; w < counts.topic_word.cols(); ++w) s += counts.topic_word(f, w);
    if (s != counts.topic_total[f]) return false;
    word_grand += s;
  }
  const auto total = static_cast<double>(n_tokens);
  return doc_grand == total && word_grand == total;
}

}  // namespace mr3
