#pragma once

/**
 * Reading ratings / relations / review text and turning them into dense
 * containers.
 *
 * Input files are UTF-8, tab separated:
 *   ratings    user <TAB> item <TAB> score [<TAB> review text]
 *   relations  truster <TAB> trustee
 *   stoplist   one word per line
 * Blank lines and lines starting with '#' are skipped.
 *
 * Tokenizer: ASCII lowercase, split on runs of non-alphanumeric bytes, drop
 * stoplist members and tokens shorter than two characters.
 */

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "mr3/data_model.hpp"

namespace mr3 {

using Stoplist = std::unordered_set<std::string>;

inline constexpr std::size_t kDefaultVocabularySize = 8000;
inline constexpr std::size_t kMinOccurrences = 3;
inline constexpr const char* kTokenizerRule =
    "ascii-lowercase; split on non-alphanumeric runs; drop stopwords; drop tokens shorter than 2";

struct RatingRecord {
  std::string user;
  std::string item;
  double score = 0.0;
  std::string review;
  std::size_t line = 0;
};

struct RelationRecord {
  std::string truster;
  std::string trustee;
  std::size_t line = 0;
};

struct RawDataset {
  std::vector<RatingRecord> ratings;
  std::vector<RelationRecord> relations;
};

/// Parse errors carry `source:line:` prefixes.
std::vector<RatingRecord> read_ratings(std::istream& in, const std::string& source = "ratings");
std::vector<RelationRecord> read_relations(std::istream& in, const std::string& source = "relations");
Stoplist read_stoplist(std::istream& in);

RawDataset read_raw_dataset(const std::string& ratings_path, const std::string& relations_path);
Stoplist read_stoplist_file(const std::string& path);

std::vector<std::string> tokenize(std::string_view text, const Stoplist& stoplist);

/// The `size` most frequent tokens, most frequent first; ties broken
/// lexicographically ascending. Throws std::invalid_argument for size 0.
std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                                          std::size_t size = kDefaultVocabularySize);

/// Keeps the first rating of each (user, item) pair.
RawDataset drop_duplicate_ratings(const RawDataset& raw);

/// Removes users and items with fewer than `min_count` ratings, repeating
/// until no such entity remains; relations keep surviving users only.
/// Throws DataError("dataset degenerate after pruning") if nothing survives.
RawDataset prune_rare(const RawDataset& raw, std::size_t min_count = kMinOccurrences);

/// Dense ids, vocabulary and per-review token ids.
struct Dataset {
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;
  SparseRatings ratings;  // raw scale; doc_ref indexes `reviews`
  SocialGraph graph;
  std::vector<std::string> vocab;
  std::vector<std::vector<Index>> reviews;  // in input order
  std::string tokenizer = kTokenizerRule;

  /// Corpus over `subset` (ratings of this dataset): each item's document is
  /// the concatenation of the subset's reviews of it, in input order.
  Corpus corpus_for(const SparseRatings& subset) const;
  Corpus corpus() const { return corpus_for(ratings); }
};

/// Assigns dense ids in first-seen order, builds the vocabulary from all
/// review text and maps reviews onto it. Duplicate ratings keep the first;
/// self-loops, duplicate relations and relations to unknown users are dropped.
Dataset assemble(const RawDataset& raw, std::size_t vocab_size, const Stoplist& stoplist);

/// Dataset statistics (users, items, ratings, relations, words, densities,
/// average words per item) as a JSON object.
std::string manifest_json(const Dataset& data);

void save_dataset(std::ostream& out, const Dataset& data);
Dataset load_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace mr3
