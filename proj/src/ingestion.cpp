#include "mr3/ingestion.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace mr3 {

namespace {

bool skip_line(std::string_view line) {
  return line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line, std::size_t max_fields) {
  std::vector<std::string_view> fields;
  while (fields.size() + 1 < max_fields) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) break;
    fields.push_back(line.substr(0, tab));
    line.remove_prefix(tab + 1);
  }
  fields.push_back(line);
  return fields;
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

bool is_alnum(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

std::vector<RatingRecord> read_ratings(std::istream& in, const std::string& source) {
  std::vector<RatingRecord> out;
  std::string buf;
  for (std::size_t line_no = 1; std::getline(in, buf); ++line_no) {
    const auto line = strip_cr(buf);
    if (skip_line(line)) continue;
    const auto f = split_tabs(line, 4);
    if (f.size() < 3) parse_error(source, line_no, "expected user, item and score");
    if (f[0].empty() || f[1].empty()) parse_error(source, line_no, "empty user or item key");
    RatingRecord r{std::string(f[0]), std::string(f[1]), 0.0, f.size() > 3 ? std::string(f[3]) : "",
                   line_no};
    const auto* end = f[2].data() + f[2].size();
    const auto res = std::from_chars(f[2].data(), end, r.score);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(r.score))
      parse_error(source, line_no, "invalid score '" + std::string(f[2]) + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RelationRecord> read_relations(std::istream& in, const std::string& source) {
  std::vector<RelationRecord> out;
  std::string buf;
  for (std::size_t line_no = 1; std::getline(in, buf); ++line_no) {
    const auto line = strip_cr(buf);
    if (skip_line(line)) continue;
    const auto f = split_tabs(line, 3);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      parse_error(source, line_no, "expected truster and trustee");
    out.push_back({std::string(f[0]), std::string(f[1]), line_no});
  }
  return out;
}

Stoplist read_stoplist(std::istream& in) {
  Stoplist words;
  std::string buf;
  while (std::getline(in, buf)) {
    auto w = std::string(strip_cr(buf));
    w.erase(0, w.find_first_not_of(" \t"));
    w.erase(w.find_last_not_of(" \t") + 1);
    if (w.empty() || w.front() == '#') continue;
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(w));
  }
  return words;
}

RawDataset read_raw_dataset(const std::string& ratings_path, const std::string& relations_path) {
  RawDataset raw;
  std::ifstream ratings(ratings_path);
  if (!ratings) throw DataError("cannot open " + ratings_path);
  raw.ratings = read_ratings(ratings, ratings_path);
  if (!relations_path.empty()) {
    std::ifstream relations(relations_path);
    if (!relations) throw DataError("cannot open " + relations_path);
    raw.relations = read_relations(relations, relations_path);
  }
  return raw;
}

Stoplist read_stoplist_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_stoplist(in);
}

std::vector<std::string> tokenize(std::string_view text, const Stoplist& stoplist) {
  std::vector<std::string> tokens;
  std::string cur;
  const auto flush = [&] {
    if (cur.size() >= 2 && !stoplist.contains(cur)) tokens.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (is_alnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                                          std::size_t size) {
  if (size == 0) throw std::invalid_argument("vocabulary size must be at least 1");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& doc : docs)
    for (const auto& t : doc) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > size) ranked.resize(size);
  std::vector<std::string> vocab;
  vocab.reserve(ranked.size());
  for (auto& [word, count] : ranked) vocab.push_back(std::move(word));
  return vocab;
}

RawDataset drop_duplicate_ratings(const RawDataset& raw) {
  RawDataset out;
  out.relations = raw.relations;
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (const auto& r : raw.ratings)
    if (seen.emplace(r.user, r.item).second) out.ratings.push_back(r);
  return out;
}

RawDataset prune_rare(const RawDataset& raw, std::size_t min_count) {
  std::vector<const RatingRecord*> alive;
  alive.reserve(raw.ratings.size());
  for (const auto& r : raw.ratings) alive.push_back(&r);

  for (;;) {
    std::unordered_map<std::string_view, std::size_t> user_count, item_count;
    for (const auto* r : alive) {
      ++user_count[r->user];
      ++item_count[r->item];
    }
    const auto before = alive.size();
    std::erase_if(alive, [&](const RatingRecord* r) {
      return user_count[r->user] < min_count || item_count[r->item] < min_count;
    });
    if (alive.size() == before) break;
  }
  if (alive.empty()) throw DataError("dataset degenerate after pruning");

  RawDataset out;
  std::unordered_set<std::string_view> users;
  out.ratings.reserve(alive.size());
  for (const auto* r : alive) {
    out.ratings.push_back(*r);
    users.insert(r->user);
  }
  for (const auto& rel : raw.relations)
    if (users.contains(rel.truster) && users.contains(rel.trustee)) out.relations.push_back(rel);
  return out;
}

Corpus Dataset::corpus_for(const SparseRatings& subset) const {
  Corpus c;
  c.vocab = vocab;
  c.docs.resize(ratings.n_items());
  std::vector<std::vector<Index>> review_ids(ratings.n_items());
  for (const auto& r : subset.triples())
    if (r.doc_ref) review_ids.at(r.item).push_back(*r.doc_ref);
  for (std::size_t j = 0; j < review_ids.size(); ++j) {
    auto& ids = review_ids[j];
    std::sort(ids.begin(), ids.end());
    for (Index id : ids) {
      const auto& tokens = reviews.at(id);
      c.docs[j].insert(c.docs[j].end(), tokens.begin(), tokens.end());
    }
  }
  c.assignments.resize(c.docs.size());
  for (std::size_t j = 0; j < c.docs.size(); ++j) c.assignments[j].assign(c.docs[j].size(), 0);
  return c;
}

Dataset assemble(const RawDataset& input, std::size_t vocab_size, const Stoplist& stoplist) {
  if (input.ratings.empty()) throw DataError("no rating records");
  const RawDataset raw = drop_duplicate_ratings(input);

  Dataset data;
  std::unordered_map<std::string, Index> user_id, item_id;
  const auto intern = [](std::unordered_map<std::string, Index>& ids,
                         std::vector<std::string>& keys, const std::string& key) {
    auto [it, inserted] = ids.try_emplace(key, static_cast<Index>(keys.size()));
    if (inserted) keys.push_back(key);
    return it->second;
  };

  std::vector<std::vector<std::string>> tokenized;
  std::vector<Rating> triples;
  triples.reserve(raw.ratings.size());
  for (const auto& r : raw.ratings) {
    Rating t{intern(user_id, data.user_keys, r.user), intern(item_id, data.item_keys, r.item),
             r.score, std::nullopt};
    if (!r.review.empty()) {
      t.doc_ref = static_cast<Index>(tokenized.size());
      tokenized.push_back(tokenize(r.review, stoplist));
    }
    triples.push_back(t);
  }

  data.vocab = build_vocabulary(tokenized, vocab_size);
  std::unordered_map<std::string_view, Index> word_id;
  for (std::size_t w = 0; w < data.vocab.size(); ++w) word_id.emplace(data.vocab[w], static_cast<Index>(w));
  data.reviews.reserve(tokenized.size());
  for (const auto& doc : tokenized) {
    std::vector<Index> ids;
    for (const auto& t : doc)
      if (auto it = word_id.find(t); it != word_id.end()) ids.push_back(it->second);
    data.reviews.push_back(std::move(ids));
  }

  data.ratings = SparseRatings(data.user_keys.size(), data.item_keys.size(), std::move(triples));

  std::set<std::pair<Index, Index>> edges;
  for (const auto& rel : raw.relations) {
    const auto a = user_id.find(rel.truster);
    const auto b = user_id.find(rel.trustee);
    if (a == user_id.end() || b == user_id.end() || a->second == b->second) continue;
    edges.emplace(a->second, b->second);
  }
  std::vector<Edge> edge_list;
  edge_list.reserve(edges.size());
  for (auto [from, to] : edges) edge_list.push_back({from, to});
  data.graph = SocialGraph(data.user_keys.size(), std::move(edge_list));
  return data;
}

std::string manifest_json(const Dataset& data) {
  const double users = static_cast<double>(data.ratings.n_users());
  const double items = static_cast<double>(data.ratings.n_items());
  std::size_t words = 0;
  for (const auto& r : data.ratings.triples())
    if (r.doc_ref) words += data.reviews[*r.doc_ref].size();
  nlohmann::ordered_json m;
  m["users"] = data.ratings.n_users();
  m["items"] = data.ratings.n_items();
  m["ratings"] = data.ratings.size();
  m["reviews"] = data.reviews.size();
  m["relations"] = data.graph.edges().size();
  m["vocabulary"] = data.vocab.size();
  m["words"] = words;
  m["rating_density"] = users * items > 0 ? static_cast<double>(data.ratings.size()) / (users * items) : 0.0;
  m["social_density"] = users > 0 ? static_cast<double>(data.graph.edges().size()) / (users * users) : 0.0;
  m["avg_words_per_item"] = items > 0 ? static_cast<double>(words) / items : 0.0;
  m["tokenizer"] = data.tokenizer;
  return m.dump(2);
}

// ---------------------------------------------------------------------------
// Binary dataset: magic "MR3DSET\0", u32 version, then length-prefixed sections.

namespace {

constexpr std::array<char, 8> kDatasetMagic = {'M', 'R', '3', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kNoReview = 0xffffffffu;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated dataset file");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("truncated dataset file");
  return s;
}

void put_strings(std::ostream& out, const std::vector<std::string>& v) {
  put<std::uint64_t>(out, v.size());
  for (const auto& s : v) put_string(out, s);
}

std::vector<std::string> get_strings(std::istream& in) {
  std::vector<std::string> v(get<std::uint64_t>(in));
  for (auto& s : v) s = get_string(in);
  return v;
}

}  // namespace

void save_dataset(std::ostream& out, const Dataset& data) {
  out.write(kDatasetMagic.data(), kDatasetMagic.size());
  put<std::uint32_t>(out, kDatasetVersion);
  put_string(out, data.tokenizer);
  put_strings(out, data.user_keys);
  put_strings(out, data.item_keys);
  put_strings(out, data.vocab);
  put<std::uint64_t>(out, data.ratings.size());
  for (const auto& r : data.ratings.triples()) {
    put<std::uint32_t>(out, r.user);
    put<std::uint32_t>(out, r.item);
    put<double>(out, r.value);
    put<std::uint32_t>(out, r.doc_ref.value_or(kNoReview));
  }
  put<std::uint64_t>(out, data.graph.edges().size());
  for (const auto& e : data.graph.edges()) {
    put<std::uint32_t>(out, e.from);
    put<std::uint32_t>(out, e.to);
  }
  put<std::uint64_t>(out, data.reviews.size());
  for (const auto& rev : data.reviews) {
    put<std::uint64_t>(out, rev.size());
    for (Index w : rev) put<std::uint32_t>(out, w);
  }
  if (!out) throw DataError("failed to write dataset");
}

Dataset load_dataset(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kDatasetMagic)
    throw DataError("not an MR3 dataset file");
  if (get<std::uint32_t>(in) != kDatasetVersion) throw DataError("unsupported dataset version");
  Dataset data;
  data.tokenizer = get_string(in);
  data.user_keys = get_strings(in);
  data.item_keys = get_strings(in);
  data.vocab = get_strings(in);
  std::vector<Rating> triples(get<std::uint64_t>(in));
  for (auto& r : triples) {
    r.user = get<std::uint32_t>(in);
    r.item = get<std::uint32_t>(in);
    r.value = get<double>(in);
    const auto doc = get<std::uint32_t>(in);
    if (doc != kNoReview) r.doc_ref = doc;
  }
  std::vector<Edge> edges(get<std::uint64_t>(in));
  for (auto& e : edges) {
    e.from = get<std::uint32_t>(in);
    e.to = get<std::uint32_t>(in);
  }
  data.reviews.resize(get<std::uint64_t>(in));
  for (auto& rev : data.reviews) {
    rev.resize(get<std::uint64_t>(in));
    for (auto& w : rev) {
      w = get<std::uint32_t>(in);
      if (w >= data.vocab.size()) throw DataError("dataset token id outside vocabulary");
    }
  }
  for (const auto& r : triples)
    if (r.doc_ref && *r.doc_ref >= data.reviews.size()) throw DataError("dataset review id out of range");
  data.ratings = SparseRatings(data.user_keys.size(), data.item_keys.size(), std::move(triples));
  data.graph = SocialGraph(data.user_keys.size(), std::move(edges));
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  save_dataset(out, data);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load_dataset(in);
}

}  // namespace mr3
