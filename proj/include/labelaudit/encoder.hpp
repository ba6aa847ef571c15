#pragma once

// Text encoders. The default maps the concatenated note pair to a signed,
// hashed bag of n-grams with unit L2 norm; the precomputed encoder looks up
// externally produced embeddings by incident id.
//
// Hashing: an n-gram is the UTF-8 bytes of its tokens joined by a single
// space. Its bucket is FNV-1a-64(bytes) & (hash_dim - 1) and its sign is the
// top bit of FNV-1a-64("#" + bytes) (set = negative).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/random.hpp"

namespace labelaudit {

enum class EncoderKind { hashed_ngrams, precomputed };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::hashed_ngrams;
  std::size_t max_tokens = 512;
  std::vector<int> ngram_orders{1, 2};
  std::size_t hash_dim = 262144;
  std::string embedding_path;
  std::size_t embedding_dim = 768;

  std::size_t dimension() const {
    return kind == EncoderKind::hashed_ngrams ? hash_dim : embedding_dim;
  }

  void validate() const {
    if (max_tokens < 1) throw UsageError("encoder.max_tokens must be >= 1");
    if (kind == EncoderKind::hashed_ngrams) {
      if (hash_dim == 0 || (hash_dim & (hash_dim - 1)) != 0)
        throw UsageError("encoder.hash_dim must be a power of two");
      if (ngram_orders.empty()) throw UsageError("encoder.ngram_orders is empty");
      for (int n : ngram_orders)
        if (n < 1) throw UsageError("encoder.ngram_orders entries must be >= 1");
    } else {
      if (embedding_path.empty()) throw UsageError("precomputed encoder needs embedding_path");
      if (embedding_dim == 0) throw UsageError("encoder.embedding_dim must be positive");
    }
  }
};

inline json to_json(const EncoderConfig& c) {
  return {{"kind", c.kind == EncoderKind::hashed_ngrams ? "hashed_ngrams" : "precomputed"},
          {"max_tokens", c.max_tokens},
          {"ngram_orders", c.ngram_orders},
          {"hash_dim", c.hash_dim},
          {"embedding_path", c.embedding_path},
          {"embedding_dim", c.embedding_dim}};
}

inline EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "hashed_ngrams")
      c.kind = EncoderKind::hashed_ngrams;
    else if (k == "precomputed")
      c.kind = EncoderKind::precomputed;
    else
      throw UsageError("unknown encoder kind '" + k + "'");
  }
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.ngram_orders = j.value("ngram_orders", c.ngram_orders);
  c.hash_dim = j.value("hash_dim", c.hash_dim);
  c.embedding_path = j.value("embedding_path", c.embedding_path);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.validate();
  return c;
}

/// Sorted, duplicate-free sparse vector.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

inline constexpr std::string_view kSeparatorToken = "\x1f" "sep";

/// Lowercases ASCII and splits on word boundaries. Word characters are ASCII
/// letters, digits, underscore and any non-ASCII byte (so UTF-8 letters stay
/// inside words); an apostrophe or period between two word characters is kept
/// inside the word ("don't", "3.5").
inline std::vector<std::string> tokenize(std::string_view text) {
  auto is_word = [](unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c >= 0x80;
  };
  std::vector<std::string> tokens;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if ((c == '\'' || c == '.') && !cur.empty() && i + 1 < text.size() &&
               is_word(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// note_a tokens, the separator, note_b tokens; truncated to max_tokens.
inline std::vector<std::string> note_pair_tokens(std::string_view note_a, std::string_view note_b,
                                                 std::size_t max_tokens) {
  auto tokens = tokenize(note_a);
  tokens.emplace_back(kSeparatorToken);
  for (auto& t : tokenize(note_b)) tokens.push_back(std::move(t));
  if (tokens.size() > max_tokens) tokens.resize(max_tokens);
  return tokens;
}

/// Signed hashed n-gram bag over an already tokenized sequence, L2-normalized.
inline SparseVector hash_tokens(const std::vector<std::string>& tokens, const EncoderConfig& cfg) {
  std::unordered_map<std::uint32_t, double> acc;
  const std::uint64_t mask = cfg.hash_dim - 1;
  std::string gram;
  for (int n : cfg.ngram_orders) {
    const auto order = static_cast<std::size_t>(n);
    if (tokens.size() < order) continue;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
      gram.clear();
      for (std::size_t k = 0; k < order; ++k) {
        if (k) gram.push_back(' ');
        gram += tokens[i + k];
      }
      const auto bucket = static_cast<std::uint32_t>(fnv1a64(gram) & mask);
      const std::uint64_t sign_hash = fnv1a64(gram, fnv1a64("#"));
      acc[bucket] += (sign_hash >> 63) ? -1.0 : 1.0;
    }
  }
  SparseVector v;
  std::vector<std::pair<std::uint32_t, double>> entries;
  entries.reserve(acc.size());
  double norm2 = 0.0;
  for (const auto& [k, x] : acc) {
    if (x == 0.0) continue;
    entries.emplace_back(k, x);
    norm2 += x * x;
  }
  std::sort(entries.begin(), entries.end());
  const double inv = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
  v.index.reserve(entries.size());
  v.value.reserve(entries.size());
  for (const auto& [k, x] : entries) {
    v.index.push_back(k);
    v.value.push_back(x * inv);
  }
  return v;
}

inline SparseVector encode_text(std::string_view note_a, std::string_view note_b,
                                const EncoderConfig& cfg) {
  return hash_tokens(note_pair_tokens(note_a, note_b, cfg.max_tokens), cfg);
}

/// Precomputed embedding table keyed by incident id.
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::filesystem::path& path, std::size_t dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding file " + path.string());
    EmbeddingTable t;
    t.dim_ = dim;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw DataError(path.string() + ":" + std::to_string(line) + ": " + e.what());
      }
      auto vec = j.at("vector").get<std::vector<double>>();
      if (vec.size() != dim)
        throw DataError(path.string() + ":" + std::to_string(line) + ": vector has dimension " +
                        std::to_string(vec.size()) + ", expected " + std::to_string(dim));
      t.rows_[j.at("incident_id").get<std::string>()] = std::move(vec);
    }
    return t;
  }

  void insert(std::string id, std::vector<double> vec) { rows_[std::move(id)] = std::move(vec); }

  SparseVector lookup(const std::string& id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw DataError("no precomputed embedding for incident '" + id + "'");
    SparseVector v;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (it->second[i] == 0.0) continue;
      v.index.push_back(static_cast<std::uint32_t>(i));
      v.value.push_back(it->second[i]);
    }
    return v;
  }

  std::size_t dimension() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> rows_;
};

/// Encodes a single incident. `table` is required for the precomputed kind.
inline SparseVector encode(const Incident& incident, const EncoderConfig& cfg,
                           const EmbeddingTable* table = nullptr) {
  if (cfg.kind == EncoderKind::precomputed) {
    if (!table) throw UsageError("precomputed encoder used without an embedding table");
    return table->lookup(incident.incident_id);
  }
  if (incident.note_a.empty() && incident.note_b.empty())
    throw DataError("incident '" + incident.incident_id + "' has no note text");
  return encode_text(incident.note_a, incident.note_b, cfg);
}

/// Feature rows for a corpus, indexed by corpus row. Only requested rows are
/// encoded; others stay empty.
class FeatureStore {
 public:
  FeatureStore() = default;

  FeatureStore(const Corpus& corpus, const EncoderConfig& cfg)
      : FeatureStore(corpus, cfg, all_rows(corpus)) {}

  FeatureStore(const Corpus& corpus, const EncoderConfig& cfg, const std::vector<std::size_t>& rows)
      : dim_(cfg.dimension()), rows_(corpus.size()) {
    cfg.validate();
    EmbeddingTable table;
    const EmbeddingTable* tp = nullptr;
    if (cfg.kind == EncoderKind::precomputed) {
      table = EmbeddingTable::load(cfg.embedding_path, cfg.embedding_dim);
      tp = &table;
    }
    for (auto r : rows) rows_[r] = encode(corpus[r], cfg, tp);
  }

  FeatureStore(std::size_t dimension, std::vector<SparseVector> rows)
      : dim_(dimension), rows_(std::move(rows)) {}

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  const SparseVector& operator[](std::size_t row) const { return rows_[row]; }

 private:
  static std::vector<std::size_t> all_rows(const Corpus& corpus) {
    std::vector<std::size_t> r(corpus.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
  }

  std::size_t dim_ = 0;
  std::vector<SparseVector> rows_;
};

}  // namespace labelaudit
