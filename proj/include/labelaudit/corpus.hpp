#pragma once

// Multi-source incident corpora: ingestion, sparse-source exclusion, class
// balancing, stratified 8:1:1 splits and exclusive subset sampling.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "labelaudit/error.hpp"
#include "labelaudit/random.hpp"

namespace labelaudit {

using json = nlohmann::json;

enum class Sex { female, male, other, unknown };
enum class Race { black, white, other, unknown };
enum class Label : int { absent = 0, present = 1, unknown = -1 };

struct Demographics {
  std::optional<int> age_years;
  Sex sex = Sex::unknown;
  Race race = Race::unknown;
};

struct Incident {
  std::string incident_id;
  std::string source;
  std::string note_a;
  std::string note_b;
  Demographics demographics;
  std::map<std::string, Label> labels;

  /// 0 or 1 for a coded label, nullopt when missing or unknown.
  std::optional<int> label(const std::string& variable) const {
    auto it = labels.find(variable);
    if (it == labels.end() || it->second == Label::unknown) return std::nullopt;
    return static_cast<int>(it->second);
  }
};

inline std::string_view to_string(Sex s) {
  switch (s) {
    case Sex::female: return "female";
    case Sex::male: return "male";
    case Sex::other: return "other";
    case Sex::unknown: break;
  }
  return "unknown";
}

inline std::string_view to_string(Race r) {
  switch (r) {
    case Race::black: return "black";
    case Race::white: return "white";
    case Race::other: return "other";
    case Race::unknown: break;
  }
  return "unknown";
}

inline std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  if (s == "other") return Sex::other;
  if (s == "unknown" || s.empty()) return Sex::unknown;
  return std::nullopt;
}

inline std::optional<Race> parse_race(std::string_view s) {
  if (s == "black") return Race::black;
  if (s == "white") return Race::white;
  if (s == "other") return Race::other;
  if (s == "unknown" || s.empty()) return Race::unknown;
  return std::nullopt;
}

inline std::optional<Label> parse_label_token(std::string_view s) {
  if (s == "0") return Label::absent;
  if (s == "1") return Label::present;
  if (s == "unknown") return Label::unknown;
  return std::nullopt;
}

/// An ordered, unique-id collection of incidents. Rows are stable indices.
class Corpus {
 public:
  /// Throws DataError on a duplicate id.
  std::size_t add(Incident incident) {
    if (incident.incident_id.empty()) throw DataError("incident without incident_id");
    if (incident.source.empty())
      throw DataError("incident '" + incident.incident_id + "' has no source");
    auto [it, inserted] = index_.emplace(incident.incident_id, incidents_.size());
    if (!inserted)
      throw DataError("duplicate incident_id '" + incident.incident_id + "'");
    incidents_.push_back(std::move(incident));
    return incidents_.size() - 1;
  }

  std::size_t size() const { return incidents_.size(); }
  bool empty() const { return incidents_.empty(); }
  const Incident& operator[](std::size_t row) const { return incidents_[row]; }
  const std::vector<Incident>& incidents() const { return incidents_; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t row_of(const std::string& id) const {
    auto r = find(id);
    if (!r) throw DataError("unknown incident_id '" + id + "'");
    return *r;
  }

  std::vector<std::string> sources() const {
    std::set<std::string> s;
    for (const auto& inc : incidents_) s.insert(inc.source);
    return {s.begin(), s.end()};
  }

  bool has_variable(const std::string& variable) const {
    for (const auto& inc : incidents_)
      if (inc.labels.count(variable)) return true;
    return false;
  }

 private:
  std::vector<Incident> incidents_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One labeled row of a dataset view. The label may differ from the corpus
/// label when corrections are applied.
struct Example {
  std::size_t row = 0;
  int label = 0;
  friend bool operator==(const Example&, const Example&) = default;
};

using ExampleList = std::vector<Example>;

inline std::vector<std::string> ids_of(const Corpus& corpus, const ExampleList& view) {
  std::vector<std::string> ids;
  ids.reserve(view.size());
  for (const auto& e : view) ids.push_back(corpus[e.row].incident_id);
  return ids;
}

inline std::size_t count_positive(const ExampleList& view) {
  std::size_t n = 0;
  for (const auto& e : view) n += e.label == 1;
  return n;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const Incident& inc) {
  json labels = json::object();
  for (const auto& [k, v] : inc.labels) {
    if (v == Label::unknown)
      labels[k] = "unknown";
    else
      labels[k] = static_cast<int>(v);
  }
  json j;
  j["incident_id"] = inc.incident_id;
  j["source"] = inc.source;
  j["note_a"] = inc.note_a;
  j["note_b"] = inc.note_b;
  if (inc.demographics.age_years)
    j["age"] = *inc.demographics.age_years;
  else
    j["age"] = nullptr;
  j["sex"] = std::string(to_string(inc.demographics.sex));
  j["race"] = std::string(to_string(inc.demographics.race));
  j["labels"] = std::move(labels);
  return j;
}

inline void write_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& inc : corpus.incidents()) out << to_json(inc).dump() << '\n';
}

inline void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// Ingestion

enum class CorpusFormat { jsonl, csv };

struct RecordError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  Corpus corpus;
  std::vector<RecordError> rejected;
};

namespace detail {

// Builds an incident from already-extracted string fields. Record-level
// problems are returned as a message; fatal ones throw.
struct RawRecord {
  std::optional<std::string> incident_id;
  std::optional<std::string> source;
  std::string note_a, note_b;
  std::optional<int> age;
  std::string sex, race;
  bool bad_age = false;
  std::vector<std::pair<std::string, std::string>> labels;  // raw tokens
};

inline std::optional<std::string> finish_record(const RawRecord& raw, std::size_t line,
                                                Incident& out) {
  if (!raw.incident_id || raw.incident_id->empty())
    throw DataError("line " + std::to_string(line) + ": missing incident_id");
  if (!raw.source || raw.source->empty())
    throw DataError("line " + std::to_string(line) + ": incident '" + *raw.incident_id +
                    "' is missing source");
  out = Incident{};
  out.incident_id = *raw.incident_id;
  out.source = *raw.source;
  out.note_a = raw.note_a;
  out.note_b = raw.note_b;
  if (out.note_a.empty() && out.note_b.empty()) return "both notes are empty";
  if (raw.bad_age) return "age must be a non-negative integer or null";
  out.demographics.age_years = raw.age;
  auto sex = parse_sex(raw.sex);
  if (!sex) return "unknown sex token '" + raw.sex + "'";
  out.demographics.sex = *sex;
  auto race = parse_race(raw.race);
  if (!race) return "unknown race token '" + raw.race + "'";
  out.demographics.race = *race;
  for (const auto& [var, tok] : raw.labels) {
    auto l = parse_label_token(tok);
    if (!l) return "label '" + var + "' has invalid value '" + tok + "'";
    out.labels[var] = *l;
  }
  return std::nullopt;
}

inline void add_or_throw(Corpus& corpus, Incident inc, std::size_t line) {
  try {
    corpus.add(std::move(inc));
  } catch (const DataError& e) {
    throw DataError("line " + std::to_string(line) + ": " + e.what());
  }
}

inline std::string json_scalar_token(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
  if (v.is_null()) return "unknown";
  return v.dump();
}

// RFC 4180 reader. Returns false at end of input; `line` is the starting line
// of the record.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields,
                            std::size_t& line_counter, std::size_t& record_line) {
  fields.clear();
  record_line = line_counter + 1;
  std::string field;
  bool in_quotes = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_counter;
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      ++line_counter;
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (in_quotes) throw DataError("line " + std::to_string(record_line) + ": unterminated quote");
  if (!any) return false;
  ++line_counter;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace detail

inline IngestResult ingest_jsonl(std::istream& in) {
  IngestResult result;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      result.rejected.push_back({line, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!j.is_object()) {
      result.rejected.push_back({line, "record is not a JSON object"});
      continue;
    }
    detail::RawRecord raw;
    if (j.contains("incident_id") && !j["incident_id"].is_null())
      raw.incident_id = detail::json_scalar_token(j["incident_id"]);
    if (j.contains("source") && !j["source"].is_null())
      raw.source = detail::json_scalar_token(j["source"]);
    if (j.contains("note_a") && j["note_a"].is_string()) raw.note_a = j["note_a"];
    if (j.contains("note_b") && j["note_b"].is_string()) raw.note_b = j["note_b"];
    if (j.contains("age") && !j["age"].is_null()) {
      if (j["age"].is_number_integer() && j["age"].get<long long>() >= 0)
        raw.age = j["age"].get<int>();
      else
        raw.bad_age = true;
    }
    if (j.contains("sex") && j["sex"].is_string()) raw.sex = j["sex"];
    if (j.contains("race") && j["race"].is_string()) raw.race = j["race"];
    if (j.contains("labels")) {
      if (!j["labels"].is_object()) {
        result.rejected.push_back({line, "labels must be an object"});
        continue;
      }
      for (const auto& [k, v] : j["labels"].items())
        raw.labels.emplace_back(k, detail::json_scalar_token(v));
    }
    Incident inc;
    if (auto err = detail::finish_record(raw, line, inc)) {
      result.rejected.push_back({line, *err});
      continue;
    }
    detail::add_or_throw(result.corpus, std::move(inc), line);
  }
  return result;
}

/// CSV columns are mapped by header name. Columns other than the known
/// incident fields are label variables; an empty label cell means missing.
inline IngestResult ingest_csv(std::istream& in) {
  IngestResult result;
  std::vector<std::string> header, fields;
  std::size_t line_counter = 0, record_line = 0;
  if (!detail::read_csv_record(in, header, line_counter, record_line))
    throw DataError("empty CSV file");
  static const std::set<std::string> known = {"incident_id", "source", "note_a", "note_b",
                                              "age", "sex", "race"};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  if (!col.count("incident_id") || !col.count("source"))
    throw DataError("CSV header must name incident_id and source columns");
  while (detail::read_csv_record(in, fields, line_counter, record_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      result.rejected.push_back({record_line, "expected " + std::to_string(header.size()) +
                                                  " fields, found " +
                                                  std::to_string(fields.size())});
      continue;
    }
    detail::RawRecord raw;
    auto get = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      return it == col.end() ? std::string{} : fields[it->second];
    };
    raw.incident_id = get("incident_id");
    raw.source = get("source");
    raw.note_a = get("note_a");
    raw.note_b = get("note_b");
    raw.sex = get("sex");
    raw.race = get("race");
    if (auto age = get("age"); !age.empty()) {
      try {
        std::size_t used = 0;
        int a = std::stoi(age, &used);
        if (used != age.size() || a < 0)
          raw.bad_age = true;
        else
          raw.age = a;
      } catch (const std::exception&) {
        raw.bad_age = true;
      }
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (known.count(header[i]) || fields[i].empty()) continue;
      raw.labels.emplace_back(header[i], fields[i]);
    }
    Incident inc;
    if (auto err = detail::finish_record(raw, record_line, inc)) {
      result.rejected.push_back({record_line, *err});
      continue;
    }
    detail::add_or_throw(result.corpus, std::move(inc), record_line);
  }
  return result;
}

inline IngestResult ingest(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return format == CorpusFormat::csv ? ingest_csv(in) : ingest_jsonl(in);
}

inline CorpusFormat format_from_string(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "csv") return CorpusFormat::csv;
  throw UsageError("unknown corpus format '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Source statistics and exclusion

struct SourceCounts {
  std::string source;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t unknown = 0;
};

inline std::vector<SourceCounts> source_counts(const Corpus& corpus, const std::string& variable) {
  std::map<std::string, SourceCounts> by;
  for (const auto& inc : corpus.incidents()) {
    auto& c = by[inc.source];
    c.source = inc.source;
    auto l = inc.label(variable);
    if (!l)
      ++c.unknown;
    else if (*l == 1)
      ++c.positives;
    else
      ++c.negatives;
  }
  std::vector<SourceCounts> out;
  for (auto& [_, c] : by) out.push_back(c);
  return out;
}

struct ExclusionEntry {
  std::string source;
  std::string variable;
  std::size_t positives = 0;
  bool excluded = false;
};

inline json to_json(const std::vector<ExclusionEntry>& log) {
  json arr = json::array();
  for (const auto& e : log)
    arr.push_back({{"source", e.source},
                   {"variable", e.variable},
                   {"positives", e.positives},
                   {"excluded", e.excluded}});
  return arr;
}

inline std::vector<ExclusionEntry> sparse_source_log(const Corpus& corpus,
                                                     const std::string& variable,
                                                     std::size_t min_positives = 10) {
  if (!corpus.has_variable(variable))
    throw DataError("variable '" + variable + "' does not occur in any label map");
  std::vector<ExclusionEntry> log;
  for (const auto& c : source_counts(corpus, variable))
    log.push_back({c.source, variable, c.positives, c.positives < min_positives});
  return log;
}

struct ExclusionResult {
  Corpus corpus;
  std::vector<ExclusionEntry> log;

  std::set<std::string> retained() const {
    std::set<std::string> s;
    for (const auto& e : log)
      if (!e.excluded) s.insert(e.source);
    return s;
  }
};

/// Drops sources with fewer than `min_positives` positive labels for `variable`.
inline ExclusionResult exclude_sparse_sources(const Corpus& corpus, const std::string& variable,
                                              std::size_t min_positives = 10) {
  ExclusionResult result;
  result.log = sparse_source_log(corpus, variable, min_positives);
  const auto keep = result.retained();
  for (const auto& inc : corpus.incidents())
    if (keep.count(inc.source)) result.corpus.add(inc);
  return result;
}

// ---------------------------------------------------------------------------
// Balancing

struct BalanceOptions {
  bool allow_unbalanced = false;
  /// Restricts balancing to these sources when non-empty.
  std::set<std::string> sources;
};

struct BalanceResult {
  ExampleList view;  // ascending row order
  std::vector<std::string> unbalanced_sources;
};

/// Per source: keeps every positive and down-samples negatives without
/// replacement to the positive count. Each source draws from its own stream so
/// the selection does not depend on which other sources are present.
inline BalanceResult balance(const Corpus& corpus, const std::string& variable,
                             std::uint64_t seed, const BalanceOptions& options = {}) {
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& inc = corpus[r];
    if (!options.sources.empty() && !options.sources.count(inc.source)) continue;
    auto l = inc.label(variable);
    if (!l) continue;
    auto& [pos, neg] = by[inc.source];
    (*l == 1 ? pos : neg).push_back(r);
  }
  BalanceResult result;
  for (const auto& [source, groups] : by) {
    const auto& [pos, neg] = groups;
    if (pos.size() > neg.size()) {
      if (!options.allow_unbalanced)
        throw DataError("source '" + source + "' has more positives (" +
                        std::to_string(pos.size()) + ") than negatives (" +
                        std::to_string(neg.size()) + ") for '" + variable +
                        "'; pass --allow-unbalanced to keep it unbalanced");
      result.unbalanced_sources.push_back(source);
      for (auto r : pos) result.view.push_back({r, 1});
      for (auto r : neg) result.view.push_back({r, 0});
      continue;
    }
    Rng rng(derive_seed(seed, fnv1a64(source)));
    for (auto r : pos) result.view.push_back({r, 1});
    for (auto i : sample_positions(neg.size(), pos.size(), rng))
      result.view.push_back({neg[i], 0});
  }
  std::sort(result.view.begin(), result.view.end(),
            [](const Example& a, const Example& b) { return a.row < b.row; });
  return result;
}

inline ExampleList filter_source(const Corpus& corpus, const ExampleList& view,
                                 const std::string& source, bool keep_matching) {
  ExampleList out;
  for (const auto& e : view)
    if ((corpus[e.row].source == source) == keep_matching) out.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitPlan {
  ExampleList train;
  ExampleList validation;
  ExampleList test;
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t train = 0, validation = 0, test = 0;
};

/// |train| = floor(0.8 N); the rest is halved with validation taking the odd one.
inline SplitSizes split_sizes(std::size_t n) {
  SplitSizes s;
  s.train = n * 8 / 10;
  const std::size_t rest = n - s.train;
  s.test = rest / 2;
  s.validation = rest - s.test;
  return s;
}

/// Stratified 8:1:1 split: positives and negatives are shuffled and dealt
/// independently so every part keeps the class ratio, while the overall part
/// sizes follow split_sizes().
inline SplitPlan split_8_1_1(const ExampleList& view, std::uint64_t seed) {
  if (view.size() < 10)
    throw DataError("cannot split a view of " + std::to_string(view.size()) +
                    " instances 8:1:1 (need at least 10)");
  ExampleList pos, neg;
  for (const auto& e : view) (e.label == 1 ? pos : neg).push_back(e);
  Rng rng(derive_seed(seed, 0x5b11u));
  shuffle(pos, rng);
  shuffle(neg, rng);

  const auto total = split_sizes(view.size());
  const std::size_t np = pos.size(), nn = neg.size();
  std::size_t tr_p = std::min(np * 8 / 10, total.train);
  std::size_t tr_n = total.train - tr_p;
  if (tr_n > nn) {
    tr_n = nn;
    tr_p = total.train - nn;
  }
  const std::size_t rp = np - tr_p, rn = nn - tr_n;
  std::size_t va_p = (rp + 1) / 2;
  va_p = std::min(va_p, total.validation);
  if (total.validation - va_p > rn) va_p = total.validation - rn;
  const std::size_t va_n = total.validation - va_p;

  SplitPlan plan;
  plan.seed = seed;
  plan.train.assign(pos.begin(), pos.begin() + tr_p);
  plan.train.insert(plan.train.end(), neg.begin(), neg.begin() + tr_n);
  plan.validation.assign(pos.begin() + tr_p, pos.begin() + tr_p + va_p);
  plan.validation.insert(plan.validation.end(), neg.begin() + tr_n, neg.begin() + tr_n + va_n);
  plan.test.assign(pos.begin() + tr_p + va_p, pos.end());
  plan.test.insert(plan.test.end(), neg.begin() + tr_n + va_n, neg.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Exclusive subsets

/// m pairwise-disjoint uniform samples of size x from `pool`.
inline std::vector<ExampleList> sample_exclusive_subsets(const ExampleList& pool, std::size_t x,
                                                         std::size_t m, std::uint64_t seed) {
  if (pool.size() < m * x)
    throw DataError("other-source pool has " + std::to_string(pool.size()) + " instances but " +
                    std::to_string(m) + " exclusive subsets of " + std::to_string(x) +
                    " need " + std::to_string(m * x) + " (short by " +
                    std::to_string(m * x - pool.size()) + ")");
  ExampleList shuffled = pool;
  Rng rng(derive_seed(seed, 0xe5c1u));
  shuffle(shuffled, rng);
  std::vector<ExampleList> subsets(m);
  for (std::size_t j = 0; j < m; ++j)
    subsets[j].assign(shuffled.begin() + j * x, shuffled.begin() + (j + 1) * x);
  return subsets;
}

struct CorpusPartition {
  std::string target_source;
  ExampleList target_set;
  ExampleList other_pool;
  std::vector<ExampleList> exclusive_subsets;
};

inline CorpusPartition make_partition(std::string target_source, ExampleList target_set,
                                      ExampleList other_pool, std::size_t m, std::uint64_t seed) {
  CorpusPartition p;
  p.target_source = std::move(target_source);
  p.exclusive_subsets = sample_exclusive_subsets(other_pool, target_set.size(), m, seed);
  p.target_set = std::move(target_set);
  p.other_pool = std::move(other_pool);
  return p;
}

// ---------------------------------------------------------------------------
// Pipeline preparation shared by the audit steps

struct PrepareOptions {
  std::size_t min_positives = 10;
  bool allow_unbalanced = false;
  std::uint64_t data_seed = 0;
};

struct PreparedData {
  std::vector<ExclusionEntry> exclusion_log;
  ExampleList target_view;
  ExampleList others_view;
  std::vector<std::string> unbalanced_sources;
};

/// Sparse-source exclusion followed by per-source balancing, separated into
/// the target source and the pooled other sources. Rows index `corpus`.
inline PreparedData prepare(const Corpus& corpus, const std::string& variable,
                            const std::string& target_source, const PrepareOptions& options) {
  PreparedData out;
  out.exclusion_log = sparse_source_log(corpus, variable, options.min_positives);
  BalanceOptions bo;
  bo.allow_unbalanced = options.allow_unbalanced;
  bool target_kept = false;
  for (const auto& e : out.exclusion_log) {
    if (e.excluded) continue;
    bo.sources.insert(e.source);
    target_kept |= e.source == target_source;
  }
  if (!target_kept)
    throw DataError("target source '" + target_source + "' is absent or has fewer than " +
                    std::to_string(options.min_positives) + " positives for '" + variable + "'");
  auto balanced = balance(corpus, variable, options.data_seed, bo);
  out.unbalanced_sources = std::move(balanced.unbalanced_sources);
  out.target_view = filter_source(corpus, balanced.view, target_source, true);
  out.others_view = filter_source(corpus, balanced.view, target_source, false);
  return out;
}

}  // namespace labelaudit
