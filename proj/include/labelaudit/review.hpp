#pragma once

// Adjudication sessions over flagged instances. Each session is an
// append-only JSONL event log (<id>.jsonl); the current state is a fold over
// that log and is mirrored to <id>.snapshot.json after every write.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/adjudication.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/digest.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/metrics.hpp"

namespace labelaudit {

struct NotFoundError : DataError {
  using DataError::DataError;
};

struct VersionConflict : std::runtime_error {
  int latest_version;
  VersionConflict(const std::string& what, int latest)
      : std::runtime_error(what), latest_version(latest) {}
};

/// Raised when an operation needs a complete (or two-annotator) session.
struct PreconditionError : DataError {
  std::vector<std::string> pending;
  PreconditionError(const std::string& what, std::vector<std::string> p = {})
      : DataError(what), pending(std::move(p)) {}
};

using Clock = std::function<std::string()>;

inline std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct ReviewItem {
  std::string incident_id;
  std::string note_a;
  std::string note_b;
  int current_label = 0;
  int error_count = 0;
  std::optional<double> model_probability;  // advisory, last discovery repetition
};

enum class Resolution { consensus_only, annotator_a_priority };

inline std::string_view to_string(Resolution r) {
  return r == Resolution::consensus_only ? "consensus_only" : "annotator_a_priority";
}

inline Resolution resolution_from_string(std::string_view s) {
  if (s == "consensus_only") return Resolution::consensus_only;
  if (s == "annotator_a_priority") return Resolution::annotator_a_priority;
  throw UsageError("unknown resolution '" + std::string(s) +
                   "' (expected consensus_only or annotator_a_priority)");
}

struct ExportRecord {
  int version = 0;
  Resolution resolution = Resolution::consensus_only;
  std::string file;
  std::string sha256;
};

struct ReviewSession {
  std::string session_id;
  std::string variable;
  std::string target_source;
  std::string created_at;
  std::vector<ReviewItem> items;
  std::vector<std::string> annotators;
  /// Latest verdict per (incident id, annotator).
  std::map<std::pair<std::string, std::string>, Adjudication> latest;
  std::vector<ExportRecord> exports;
  std::size_t events = 0;

  const ReviewItem* find_item(const std::string& id) const {
    for (const auto& it : items)
      if (it.incident_id == id) return &it;
    return nullptr;
  }
  bool has_annotator(const std::string& a) const {
    return std::find(annotators.begin(), annotators.end(), a) != annotators.end();
  }
  Verdict status(const std::string& id, const std::string& annotator) const {
    auto it = latest.find({id, annotator});
    return it == latest.end() ? Verdict::pending : it->second.verdict;
  }
  int latest_version(const std::string& id, const std::string& annotator) const {
    auto it = latest.find({id, annotator});
    return it == latest.end() ? 0 : it->second.version;
  }
  /// "id (annotator)" for every pending (item, annotator) pair.
  std::vector<std::string> pending() const {
    std::vector<std::string> out;
    for (const auto& it : items)
      for (const auto& a : annotators)
        if (status(it.incident_id, a) == Verdict::pending) out.push_back(it.incident_id + " (" + a + ")");
    return out;
  }
  bool complete() const { return pending().empty(); }
};

inline json to_json(const ReviewItem& it) {
  json j = {{"incident_id", it.incident_id}, {"note_a", it.note_a},     {"note_b", it.note_b},
            {"current_label", it.current_label}, {"error_count", it.error_count}};
  j["model_probability"] = it.model_probability ? json(*it.model_probability) : json(nullptr);
  return j;
}

inline ReviewItem review_item_from_json(const json& j) {
  ReviewItem it;
  it.incident_id = j.at("incident_id");
  it.note_a = j.value("note_a", std::string{});
  it.note_b = j.value("note_b", std::string{});
  it.current_label = j.value("current_label", 0);
  it.error_count = j.value("error_count", 0);
  if (j.contains("model_probability") && !j["model_probability"].is_null())
    it.model_probability = j["model_probability"].get<double>();
  return it;
}

inline json to_json(const ExportRecord& e) {
  return {{"version", e.version}, {"resolution", to_string(e.resolution)}, {"file", e.file},
          {"sha256", e.sha256}};
}

/// Full session state, with per-item statuses for every annotator.
inline json to_json(const ReviewSession& s) {
  json items = json::array();
  for (const auto& it : s.items) {
    json j = to_json(it);
    json st = json::object();
    for (const auto& a : s.annotators)
      st[a] = {{"verdict", to_string(s.status(it.incident_id, a))},
               {"version", s.latest_version(it.incident_id, a)}};
    j["status"] = st;
    items.push_back(std::move(j));
  }
  json exports = json::array();
  for (const auto& e : s.exports) exports.push_back(to_json(e));
  const auto pending = s.pending();
  return {{"session_id", s.session_id},
          {"variable", s.variable},
          {"target_source", s.target_source},
          {"created_at", s.created_at},
          {"annotators", s.annotators},
          {"items", items},
          {"progress",
           {{"total", s.items.size() * s.annotators.size()},
            {"pending", pending.size()},
            {"complete", pending.empty()}}},
          {"exports", exports}};
}

/// Pure fold step over one log event.
inline void apply_event(ReviewSession& s, const json& ev) {
  const std::string type = ev.at("type");
  if (type == "created") {
    s = ReviewSession{};
    s.session_id = ev.at("session_id");
    s.variable = ev.value("variable", std::string{});
    s.target_source = ev.value("target_source", std::string{});
    s.created_at = ev.value("timestamp", std::string{});
    s.annotators = ev.at("annotators").get<std::vector<std::string>>();
    for (const auto& it : ev.at("items")) s.items.push_back(review_item_from_json(it));
  } else if (type == "adjudication") {
    auto a = adjudication_from_json(ev.at("adjudication"));
    s.latest[{a.incident_id, a.annotator_id}] = std::move(a);
  } else if (type == "export") {
    s.exports.push_back({ev.at("version"), resolution_from_string(ev.at("resolution").get<std::string>()),
                         ev.at("file"), ev.at("sha256")});
  } else {
    throw DataError("unknown review event type '" + type + "'");
  }
  ++s.events;
}

inline ReviewSession replay(const std::vector<json>& events) {
  ReviewSession s;
  for (const auto& ev : events) apply_event(s, ev);
  return s;
}

inline ReviewSession replay_file(const std::filesystem::path& log) {
  std::ifstream in(log, std::ios::binary);
  if (!in) throw NotFoundError("no session log " + log.string());
  std::vector<json> events;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(log.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return replay(events);
}

struct IaaResult {
  double kappa = 0;
  std::size_t items = 0;             // items with keep/flip from both annotators
  std::size_t excluded_uncertain = 0;
};

inline json to_json(const IaaResult& r) {
  return {{"kappa", r.kappa}, {"items", r.items}, {"excluded_uncertain", r.excluded_uncertain}};
}

/// Cohen's kappa over keep/flip verdicts of a complete two-annotator session.
inline IaaResult compute_iaa(const ReviewSession& s) {
  if (s.annotators.size() != 2)
    throw PreconditionError("agreement needs a two-annotator session; '" + s.session_id + "' has " +
                            std::to_string(s.annotators.size()));
  if (auto p = s.pending(); !p.empty())
    throw PreconditionError("session '" + s.session_id + "' is incomplete: " +
                                std::to_string(p.size()) + " pending verdicts",
                            std::move(p));
  std::vector<int> a, b;
  IaaResult r;
  for (const auto& it : s.items) {
    const auto va = s.status(it.incident_id, s.annotators[0]);
    const auto vb = s.status(it.incident_id, s.annotators[1]);
    if (va == Verdict::uncertain || vb == Verdict::uncertain) {
      ++r.excluded_uncertain;
      continue;
    }
    a.push_back(va == Verdict::flip);
    b.push_back(vb == Verdict::flip);
  }
  if (a.empty()) throw PreconditionError("every item has an uncertain verdict; agreement undefined");
  r.items = a.size();
  try {
    r.kappa = cohen_kappa(a, b);
  } catch (const std::invalid_argument& e) {
    throw PreconditionError(e.what());
  }
  return r;
}

struct CorrectionExport {
  std::string session_id;
  Resolution resolution = Resolution::consensus_only;
  std::vector<Adjudication> corrections;  // flips only, item order
  std::vector<std::string> disagreements;  // keep vs flip
  std::vector<std::string> uncertain;
};

inline json to_json(const CorrectionExport& e) {
  json c = json::array();
  for (const auto& a : e.corrections) c.push_back(to_json(a));
  return {{"session_id", e.session_id},
          {"resolution", to_string(e.resolution)},
          {"corrections", c},
          {"disagreements", e.disagreements},
          {"uncertain", e.uncertain}};
}

inline CorrectionExport correction_export_from_json(const json& j) {
  CorrectionExport e;
  e.session_id = j.at("session_id");
  e.resolution = resolution_from_string(j.at("resolution").get<std::string>());
  for (const auto& a : j.at("corrections")) e.corrections.push_back(adjudication_from_json(a));
  e.disagreements = j.value("disagreements", std::vector<std::string>{});
  e.uncertain = j.value("uncertain", std::vector<std::string>{});
  return e;
}

/// Resolves a complete session into flip corrections. consensus_only keeps
/// flips both annotators agree on; annotator_a_priority takes the first
/// annotator's verdict and falls back to the second one when it is uncertain.
inline CorrectionExport resolve_corrections(const ReviewSession& s, Resolution resolution) {
  if (auto p = s.pending(); !p.empty())
    throw PreconditionError("session '" + s.session_id + "' is incomplete: " +
                                std::to_string(p.size()) + " pending verdicts",
                            std::move(p));
  CorrectionExport out;
  out.session_id = s.session_id;
  out.resolution = resolution;
  for (const auto& it : s.items) {
    std::vector<const Adjudication*> vs;
    for (const auto& a : s.annotators) vs.push_back(&s.latest.at({it.incident_id, a}));
    const bool any_uncertain = std::any_of(vs.begin(), vs.end(), [](const Adjudication* a) {
      return a->verdict == Verdict::uncertain;
    });
    bool disagree = false;
    for (std::size_t i = 1; i < vs.size(); ++i)
      if (vs[i]->verdict != Verdict::uncertain && vs[0]->verdict != Verdict::uncertain &&
          vs[i]->verdict != vs[0]->verdict)
        disagree = true;
    if (disagree) out.disagreements.push_back(it.incident_id);
    if (any_uncertain) out.uncertain.push_back(it.incident_id);

    const Adjudication* decided = nullptr;
    if (resolution == Resolution::consensus_only) {
      if (!any_uncertain && !disagree) decided = vs[0];
    } else {
      for (const auto* a : vs)
        if (a->verdict != Verdict::uncertain) {
          decided = a;
          break;
        }
    }
    if (decided && decided->verdict == Verdict::flip) {
      Adjudication c = *decided;
      if (resolution == Resolution::consensus_only && vs.size() > 1) c.annotator_id = "consensus";
      out.corrections.push_back(std::move(c));
    }
  }
  return out;
}

struct CreateSessionRequest {
  std::string session_id;  // empty: assigned
  std::vector<std::string> annotators;
};

/// Directory-backed session store. Writers serialize on one mutex; readers
/// take the current immutable snapshot.
class ReviewStore {
 public:
  explicit ReviewStore(std::filesystem::path dir, Clock clock = utc_now_iso)
      : dir_(std::move(dir)), clock_(std::move(clock)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() != ".jsonl") continue;
      auto s = replay_file(entry.path());
      const std::string sid = s.session_id;
      sessions_[sid] = std::make_shared<const ReviewSession>(std::move(s));
    }
  }

  const std::filesystem::path& directory() const { return dir_; }

  ReviewSession create_session(const ErrorCountLedger& ledger, const Corpus& corpus,
                               const CreateSessionRequest& request) {
    if (ledger.flags.empty()) throw DataError("ledger has no flags; nothing to review");
    if (request.annotators.empty() || request.annotators.size() > 2)
      throw UsageError("a session takes one or two annotator ids");
    for (const auto& a : request.annotators)
      if (a.empty()) throw UsageError("annotator ids must be non-empty");
    if (request.annotators.size() == 2 && request.annotators[0] == request.annotators[1])
      throw UsageError("duplicate annotator id '" + request.annotators[0] + "'");

    std::vector<ReviewItem> items;
    for (const auto& id : ledger.flags) {
      ReviewItem it;
      it.incident_id = id;
      const auto row = corpus.find(id);
      if (!row) throw DataError("flagged id '" + id + "' is not in the corpus");
      const Incident* inc = &corpus[*row];
      it.note_a = inc->note_a;
      it.note_b = inc->note_b;
      auto lab = ledger.labels.find(id);
      it.current_label = lab != ledger.labels.end() ? lab->second : inc->label(ledger.variable).value_or(0);
      auto c = ledger.counts.find(id);
      it.error_count = c == ledger.counts.end() ? 0 : c->second;
      auto p = ledger.last_probability.find(id);
      if (p != ledger.last_probability.end()) it.model_probability = p->second;
      items.push_back(std::move(it));
    }
    std::stable_sort(items.begin(), items.end(), [](const ReviewItem& a, const ReviewItem& b) {
      return a.error_count != b.error_count ? a.error_count > b.error_count
                                            : a.incident_id < b.incident_id;
    });

    std::lock_guard lock(write_mu_);
    std::string sid = request.session_id;
    if (sid.empty()) {
      for (std::size_t n = sessions_.size() + 1;; ++n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "session-%04zu", n);
        if (!sessions_.count(buf)) {
          sid = buf;
          break;
        }
      }
    }
    validate_id(sid);
    if (sessions_.count(sid)) throw UsageError("session '" + sid + "' already exists");
    json items_json = json::array();
    for (const auto& it : items) items_json.push_back(to_json(it));
    const json ev = {{"type", "created"},
                     {"session_id", sid},
                     {"variable", ledger.variable},
                     {"target_source", ledger.target_source},
                     {"annotators", request.annotators},
                     {"items", items_json},
                     {"timestamp", clock_()}};
    ReviewSession s;
    apply_event(s, ev);
    commit(s, ev);
    return s;
  }

  std::shared_ptr<const ReviewSession> get(const std::string& sid) const {
    std::lock_guard lock(read_mu_);
    auto it = sessions_.find(sid);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + sid + "'");
    return it->second;
  }

  std::vector<std::string> session_ids() const {
    std::lock_guard lock(read_mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
  }

  /// Stores a verdict whose version must be latest + 1 for its
  /// (item, annotator); returns the stored record.
  Adjudication submit(const std::string& sid, Adjudication a) {
    std::lock_guard lock(write_mu_);
    auto current = get(sid);
    if (!current->find_item(a.incident_id))
      throw NotFoundError("incident '" + a.incident_id + "' is not in session '" + sid + "'");
    if (!current->has_annotator(a.annotator_id))
      throw NotFoundError("annotator '" + a.annotator_id + "' is not in session '" + sid + "'");
    if (a.verdict == Verdict::pending) throw UsageError("verdict must be keep, flip or uncertain");
    const int latest = current->latest_version(a.incident_id, a.annotator_id);
    if (a.version != latest + 1)
      throw VersionConflict("version " + std::to_string(a.version) + " is stale; latest is " +
                                std::to_string(latest),
                            latest);
    a.session_id = sid;
    a.timestamp = clock_();
    const json ev = {{"type", "adjudication"}, {"adjudication", to_json(a)}};
    ReviewSession next = *current;
    apply_event(next, ev);
    commit(next, ev);
    return a;
  }

  IaaResult iaa(const std::string& sid) const { return compute_iaa(*get(sid)); }

  struct ExportResult {
    ExportRecord record;
    CorrectionExport content;
    bool reused = false;
  };

  /// Writes <id>.export-v<N>.json. Export files never change; re-exporting
  /// an unchanged session returns the existing file.
  ExportResult export_corrected(const std::string& sid, Resolution resolution) {
    std::lock_guard lock(write_mu_);
    auto current = get(sid);
    ExportResult out;
    out.content = resolve_corrections(*current, resolution);
    const std::string body = to_json(out.content).dump(2) + "\n";
    const std::string digest = sha256_hex(body);
    for (const auto& e : current->exports)
      if (e.resolution == resolution && e.sha256 == digest) {
        out.record = e;
        out.reused = true;
        return out;
      }
    out.record.version = static_cast<int>(current->exports.size()) + 1;
    out.record.resolution = resolution;
    out.record.file = sid + ".export-v" + std::to_string(out.record.version) + ".json";
    out.record.sha256 = digest;
    {
      std::ofstream f(dir_ / out.record.file, std::ios::binary);
      f << body;
      if (!f) throw DataError("cannot write " + (dir_ / out.record.file).string());
    }
    json ev = to_json(out.record);
    ev["type"] = "export";
    ev["timestamp"] = clock_();
    ReviewSession next = *current;
    apply_event(next, ev);
    commit(next, ev);
    return out;
  }

  std::filesystem::path log_path(const std::string& sid) const { return dir_ / (sid + ".jsonl"); }

 private:
  static void validate_id(const std::string& sid) {
    if (sid.empty() || sid.size() > 64 ||
        !std::all_of(sid.begin(), sid.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
        }))
      throw UsageError("session id '" + sid + "' must be 1-64 characters of [A-Za-z0-9_-]");
  }

  // Caller holds write_mu_.
  void commit(const ReviewSession& next, const json& ev) {
    {
      std::ofstream log(log_path(next.session_id), std::ios::binary | std::ios::app);
      log << ev.dump() << '\n';
      log.flush();
      if (!log) throw DataError("cannot append to " + log_path(next.session_id).string());
    }
    {
      std::ofstream snap(dir_ / (next.session_id + ".snapshot.json"), std::ios::binary);
      snap << to_json(next).dump(2) << '\n';
    }
    auto ptr = std::make_shared<const ReviewSession>(next);
    std::lock_guard lock(read_mu_);
    sessions_[next.session_id] = std::move(ptr);
  }

  std::filesystem::path dir_;
  Clock clock_;
  std::mutex write_mu_;
  mutable std::mutex read_mu_;
  std::map<std::string, std::shared_ptr<const ReviewSession>> sessions_;
};

/// Item listing for one annotator: own verdict and version, peer progress
/// only, and the peer verdict once both are done. Without an annotator the
/// full status map is returned.
inline json list_items(const ReviewSession& s, const std::optional<std::string>& annotator,
                       const std::optional<Verdict>& status) {
  if (annotator && !s.has_annotator(*annotator))
    throw NotFoundError("annotator '" + *annotator + "' is not in session '" + s.session_id + "'");
  json out = json::array();
  for (const auto& it : s.items) {
    json j = to_json(it);
    if (annotator) {
      const auto mine = s.status(it.incident_id, *annotator);
      if (status && mine != *status) continue;
      j["verdict"] = to_string(mine);
      j["version"] = s.latest_version(it.incident_id, *annotator);
      for (const auto& peer : s.annotators) {
        if (peer == *annotator) continue;
        const auto theirs = s.status(it.incident_id, peer);
        j["peer_status"] = theirs == Verdict::pending ? "pending" : "done";
        if (mine != Verdict::pending && theirs != Verdict::pending) j["peer_verdict"] = to_string(theirs);
      }
    } else {
      bool keep_item = !status;
      json st = json::object();
      for (const auto& a : s.annotators) {
        const auto v = s.status(it.incident_id, a);
        if (status && v == *status) keep_item = true;
        st[a] = {{"verdict", to_string(v)}, {"version", s.latest_version(it.incident_id, a)}};
      }
      if (!keep_item) continue;
      j["status"] = st;
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace labelaudit
