#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "labelaudit/error.hpp"

namespace labelaudit {

enum class Verdict { pending, keep, flip, uncertain };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::keep: return "keep";
    case Verdict::flip: return "flip";
    case Verdict::uncertain: return "uncertain";
    case Verdict::pending: break;
  }
  return "pending";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "keep") return Verdict::keep;
  if (s == "flip") return Verdict::flip;
  if (s == "uncertain") return Verdict::uncertain;
  if (s == "pending") return Verdict::pending;
  throw DataError("unknown verdict '" + std::string(s) + "'");
}

/// A human verdict on one flagged instance.
struct Adjudication {
  std::string session_id;
  std::string incident_id;
  std::string annotator_id;
  Verdict verdict = Verdict::pending;
  std::string note;
  int version = 0;
  std::string timestamp;

  std::string record_id() const {
    return session_id + "/" + incident_id + "/" + annotator_id + "/v" + std::to_string(version);
  }
};

inline nlohmann::json to_json(const Adjudication& a) {
  return {{"session_id", a.session_id}, {"incident_id", a.incident_id},
          {"annotator_id", a.annotator_id}, {"verdict", to_string(a.verdict)},
          {"note", a.note}, {"version", a.version}, {"timestamp", a.timestamp}};
}

inline Adjudication adjudication_from_json(const nlohmann::json& j) {
  Adjudication a;
  a.session_id = j.value("session_id", std::string{});
  a.incident_id = j.at("incident_id").get<std::string>();
  a.annotator_id = j.value("annotator_id", std::string{});
  a.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  a.note = j.value("note", std::string{});
  a.version = j.value("version", 0);
  a.timestamp = j.value("timestamp", std::string{});
  return a;
}

}  // namespace labelaudit
