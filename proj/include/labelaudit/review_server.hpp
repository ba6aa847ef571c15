#pragma once

// HTTP JSON API over a ReviewStore, plus the static frontend at /.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/review.hpp"

namespace labelaudit {

inline constexpr const char* kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>labelaudit review</title></head>\n"
    "<body><h1>labelaudit review</h1>\n"
    "<p>No frontend bundle is installed. Start the service with --static-dir to serve one; "
    "the JSON API lives under /api/sessions.</p></body></html>\n";

struct ServerOptions {
  std::optional<std::filesystem::path> static_dir;
};

class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, const Corpus* corpus, ServerOptions options = {})
      : store_(store), corpus_(corpus) {
    routes(options);
  }

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    if (!server_.bind_to_port(host, port)) return -1;
    return port;
  }
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
  }
  static void fail(httplib::Response& res, int status, const std::string& message, json extra = {}) {
    json body = {{"error", message}};
    if (extra.is_object())
      for (auto& [k, v] : extra.items()) body[k] = v;
    reply(res, status, body);
  }

  // Maps store errors onto HTTP statuses.
  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const VersionConflict& e) {
      fail(res, 409, e.what(), {{"latest_version", e.latest_version}});
    } catch (const NotFoundError& e) {
      fail(res, 404, e.what());
    } catch (const PreconditionError& e) {
      fail(res, 422, e.what(), {{"pending", e.pending}});
    } catch (const UsageError& e) {
      fail(res, 400, e.what());
    } catch (const json::exception& e) {
      fail(res, 400, std::string("malformed request: ") + e.what());
    } catch (const DataError& e) {
      fail(res, 422, e.what());
    }
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw UsageError("request body must be a JSON object");
    return j;
  }

  void routes(const ServerOptions& options) {
    server_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        ErrorCountLedger ledger;
        if (body.contains("ledger"))
          ledger = ledger_from_json(body.at("ledger"));
        else if (body.contains("ledger_path"))
          ledger = load_ledger(body.at("ledger_path").get<std::string>());
        else
          throw UsageError("body needs 'ledger' or 'ledger_path'");
        std::optional<Corpus> loaded;
        const Corpus* corpus = corpus_;
        if (body.contains("corpus_path")) {
          const std::filesystem::path p = body.at("corpus_path").get<std::string>();
          auto r = ingest(p, p.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl);
          loaded = std::move(r.corpus);
          corpus = &*loaded;
        }
        if (!corpus) throw UsageError("no corpus loaded; pass 'corpus_path'");
        CreateSessionRequest cr;
        cr.annotators = body.at("annotators").get<std::vector<std::string>>();
        cr.session_id = body.value("session_id", std::string{});
        reply(res, 201, to_json(store_.create_session(ledger, *corpus, cr)));
      });
    });

    server_.Get(R"(/api/sessions/([A-Za-z0-9_-]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] { reply(res, 200, to_json(*store_.get(req.matches[1]))); });
                });

    server_.Get(R"(/api/sessions/([A-Za-z0-9_-]+)/items)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    auto s = store_.get(req.matches[1]);
                    std::optional<std::string> annotator;
                    std::optional<Verdict> status;
                    if (req.has_param("annotator")) annotator = req.get_param_value("annotator");
                    if (req.has_param("status")) {
                      try {
                        status = verdict_from_string(req.get_param_value("status"));
                      } catch (const DataError& e) {
                        throw UsageError(e.what());
                      }
                    }
                    reply(res, 200, {{"session_id", s->session_id}, {"items", list_items(*s, annotator, status)}});
                  });
                });

    server_.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/adjudications)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   guarded(res, [&] {
                     const json body = parse_body(req);
                     Adjudication a;
                     a.incident_id = body.at("incident_id");
                     a.annotator_id = body.at("annotator_id");
                     try {
                       a.verdict = verdict_from_string(body.at("verdict").get<std::string>());
                     } catch (const DataError& e) {
                       throw UsageError(e.what());
                     }
                     a.note = body.value("note", std::string{});
                     a.version = body.at("version");
                     reply(res, 201, to_json(store_.submit(req.matches[1], a)));
                   });
                 });

    server_.Get(R"(/api/sessions/([A-Za-z0-9_-]+)/iaa)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] { reply(res, 200, to_json(store_.iaa(req.matches[1]))); });
                });

    server_.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/export)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   guarded(res, [&] {
                     const json body = parse_body(req);
                     const auto resolution = resolution_from_string(
                         body.value("resolution", std::string("consensus_only")));
                     auto r = store_.export_corrected(req.matches[1], resolution);
                     json out = to_json(r.content);
                     out["export"] = to_json(r.record);
                     out["reused"] = r.reused;
                     reply(res, 200, out);
                   });
                 });

    if (options.static_dir) {
      if (!server_.set_mount_point("/", options.static_dir->string()))
        throw UsageError("static directory " + options.static_dir->string() + " does not exist");
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
      });
    }
  }

  ReviewStore& store_;
  const Corpus* corpus_;
  httplib::Server server_;
};

}  // namespace labelaudit
