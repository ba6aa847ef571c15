#pragma once

// Command-line surface. Every command reads one JSON config (flags override
// its fields), writes its outputs under --out-dir and leaves a
// manifest_<command>.json describing the run.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "labelaudit/bias.hpp"
#include "labelaudit/context.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/digest.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/inconsistency.hpp"
#include "labelaudit/parallel.hpp"
#include "labelaudit/review.hpp"
#include "labelaudit/review_server.hpp"
#include "labelaudit/synth.hpp"
#include "labelaudit/verification.hpp"

#ifndef LABELAUDIT_VERSION
#define LABELAUDIT_VERSION "0.1.0"
#endif

namespace labelaudit::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2 };

inline constexpr const char* kVersion = LABELAUDIT_VERSION;

struct Run {
  std::string command;
  json config = json::object();
  fs::path out_dir = ".";
  std::size_t jobs = 1;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to out_dir -> sha256
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;

  void add_input(const fs::path& p) { inputs[p.string()] = sha256_file(p); }

  void write(const std::string& rel, const std::string& content) {
    const fs::path p = out_dir / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw DataError("cannot write " + p.string());
    outputs[rel] = sha256_hex(content);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }
};

// ---------------------------------------------------------------------------
// Config access

inline const json& section(const json& config, const char* name) {
  static const json empty = json::object();
  auto it = config.find(name);
  if (it == config.end()) return empty;
  if (!it->is_object()) throw UsageError(std::string("config field '") + name + "' must be an object");
  return *it;
}

inline std::string required_string(const json& config, const char* key) {
  auto it = config.find(key);
  if (it == config.end() || !it->is_string() || it->get<std::string>().empty())
    throw UsageError(std::string("config needs '") + key + "' (or the matching flag)");
  return it->get<std::string>();
}

inline std::optional<std::string> optional_string(const json& config, const char* key) {
  auto it = config.find(key);
  if (it == config.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline Corpus load_corpus(Run& run) {
  const fs::path path = required_string(run.config, "corpus");
  if (!fs::exists(path)) throw DataError("corpus file " + path.string() + " does not exist");
  const auto format = run.config.contains("format")
                          ? format_from_string(run.config["format"].get<std::string>())
                          : (path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl);
  auto r = ingest(path, format);
  run.add_input(path);
  if (!r.rejected.empty()) {
    std::ostringstream msg;
    msg << path.string() << ": " << r.rejected.size() << " rejected record(s); run ingest to inspect";
    for (std::size_t i = 0; i < r.rejected.size() && i < 10; ++i)
      msg << "\n  line " << r.rejected[i].line << ": " << r.rejected[i].message;
    throw DataError(msg.str());
  }
  return std::move(r.corpus);
}

inline PrepareOptions prepare_options(const json& config) {
  const auto& d = section(config, "data");
  PrepareOptions o;
  o.min_positives = d.value("min_positives", o.min_positives);
  o.allow_unbalanced = d.value("allow_unbalanced", o.allow_unbalanced);
  o.data_seed = d.value("seed", o.data_seed);
  return o;
}

inline EncoderConfig encoder_config(const json& config) {
  return encoder_config_from_json(section(config, "encoder"));
}

inline TrainConfig train_config(const json& config) {
  return train_config_from_json(section(config, "train"));
}

inline AuditContext audit_context(const Corpus& corpus, const json& config, const std::string& target) {
  return make_context(corpus, required_string(config, "variable"), target, prepare_options(config),
                      encoder_config(config));
}

inline std::vector<std::uint64_t> seeds_or(const json& sec, std::vector<std::uint64_t> fallback) {
  return sec.contains("seeds") ? sec.at("seeds").get<std::vector<std::uint64_t>>() : fallback;
}

inline ErrorCountLedger load_ledger_input(Run& run) {
  const fs::path p = required_string(run.config, "ledger");
  auto l = load_ledger(p);
  run.add_input(p);
  return l;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_ingest(Run& run) {
  const fs::path path = required_string(run.config, "corpus");
  if (!fs::exists(path)) throw DataError("corpus file " + path.string() + " does not exist");
  const auto format = run.config.contains("format")
                          ? format_from_string(run.config["format"].get<std::string>())
                          : (path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl);
  auto r = ingest(path, format);
  run.add_input(path);
  std::ostringstream corpus_out;
  write_jsonl(r.corpus, corpus_out);
  run.write("corpus.jsonl", corpus_out.str());
  json rejected = json::array();
  for (const auto& e : r.rejected) rejected.push_back({{"line", e.line}, {"message", e.message}});
  run.write_json("ingest_report.json", {{"source_file", path.string()},
                                        {"incidents", r.corpus.size()},
                                        {"rejected", rejected}});
  if (auto var = optional_string(run.config, "variable")) {
    const auto& d = section(run.config, "data");
    run.write_json("exclusion_log.json",
                   to_json(sparse_source_log(r.corpus, *var, d.value("min_positives", std::size_t{10}))));
  }
  *run.out << "ingested " << r.corpus.size() << " incidents";
  if (!r.rejected.empty()) *run.out << ", rejected " << r.rejected.size() << " record(s)";
  *run.out << '\n';
  for (const auto& e : r.rejected) *run.err << path.string() << ":" << e.line << ": " << e.message << '\n';
}

inline void cmd_synth(Run& run) {
  const auto spec = synth_spec_from_json(section(run.config, "synth"));
  const auto out = generate(spec);
  std::ostringstream corpus_out;
  write_jsonl(out.corpus, corpus_out);
  run.write("corpus.jsonl", corpus_out.str());
  run.write_json("noise_ledger.json", to_json(out.ledger));
  run.write_json("synth_spec.json", to_json(spec));
  *run.out << "generated " << out.corpus.size() << " incidents, " << out.ledger.flipped_ids.size()
           << " flipped labels\n";
}

inline void cmd_inconsistency(Run& run) {
  const Corpus corpus = load_corpus(run);
  const auto variable = required_string(run.config, "variable");
  const auto target = required_string(run.config, "target_source");
  const auto& sec = section(run.config, "inconsistency");
  InconsistencyConfig ic;
  ic.m = sec.value("m", ic.m);
  ic.seeds = seeds_or(sec, ic.seeds);
  ic.partition_seed = sec.value("partition_seed", ic.partition_seed);
  const auto tc = train_config(run.config);

  std::vector<std::string> targets;
  if (target == "all") {
    for (const auto& e : sparse_source_log(corpus, variable, prepare_options(run.config).min_positives))
      if (!e.excluded) targets.push_back(e.source);
  } else {
    targets.push_back(target);
  }
  std::vector<DeltaF1Report> reports;
  for (const auto& t : targets) {
    const auto ctx = audit_context(corpus, run.config, t);
    reports.push_back(run_state_inconsistency(ctx, ic, tc, run.jobs));
    *run.out << t << ": delta_f1_target " << reports.back().delta_f1_target << ", delta_f1_others "
             << reports.back().delta_f1_others << '\n';
  }
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  const auto summary = summarize_sources(reports);
  run.write_json("inconsistency.json", {{"variable", variable},
                                        {"reports", arr},
                                        {"summary", summary.text()}});
  *run.out << summary.text() << '\n';
}

inline void cmd_discover(Run& run) {
  const Corpus corpus = load_corpus(run);
  const auto ctx = audit_context(corpus, run.config, required_string(run.config, "target_source"));
  const auto dc = discovery_config_from_json(section(run.config, "discovery"));
  const auto ledger = run_discovery(ctx, dc, train_config(run.config), run.jobs);
  run.write_json("ledger.json", to_json(ledger));
  run.write("histogram.csv", histogram_csv(ledger));
  const auto s = summarize_flags(ledger, ledger.counts.size());
  *run.out << s.flagged << " flags out of " << s.total << " annotations (" << s.percent << "%)\n";
}

inline void cmd_verify_removal(Run& run) {
  const Corpus corpus = load_corpus(run);
  const auto ledger = load_ledger_input(run);
  const auto ctx = audit_context(corpus, run.config, required_string(run.config, "target_source"));
  const auto& sec = section(run.config, "removal");
  RemovalConfig rc;
  rc.seeds = seeds_or(sec, rc.seeds);
  rc.split_seed = sec.value("split_seed", rc.split_seed);
  const auto r = run_removal_experiment(ctx, ledger.flags, rc, train_config(run.config), run.jobs);
  run.write_json("removal.json", to_json(r));
  for (const auto& a : r.arms) *run.out << a.name << " mean F1 (others) " << a.mean_f1_others() << '\n';
  if (r.t_test_flags_vs_original)
    *run.out << "flags_removed vs original: p = " << r.t_test_flags_vs_original->p_value << '\n';
}

/// Corrections for the incremental run: an exported correction file, or an
/// oracle built from a synthetic noise ledger.
inline CorrectedView corrections_for(Run& run, const AuditContext& ctx) {
  const Corpus& corpus = *ctx.corpus;
  std::vector<std::string> flags;
  std::vector<Adjudication> adjudications;
  if (auto path = optional_string(run.config, "corrections")) {
    const auto ledger = load_ledger_input(run);
    flags = ledger.flags;
    const json j = read_json_file(*path);
    run.add_input(*path);
    const json& list = j.is_array() ? j : j.at("corrections");
    for (const auto& a : list) adjudications.push_back(adjudication_from_json(a));
  } else if (auto path = optional_string(run.config, "noise_ledger")) {
    const auto noise = noise_ledger_from_json(read_json_file(*path));
    run.add_input(*path);
    std::optional<ErrorCountLedger> ledger;
    if (optional_string(run.config, "ledger")) ledger = load_ledger_input(run);
    for (const auto& e : ctx.data.target_view) {
      const auto& id = corpus[e.row].incident_id;
      const bool flagged = ledger ? std::binary_search(ledger->flags.begin(), ledger->flags.end(), id)
                                  : noise.contains(id);
      if (!flagged) continue;
      flags.push_back(id);
      adjudications.push_back({"oracle", id, "oracle", noise.contains(id) ? Verdict::flip : Verdict::keep,
                               "", 1, ""});
    }
  } else {
    throw UsageError("verify-incremental needs 'corrections' (with 'ledger') or 'noise_ledger'");
  }
  return apply_corrections(corpus, ctx.data.target_view, flags, adjudications);
}

inline void cmd_verify_incremental(Run& run) {
  const Corpus corpus = load_corpus(run);
  const auto ctx = audit_context(corpus, run.config, required_string(run.config, "target_source"));
  const auto corrected = corrections_for(run, ctx);
  const auto& sec = section(run.config, "incremental");
  IncrementalConfig icfg;
  icfg.step_size = sec.value("step_size", icfg.step_size);
  icfg.inc_epochs = sec.value("inc_epochs", icfg.inc_epochs);
  icfg.cold_start = sec.value("cold_start", icfg.cold_start);
  icfg.seeds = seeds_or(sec, icfg.seeds);
  const auto r = run_incremental(ctx, corrected, icfg, train_config(run.config), run.jobs);
  run.write_json("corrected_view.json", to_json(corrected, corpus));
  run.write_json("incremental.json", to_json(r));
  run.write("curves.csv", curves_csv(r));
  for (const auto& w : r.warnings) *run.err << "warning: " << w << '\n';
  for (const auto& p : r.plans)
    *run.out << to_string(p.composition) << ": final F1 target " << p.curve.back().f1_target
             << ", others " << p.curve.back().f1_others << '\n';
}

inline void cmd_bias(Run& run) {
  const Corpus corpus = load_corpus(run);
  const auto variable = required_string(run.config, "variable");
  const auto target = required_string(run.config, "target_source");
  const auto& sec = section(run.config, "bias");
  std::vector<std::string> flags;
  if (optional_string(run.config, "ledger")) flags = load_ledger_input(run).flags;
  const auto variants = build_bias_variants(corpus, variable, target, flags, sec.value("seed", std::uint64_t{0}));
  BiasOptions opts;
  opts.z = sec.value("z", opts.z);
  opts.paper_literal = sec.value("paper_literal", opts.paper_literal);
  const auto analysis = run_bias_analysis(corpus, variable, variants, default_group_specs(), opts);
  json records = json::array();
  for (const auto& r : analysis.records) records.push_back(to_json(r));
  run.write_json("bias.json", {{"variable", variable},
                               {"target_source", target},
                               {"z", opts.z},
                               {"paper_literal", opts.paper_literal},
                               {"records", records},
                               {"warnings", analysis.warnings}});
  run.write("bias_table.csv", bias_table_csv(analysis.records));
  for (const auto& w : analysis.warnings) *run.err << "warning: " << w << '\n';
  *run.out << analysis.records.size() << " odds ratios\n";
}

namespace detail {
inline ReviewServer* active_server = nullptr;
inline void stop_server(int) {
  if (active_server) active_server->stop();
}
}  // namespace detail

inline void cmd_review_serve(Run& run) {
  const auto& sec = section(run.config, "review");
  const fs::path store_dir = sec.value("store", (run.out_dir / "review").string());
  std::optional<Corpus> corpus;
  if (optional_string(run.config, "corpus")) corpus = load_corpus(run);
  ServerOptions opts;
  if (sec.contains("static_dir") && !sec["static_dir"].is_null())
    opts.static_dir = sec["static_dir"].get<std::string>();
  int port = sec.value("port", 0);
  if (port == 0) {
    if (const char* env = std::getenv("LABELAUDIT_PORT"); env && *env) {
      try {
        port = std::stoi(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("LABELAUDIT_PORT must be a port number, got '") + env + "'");
      }
    } else {
      port = 8080;
    }
  }
  if (port < 0 || port > 65535) throw UsageError("port out of range: " + std::to_string(port));
  const std::string host = sec.value("host", std::string("127.0.0.1"));
  ReviewStore store(store_dir);
  ReviewServer server(store, corpus ? &*corpus : nullptr, opts);
  const int bound = server.bind(host, port);
  if (bound < 0) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  *run.out << "review service on http://" << host << ":" << bound << "/ (store " << store_dir.string()
           << ")" << std::endl;
  detail::active_server = &server;
  std::signal(SIGINT, detail::stop_server);
  std::signal(SIGTERM, detail::stop_server);
  server.listen();
  detail::active_server = nullptr;
}

// ---------------------------------------------------------------------------
// Report bundle

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline void cmd_report(Run& run) {
  const fs::path dir = required_string(run.config, "run_dir");
  const std::vector<std::string> known = {"ledger.json", "removal.json", "inconsistency.json",
                                          "incremental.json", "bias.json"};
  std::vector<std::string> present;
  for (const auto& k : known)
    if (fs::exists(dir / k)) present.push_back(k);
  if (present.empty()) {
    std::string msg = "no module outputs in " + dir.string() + "; expected one of:";
    for (const auto& k : known) msg += " " + k;
    throw DataError(msg);
  }
  std::ostringstream md;
  md << "# Audit report\n\n";
  for (const auto& k : present) run.add_input(dir / k);

  if (fs::exists(dir / "inconsistency.json")) {
    const json j = read_json_file(dir / "inconsistency.json");
    std::ostringstream csv;
    csv << "target_source,variable,delta_f1_target,delta_f1_others\n";
    md << "## Cross-source inconsistency\n\n| target | delta F1 (target test) | delta F1 (others test) |\n|---|---|---|\n";
    for (const auto& r : j.at("reports")) {
      csv << r.at("target_source").get<std::string>() << ',' << r.at("variable").get<std::string>() << ','
          << r.at("delta_f1_target").get<double>() << ',' << r.at("delta_f1_others").get<double>() << '\n';
      md << "| " << r.at("target_source").get<std::string>() << " | "
         << fmt3(r.at("delta_f1_target").get<double>()) << " | "
         << fmt3(r.at("delta_f1_others").get<double>()) << " |\n";
    }
    md << "\n" << j.value("summary", std::string{}) << "\n\n";
    run.write("report/delta_f1.csv", csv.str());
  }

  if (fs::exists(dir / "ledger.json")) {
    const auto ledger = load_ledger(dir / "ledger.json");
    run.write("report/histogram.csv", histogram_csv(ledger));
    const auto s = summarize_flags(ledger, ledger.counts.size());
    std::ostringstream csv;
    csv << "target_source,variable,annotations,flags,percent\n"
        << ledger.target_source << ',' << ledger.variable << ',' << s.total << ',' << s.flagged << ','
        << s.percent << '\n';
    run.write("report/flag_statistics.csv", csv.str());
    md << "## Flagged instances\n\n" << s.flagged << " of " << s.total << " annotations in "
       << ledger.target_source << " reach the threshold of " << ledger.config.threshold << " ("
       << s.percent << "%).\n\n";
  }

  if (fs::exists(dir / "removal.json")) {
    const json j = read_json_file(dir / "removal.json");
    const auto seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    std::ostringstream csv;
    csv << "variable,arm";
    for (std::size_t i = 1; i <= seeds.size(); ++i) csv << ',' << i;
    csv << ",mean\n";
    md << "## Removal experiment (others test F1)\n\n| arm |";
    for (std::size_t i = 1; i <= seeds.size(); ++i) md << ' ' << i << " |";
    md << " mean |\n|---|";
    for (std::size_t i = 0; i <= seeds.size(); ++i) md << "---|";
    md << '\n';
    const std::pair<const char*, const char*> rows[] = {{"original", "Original"},
                                                        {"random_dropped", "Flags Randomly Dropped"},
                                                        {"flags_removed", "Flags Removed"}};
    for (const auto& [key, label] : rows) {
      const auto& arm = j.at("arms").at(key);
      csv << j.at("variable").get<std::string>() << ',' << label;
      md << "| " << label << " |";
      for (const auto& v : arm.at("f1_others_test")) {
        csv << ',' << fmt3(v.get<double>());
        md << ' ' << fmt3(v.get<double>()) << " |";
      }
      csv << ',' << fmt3(arm.at("mean_f1_others_test").get<double>()) << '\n';
      md << ' ' << fmt3(arm.at("mean_f1_others_test").get<double>()) << " |\n";
    }
    run.write("report/removal_table.csv", csv.str());
    for (const char* t : {"t_test_flags_vs_original", "t_test_flags_vs_random"}) {
      const auto& tt = j.at(t);
      if (tt.is_null()) continue;
      md << "\n" << t << ": t = " << fmt3(tt.at("t_statistic").get<double>())
         << ", df = " << fmt3(tt.at("degrees_of_freedom").get<double>())
         << ", p = " << fmt3(tt.at("p_value").get<double>());
    }
    md << "\n\n";
  }

  if (fs::exists(dir / "incremental.json")) {
    const json j = read_json_file(dir / "incremental.json");
    std::ostringstream csv;
    csv << "composition,instances_fed,f1_target,f1_others,boundary\n";
    md << "## Incremental training (final points)\n\n| composition | F1 target test | F1 others test |\n|---|---|---|\n";
    for (const auto& p : j.at("plans")) {
      for (const auto& pt : p.at("curve"))
        csv << p.at("composition").get<std::string>() << ',' << pt.at("instances_fed").get<std::size_t>()
            << ',' << pt.at("f1_target_test").get<double>() << ',' << pt.at("f1_others_test").get<double>()
            << ',' << p.at("boundary").get<std::size_t>() << '\n';
      const auto& last = p.at("curve").back();
      md << "| " << p.at("composition").get<std::string>() << " | "
         << fmt3(last.at("f1_target_test").get<double>()) << " | "
         << fmt3(last.at("f1_others_test").get<double>()) << " |\n";
    }
    md << '\n';
    run.write("report/curves.csv", csv.str());
  }

  if (fs::exists(dir / "bias.json")) {
    const json j = read_json_file(dir / "bias.json");
    std::vector<ORRecord> records;
    for (const auto& r : j.at("records")) records.push_back(or_record_from_json(r));
    run.write("report/bias_table.csv", bias_table_csv(records));
    md << "## Odds ratios\n\n| variant | axis | comparison | reference | OR [95% CI] |\n|---|---|---|---|---|\n";
    for (const auto& r : records)
      md << "| " << r.annotation_variant << " | " << r.axis << " | " << r.comparison << " ("
         << r.comparison_count << ") | " << r.reference << " (" << r.reference_count << ") | "
         << fmt3(r.or_value) << " [" << fmt3(r.ci_low) << "; " << fmt3(r.ci_high) << "] |\n";
    md << '\n';
  }
  run.write("report/summary.md", md.str());
  *run.out << "report written to " << (run.out_dir / "report").string() << '\n';
}

// ---------------------------------------------------------------------------
// Dispatch

struct Overrides {
  std::optional<std::string> corpus, format, variable, target, ledger, corrections, noise_ledger,
      store, static_dir, host, run_dir, resolution;
  std::optional<std::size_t> min_positives, m, step_size;
  std::optional<std::uint64_t> data_seed, seed;
  std::optional<int> k, repetitions, threshold, epochs, inc_epochs, port;
  std::optional<double> learning_rate, z;
  bool allow_unbalanced = false, record_all = false, cold_start = false, paper_literal = false;
};

/// Folds flags into the config so the manifest echoes the effective values.
inline void apply_overrides(json& c, const Overrides& o) {
  auto sec = [&](const char* name) -> json& {
    if (!c.contains(name)) c[name] = json::object();
    return c[name];
  };
  if (o.corpus) c["corpus"] = *o.corpus;
  if (o.format) c["format"] = *o.format;
  if (o.variable) c["variable"] = *o.variable;
  if (o.target) c["target_source"] = *o.target;
  if (o.ledger) c["ledger"] = *o.ledger;
  if (o.corrections) c["corrections"] = *o.corrections;
  if (o.noise_ledger) c["noise_ledger"] = *o.noise_ledger;
  if (o.run_dir) c["run_dir"] = *o.run_dir;
  if (o.min_positives) sec("data")["min_positives"] = *o.min_positives;
  if (o.data_seed) sec("data")["seed"] = *o.data_seed;
  if (o.allow_unbalanced) sec("data")["allow_unbalanced"] = true;
  if (o.epochs) sec("train")["epochs"] = *o.epochs;
  if (o.learning_rate) sec("train")["learning_rate"] = *o.learning_rate;
  if (o.m) sec("inconsistency")["m"] = *o.m;
  if (o.k) sec("discovery")["k"] = *o.k;
  if (o.repetitions) {
    sec("discovery")["repetitions"] = *o.repetitions;
    if (!sec("discovery").contains("seeds") || sec("discovery")["seeds"].size() != static_cast<std::size_t>(*o.repetitions)) {
      json seeds = json::array();
      for (int i = 1; i <= *o.repetitions; ++i) seeds.push_back(i);
      sec("discovery")["seeds"] = seeds;
    }
  }
  if (o.threshold) sec("discovery")["threshold"] = *o.threshold;
  if (o.record_all) sec("discovery")["record_all"] = true;
  if (o.step_size) sec("incremental")["step_size"] = *o.step_size;
  if (o.inc_epochs) sec("incremental")["inc_epochs"] = *o.inc_epochs;
  if (o.cold_start) sec("incremental")["cold_start"] = true;
  if (o.z) sec("bias")["z"] = *o.z;
  if (o.paper_literal) sec("bias")["paper_literal"] = true;
  if (o.seed) sec("synth")["seed"] = *o.seed;
  if (o.store) sec("review")["store"] = *o.store;
  if (o.static_dir) sec("review")["static_dir"] = *o.static_dir;
  if (o.host) sec("review")["host"] = *o.host;
  if (o.port) sec("review")["port"] = *o.port;
}

/// Seeds that determine the run, gathered for the manifest.
inline json collect_seeds(const json& c) {
  json s = json::object();
  auto grab = [&](const char* sec, const char* key, const char* name) {
    if (c.contains(sec) && c[sec].contains(key)) s[name] = c[sec][key];
  };
  grab("data", "seed", "data");
  grab("train", "seed", "train");
  grab("inconsistency", "seeds", "inconsistency");
  grab("inconsistency", "partition_seed", "partition");
  grab("discovery", "seeds", "discovery");
  grab("removal", "seeds", "removal");
  grab("removal", "split_seed", "removal_split");
  grab("incremental", "seeds", "incremental");
  grab("bias", "seed", "bias");
  grab("synth", "seed", "synth");
  return s;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"labelaudit: cross-source annotation audit toolkit"};
  app.name("labelaudit");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir;
  std::optional<std::size_t> jobs;
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--manifest", manifest_path, "rerun from a manifest and verify output digests");
    sub->add_option("--out-dir", out_dir, "output directory (default: the config's out_dir or .)");
    sub->add_option("--jobs", jobs, "parallel workers (default LABELAUDIT_JOBS or all cores)");
  };
  auto data = [&](CLI::App* sub) {
    sub->add_option("--corpus", o.corpus, "corpus file (JSONL or CSV)");
    sub->add_option("--format", o.format, "jsonl or csv (default from extension)");
    sub->add_option("--variable", o.variable, "label variable");
    sub->add_option("--target", o.target, "target source");
    sub->add_option("--min-positives", o.min_positives, "sparse-source cutoff");
    sub->add_option("--data-seed", o.data_seed, "balancing seed");
    sub->add_flag("--allow-unbalanced", o.allow_unbalanced, "keep sources with more positives than negatives");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--learning-rate", o.learning_rate, "Adam learning rate");
  };

  std::map<std::string, CLI::App*> subs;
  auto add = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    common(s);
    subs[name] = s;
    return s;
  };
  {
    auto* s = add("ingest", "validate a corpus file and normalize it to JSONL");
    s->add_option("--corpus", o.corpus, "corpus file");
    s->add_option("--format", o.format, "jsonl or csv");
    s->add_option("--variable", o.variable, "also write the sparse-source log for this variable");
    s->add_option("--min-positives", o.min_positives, "sparse-source cutoff");
  }
  {
    auto* s = add("synth", "generate a synthetic multi-source corpus with injected label noise");
    s->add_option("--seed", o.seed, "generator seed");
  }
  {
    auto* s = add("inconsistency", "cross-source F1 deltas for a target source (or 'all')");
    data(s);
    training(s);
    s->add_option("--m", o.m, "number of exclusive other-source subsets");
  }
  {
    auto* s = add("discover", "count hold-out errors over repeated k-fold runs and flag instances");
    data(s);
    training(s);
    s->add_option("--k", o.k, "folds");
    s->add_option("--repetitions", o.repetitions, "repetitions");
    s->add_option("--threshold", o.threshold, "flag when count >= threshold");
    s->add_flag("--record-all", o.record_all, "record counts for other sources too");
  }
  {
    auto* s = add("verify-removal", "retrain without flagged instances against a random-drop baseline");
    data(s);
    training(s);
    s->add_option("--ledger", o.ledger, "discovery ledger");
  }
  {
    auto* s = add("verify-incremental", "incremental training with and without corrections");
    data(s);
    training(s);
    s->add_option("--ledger", o.ledger, "discovery ledger");
    s->add_option("--corrections", o.corrections, "exported corrections");
    s->add_option("--noise-ledger", o.noise_ledger, "synthetic noise ledger used as oracle corrections");
    s->add_option("--step-size", o.step_size, "instances revealed per step");
    s->add_option("--inc-epochs", o.inc_epochs, "epochs per step");
    s->add_flag("--cold-start", o.cold_start, "retrain from scratch at every step");
  }
  {
    auto* s = add("bias", "odds ratios by demographic group across annotation variants");
    data(s);
    s->add_option("--ledger", o.ledger, "discovery ledger (flags_removed / random_dropped variants)");
    s->add_option("--z", o.z, "critical value");
    s->add_flag("--paper-literal", o.paper_literal, "use exp(coef) -/+ z*SE for the interval");
  }
  {
    auto* s = add("review-serve", "serve the adjudication API and frontend");
    s->add_option("--corpus", o.corpus, "corpus the sessions draw notes from");
    s->add_option("--store", o.store, "session store directory");
    s->add_option("--port", o.port, "port (default LABELAUDIT_PORT or 8080)");
    s->add_option("--host", o.host, "bind address");
    s->add_option("--static-dir", o.static_dir, "frontend assets served at /");
  }
  {
    auto* s = add("report", "render report tables and plot data from a run directory");
    s->add_option("run_dir", o.run_dir, "directory holding module outputs");
  }

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    auto chosen = app.get_subcommands();
    err << (chosen.empty() ? app.help() : chosen.front()->help());
    return kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Run run;
  run.command = chosen->get_name();
  run.out = &out;
  run.err = &err;
  const auto started = std::chrono::steady_clock::now();
  try {
    std::optional<json> manifest;
    if (!manifest_path.empty()) {
      manifest = read_json_file(manifest_path);
      if (manifest->value("command", std::string{}) != run.command)
        throw UsageError("manifest " + manifest_path + " records command '" +
                         manifest->value("command", std::string{}) + "', not '" + run.command + "'");
      run.config = manifest->at("config");
    } else if (!config_path.empty()) {
      run.config = read_json_file(config_path);
      if (!run.config.is_object()) throw UsageError("config " + config_path + " must be a JSON object");
    } else if (run.command != "report" && run.command != "review-serve" && run.command != "synth" &&
               run.command != "ingest") {
      throw UsageError(run.command + " needs --config (or --manifest)");
    }
    apply_overrides(run.config, o);
    if (!out_dir.empty()) run.config["out_dir"] = out_dir;
    if (run.command == "report" && !run.config.contains("out_dir") && run.config.contains("run_dir"))
      run.config["out_dir"] = run.config["run_dir"];
    run.out_dir = run.config.value("out_dir", std::string("."));
    fs::create_directories(run.out_dir);
    run.jobs = resolve_jobs(jobs);

    if (manifest) {
      for (const auto& [path, digest] : manifest->at("inputs").items()) {
        if (!fs::exists(path)) throw DataError("manifest input " + path + " is missing");
        if (sha256_file(path) != digest.get<std::string>())
          throw DataError("manifest input " + path + " changed since the recorded run");
      }
    }

    const std::map<std::string, void (*)(Run&)> table = {
        {"ingest", cmd_ingest},
        {"synth", cmd_synth},
        {"inconsistency", cmd_inconsistency},
        {"discover", cmd_discover},
        {"verify-removal", cmd_verify_removal},
        {"verify-incremental", cmd_verify_incremental},
        {"bias", cmd_bias},
        {"review-serve", cmd_review_serve},
        {"report", cmd_report}};
    table.at(run.command)(run);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest_out = {{"command", run.command},
                         {"tool_version", kVersion},
                         {"config", run.config},
                         {"seeds", collect_seeds(run.config)},
                         {"jobs", run.jobs},
                         {"inputs", run.inputs},
                         {"outputs", run.outputs},
                         {"duration_seconds", seconds}};
    {
      std::ofstream mf(run.out_dir / ("manifest_" + run.command + ".json"), std::ios::binary);
      mf << manifest_out.dump(2) << '\n';
    }
    if (manifest) {
      std::vector<std::string> mismatched;
      for (const auto& [rel, digest] : manifest->at("outputs").items()) {
        auto it = run.outputs.find(rel);
        if (it == run.outputs.end() || it->second != digest.get<std::string>()) mismatched.push_back(rel);
      }
      if (!mismatched.empty()) {
        std::string msg = "rerun outputs differ from the manifest:";
        for (const auto& m : mismatched) msg += " " + m;
        throw DataError(msg);
      }
      out << "rerun reproduced " << run.outputs.size() << " output(s) byte-for-byte\n";
    }
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << chosen->help();
    return kUsage;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace labelaudit::cli
