#pragma once

// Problematic-instance discovery by repeated k-fold hold-out error counting
// over the union of the target source and the other sources.

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/classifier.hpp"
#include "labelaudit/context.hpp"
#include "labelaudit/parallel.hpp"

namespace labelaudit {

struct DiscoveryConfig {
  int k = 5;
  int repetitions = 5;
  int threshold = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Record counts for other-source instances as well (diagnostics only).
  bool record_all = false;

  void validate() const {
    if (k < 2) throw UsageError("discovery.k must be >= 2");
    if (repetitions < 1) throw UsageError("discovery.repetitions must be >= 1");
    if (threshold < 1 || threshold > repetitions)
      throw UsageError("discovery.threshold must lie in [1, repetitions]");
    if (seeds.size() != static_cast<std::size_t>(repetitions))
      throw UsageError("discovery.seeds must list one seed per repetition");
  }
};

inline json to_json(const DiscoveryConfig& c) {
  return {{"k", c.k},
          {"repetitions", c.repetitions},
          {"threshold", c.threshold},
          {"seeds", c.seeds},
          {"record_all", c.record_all}};
}

inline DiscoveryConfig discovery_config_from_json(const json& j) {
  DiscoveryConfig c;
  c.k = j.value("k", c.k);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("seeds"))
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  else {
    c.seeds.clear();
    for (int i = 1; i <= c.repetitions; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  c.record_all = j.value("record_all", c.record_all);
  c.validate();
  return c;
}

struct ErrorCountLedger {
  std::string variable;
  std::string target_source;
  DiscoveryConfig config;
  std::map<std::string, int> counts;        // target-source instances
  std::map<std::string, int> other_counts;  // only with record_all
  std::vector<std::string> flags;           // sorted ids with count >= threshold
  std::map<int, std::size_t> histogram;     // count -> frequency over counts
  std::map<std::string, int> labels;        // recorded label of each counted id
  /// Hold-out probability from the last repetition; advisory for reviewers.
  std::map<std::string, double> last_probability;
};

/// Ids with count >= threshold, sorted.
inline std::vector<std::string> apply_threshold(const std::map<std::string, int>& counts,
                                                int threshold) {
  std::vector<std::string> flags;
  for (const auto& [id, c] : counts)
    if (c >= threshold) flags.push_back(id);
  return flags;
}

inline std::map<int, std::size_t> count_histogram(const std::map<std::string, int>& counts) {
  std::map<int, std::size_t> h;
  for (const auto& [_, c] : counts) ++h[c];
  return h;
}

/// Deals `n` shuffled positions into k folds whose sizes differ by at most
/// one; the remainder goes to the lowest-index folds. Returns fold per position.
inline std::vector<int> deal_folds(std::size_t n, int k, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<int> fold(n);
  const std::size_t base = n / static_cast<std::size_t>(k), extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t s = 0; s < size; ++s) fold[order[pos++]] = f;
  }
  return fold;
}

namespace detail {

inline bool folds_trainable(const ExampleList& pool, const std::vector<int>& fold, int k) {
  std::vector<std::size_t> pos(static_cast<std::size_t>(k), 0), neg(static_cast<std::size_t>(k), 0);
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool[i].label ? pos : neg)[static_cast<std::size_t>(fold[i])]++;
    (pool[i].label ? tp : tn)++;
  }
  for (int f = 0; f < k; ++f)
    if (tp == pos[static_cast<std::size_t>(f)] || tn == neg[static_cast<std::size_t>(f)]) return false;
  return true;
}

}  // namespace detail

/// Repeats k-fold cross-validation over target ∪ others; every instance is
/// held out once per repetition and a target instance's count grows whenever
/// its hold-out prediction disagrees with its label. Fold models train with
/// the given config and no validation split (final epoch).
inline ErrorCountLedger run_discovery(const AuditContext& ctx, const DiscoveryConfig& config,
                                      const TrainConfig& train_config, std::size_t jobs = 1) {
  config.validate();
  const auto& corpus = *ctx.corpus;
  ExampleList pool = ctx.data.target_view;
  pool.insert(pool.end(), ctx.data.others_view.begin(), ctx.data.others_view.end());
  if (pool.empty()) throw DataError("discovery pool is empty");
  std::vector<char> is_target(pool.size(), 0);
  for (std::size_t i = 0; i < ctx.data.target_view.size(); ++i) is_target[i] = 1;

  const auto reps = static_cast<std::size_t>(config.repetitions);
  const auto k = static_cast<std::size_t>(config.k);
  std::vector<std::vector<int>> folds(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    bool ok = false;
    for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
      Rng rng(attempt == 0 ? derive_seed(config.seeds[r], 0xf01du)
                           : derive_seed(config.seeds[r], 0xf01du, attempt));
      folds[r] = deal_folds(pool.size(), config.k, rng);
      ok = detail::folds_trainable(pool, folds[r], config.k);
    }
    if (!ok)
      throw DataError("repetition " + std::to_string(r + 1) +
                      ": could not deal folds with two classes in every training part after 3 attempts");
  }

  // One task per (repetition, fold); each writes only its hold-out slots.
  std::vector<std::vector<char>> wrong(reps, std::vector<char>(pool.size(), 0));
  std::vector<double> last_prob(pool.size(), 0.0);
  parallel_for(reps * k, jobs, [&](std::size_t task) {
    const std::size_t r = task / k;
    const int f = static_cast<int>(task % k);
    ExampleList train_part, held;
    std::vector<std::size_t> held_pos;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (folds[r][i] == f) {
        held.push_back(pool[i]);
        held_pos.push_back(i);
      } else {
        train_part.push_back(pool[i]);
      }
    }
    TrainConfig tc = train_config;
    tc.seed = derive_seed(train_config.seed, config.seeds[r], static_cast<std::uint64_t>(f));
    const auto ckpt = train(ctx.features, TrainingSet::single(std::move(train_part)), {},
                            ctx.encoder, tc);
    for (std::size_t h = 0; h < held.size(); ++h) {
      const double p = ckpt.model.probability(ctx.features[held[h].row]);
      wrong[r][held_pos[h]] = decide(p) != held[h].label;
      if (r + 1 == reps) last_prob[held_pos[h]] = p;
    }
  });

  ErrorCountLedger ledger;
  ledger.variable = ctx.variable;
  ledger.target_source = ctx.target_source;
  ledger.config = config;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    int c = 0;
    for (std::size_t r = 0; r < reps; ++r) c += wrong[r][i];
    const auto& id = corpus[pool[i].row].incident_id;
    if (is_target[i]) {
      ledger.counts[id] = c;
      ledger.labels[id] = pool[i].label;
      ledger.last_probability[id] = last_prob[i];
    } else if (config.record_all) {
      ledger.other_counts[id] = c;
    }
  }
  ledger.flags = apply_threshold(ledger.counts, config.threshold);
  ledger.histogram = count_histogram(ledger.counts);
  return ledger;
}

struct FlagSummary {
  std::size_t total = 0;
  std::size_t flagged = 0;
  double percent = 0;  // one decimal
};

inline FlagSummary summarize_flags(std::size_t flagged, std::size_t total_annotations) {
  FlagSummary s;
  s.total = total_annotations;
  s.flagged = flagged;
  s.percent = total_annotations
                  ? std::round(1000.0 * static_cast<double>(flagged) /
                               static_cast<double>(total_annotations)) /
                        10.0
                  : 0.0;
  return s;
}

inline FlagSummary summarize_flags(const ErrorCountLedger& ledger, std::size_t total_annotations) {
  return summarize_flags(ledger.flags.size(), total_annotations);
}

inline json to_json(const ErrorCountLedger& l) {
  json hist = json::object();
  for (const auto& [c, n] : l.histogram) hist[std::to_string(c)] = n;
  json j = {{"variable", l.variable},
            {"target_source", l.target_source},
            {"config", to_json(l.config)},
            {"counts", l.counts},
            {"flags", l.flags},
            {"histogram", hist},
            {"labels", l.labels},
            {"last_probability", l.last_probability}};
  if (l.config.record_all) j["other_counts"] = l.other_counts;
  return j;
}

inline ErrorCountLedger ledger_from_json(const json& j) {
  ErrorCountLedger l;
  l.variable = j.at("variable");
  l.target_source = j.at("target_source");
  l.config = discovery_config_from_json(j.at("config"));
  l.counts = j.at("counts").get<std::map<std::string, int>>();
  l.flags = j.at("flags").get<std::vector<std::string>>();
  for (const auto& [c, n] : j.at("histogram").items()) l.histogram[std::stoi(c)] = n.get<std::size_t>();
  l.labels = j.value("labels", std::map<std::string, int>{});
  l.last_probability = j.value("last_probability", std::map<std::string, double>{});
  l.other_counts = j.value("other_counts", std::map<std::string, int>{});
  return l;
}

inline ErrorCountLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ledger " + path.string());
  try {
    return ledger_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("malformed ledger " + path.string() + ": " + e.what());
  }
}

/// count,frequency rows for log-scale histogram plots.
inline std::string histogram_csv(const ErrorCountLedger& l) {
  std::ostringstream out;
  out << "count,frequency\n";
  for (const auto& [c, n] : l.histogram) out << c << ',' << n << '\n';
  return out.str();
}

}  // namespace labelaudit
