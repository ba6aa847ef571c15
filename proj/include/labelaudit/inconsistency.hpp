#pragma once

// Cross-source annotation inconsistency: F1 of models trained on mixed
// target+others data versus models trained on others only, measured on the
// target's test set and on the others' test set.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "labelaudit/classifier.hpp"
#include "labelaudit/context.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/metrics.hpp"
#include "labelaudit/parallel.hpp"

namespace labelaudit {

enum class CompositionKind { PureOthers = 0, OthersTarget = 1, TargetOthers = 2 };

inline constexpr std::array<CompositionKind, 3> kCompositionKinds = {
    CompositionKind::PureOthers, CompositionKind::OthersTarget, CompositionKind::TargetOthers};

inline std::string_view to_string(CompositionKind k) {
  switch (k) {
    case CompositionKind::OthersTarget: return "OthersTarget";
    case CompositionKind::TargetOthers: return "TargetOthers";
    case CompositionKind::PureOthers: break;
  }
  return "PureOthers";
}

struct TrainingComposition {
  CompositionKind kind = CompositionKind::PureOthers;
  TrainingSet train;  // ordered, one segment per origin
  ExampleList validation;
  ExampleList test_target;
  ExampleList test_others;
};

/// The three equal-size training sets for exclusive subset `j`. Target and
/// subset j are split 8:1:1; PureOthers pads subset j's train with the train
/// part of a second size-x sample drawn from the pool outside subset j.
inline std::array<TrainingComposition, 3> build_compositions(const CorpusPartition& partition,
                                                             std::size_t j, std::uint64_t seed) {
  if (j >= partition.exclusive_subsets.size())
    throw UsageError("subset index " + std::to_string(j) + " out of range (m = " +
                     std::to_string(partition.exclusive_subsets.size()) + ")");
  const auto& subset = partition.exclusive_subsets[j];
  const std::size_t x = partition.target_set.size();
  const auto target = split_8_1_1(partition.target_set, derive_seed(seed, 0x7a67u));
  const auto others = split_8_1_1(subset, derive_seed(seed, 0x0e5u, j));

  std::vector<char> in_subset;
  for (const auto& e : subset) {
    if (e.row >= in_subset.size()) in_subset.resize(e.row + 1, 0);
    in_subset[e.row] = 1;
  }
  ExampleList remaining;
  for (const auto& e : partition.other_pool)
    if (e.row >= in_subset.size() || !in_subset[e.row]) remaining.push_back(e);
  if (remaining.size() < x)
    throw DataError("PureOthers needs a second other-source sample of " + std::to_string(x) +
                    " instances but only " + std::to_string(remaining.size()) +
                    " remain outside subset " + std::to_string(j));
  Rng rng(derive_seed(seed, 0x5ec0u, j));
  ExampleList second;
  for (auto i : sample_positions(remaining.size(), x, rng)) second.push_back(remaining[i]);
  const auto second_split = split_8_1_1(second, derive_seed(seed, 0x5ec1u, j));

  ExampleList validation = target.validation;
  validation.insert(validation.end(), others.validation.begin(), others.validation.end());

  std::array<TrainingComposition, 3> out;
  out[0].kind = CompositionKind::PureOthers;
  out[0].train = TrainingSet::concat({others.train, second_split.train});
  out[1].kind = CompositionKind::OthersTarget;
  out[1].train = TrainingSet::concat({others.train, target.train});
  out[2].kind = CompositionKind::TargetOthers;
  out[2].train = TrainingSet::concat({target.train, others.train});
  for (auto& c : out) {
    c.validation = validation;
    c.test_target = target.test;
    c.test_others = others.test;
  }
  return out;
}

/// Mixed-training F1 (mean of both orders) minus the PureOthers F1.
inline double delta_f1(double f1_pure, double f1_others_target, double f1_target_others) {
  return (f1_others_target + f1_target_others) / 2.0 - f1_pure;
}

struct InconsistencyConfig {
  std::size_t m = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t partition_seed = 0;
};

struct F1GridEntry {
  std::size_t subset = 0;
  std::uint64_t seed = 0;
  CompositionKind kind = CompositionKind::PureOthers;
  double f1_target = 0;
  double f1_others = 0;
  int selected_epoch = 0;
};

struct DeltaF1Report {
  std::string target_source;
  std::string variable;
  InconsistencyConfig config;
  std::size_t target_size = 0;
  std::size_t train_size = 0;
  std::vector<F1GridEntry> grid;  // sorted by (subset, seed, kind)
  std::map<std::string, double> mean_f1_target;
  std::map<std::string, double> mean_f1_others;
  double delta_f1_target = 0;
  double delta_f1_others = 0;
};

struct AggregatedF1 {
  std::map<std::string, double> target, others;
  double delta_target = 0, delta_others = 0;
};

/// Mean over seeds within each subset, then mean over subsets, then deltas.
inline AggregatedF1 aggregate_grid(const std::vector<F1GridEntry>& grid) {
  std::map<std::pair<CompositionKind, std::size_t>, std::pair<double, double>> sums;
  std::map<std::pair<CompositionKind, std::size_t>, std::size_t> counts;
  for (const auto& g : grid) {
    auto& s = sums[{g.kind, g.subset}];
    s.first += g.f1_target;
    s.second += g.f1_others;
    ++counts[{g.kind, g.subset}];
  }
  std::map<CompositionKind, std::pair<double, double>> per_kind;
  std::map<CompositionKind, std::size_t> subsets;
  for (const auto& [key, s] : sums) {
    const double n = static_cast<double>(counts[key]);
    auto& k = per_kind[key.first];
    k.first += s.first / n;
    k.second += s.second / n;
    ++subsets[key.first];
  }
  AggregatedF1 a;
  for (auto kind : kCompositionKinds) {
    const double n = static_cast<double>(std::max<std::size_t>(1, subsets[kind]));
    a.target[std::string(to_string(kind))] = per_kind[kind].first / n;
    a.others[std::string(to_string(kind))] = per_kind[kind].second / n;
  }
  a.delta_target = delta_f1(a.target["PureOthers"], a.target["OthersTarget"],
                            a.target["TargetOthers"]);
  a.delta_others = delta_f1(a.others["PureOthers"], a.others["OthersTarget"],
                            a.others["TargetOthers"]);
  return a;
}

/// Trains every (subset, seed, composition) cell and aggregates the deltas.
inline DeltaF1Report run_state_inconsistency(const AuditContext& ctx,
                                             const InconsistencyConfig& config,
                                             const TrainConfig& train_config, std::size_t jobs = 1) {
  if (config.m < 1) throw UsageError("inconsistency.m must be >= 1");
  if (config.seeds.empty()) throw UsageError("inconsistency needs at least one seed");
  const auto partition = make_partition(ctx.target_source, ctx.data.target_view,
                                        ctx.data.others_view, config.m, config.partition_seed);

  struct Cell {
    std::size_t subset, seed_index;
  };
  std::vector<Cell> cells;
  for (std::size_t j = 0; j < config.m; ++j)
    for (std::size_t i = 0; i < config.seeds.size(); ++i) cells.push_back({j, i});

  std::vector<std::array<TrainingComposition, 3>> compositions(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c)
    compositions[c] = build_compositions(partition, cells[c].subset, config.seeds[cells[c].seed_index]);

  std::vector<F1GridEntry> grid(cells.size() * 3);
  parallel_for(grid.size(), jobs, [&](std::size_t task) {
    const auto& cell = cells[task / 3];
    const auto& comp = compositions[task / 3][task % 3];
    TrainConfig tc = train_config;
    const auto seed = config.seeds[cell.seed_index];
    tc.seed = derive_seed(train_config.seed, seed, cell.subset);
    const auto ckpt = train(ctx.features, comp.train, comp.validation, ctx.encoder, tc);
    auto& g = grid[task];
    g.subset = cell.subset;
    g.seed = seed;
    g.kind = comp.kind;
    g.f1_target = evaluate_f1(ckpt.model, ctx.features, comp.test_target);
    g.f1_others = evaluate_f1(ckpt.model, ctx.features, comp.test_others);
    g.selected_epoch = ckpt.selected_epoch;
  });

  DeltaF1Report report;
  report.target_source = ctx.target_source;
  report.variable = ctx.variable;
  report.config = config;
  report.target_size = partition.target_set.size();
  report.train_size = compositions.empty() ? 0 : compositions[0][0].train.examples.size();
  report.grid = std::move(grid);
  const auto agg = aggregate_grid(report.grid);
  report.mean_f1_target = agg.target;
  report.mean_f1_others = agg.others;
  report.delta_f1_target = agg.delta_target;
  report.delta_f1_others = agg.delta_others;
  return report;
}

inline json to_json(const DeltaF1Report& r) {
  json grid = json::array();
  for (const auto& g : r.grid)
    grid.push_back({{"subset", g.subset},
                    {"seed", g.seed},
                    {"composition", to_string(g.kind)},
                    {"f1_target_test", g.f1_target},
                    {"f1_others_test", g.f1_others},
                    {"selected_epoch", g.selected_epoch}});
  return {{"target_source", r.target_source},
          {"variable", r.variable},
          {"m", r.config.m},
          {"seeds", r.config.seeds},
          {"partition_seed", r.config.partition_seed},
          {"target_size", r.target_size},
          {"train_size", r.train_size},
          {"grid", grid},
          {"mean_f1_target_test", r.mean_f1_target},
          {"mean_f1_others_test", r.mean_f1_others},
          {"delta_f1_target", r.delta_f1_target},
          {"delta_f1_others", r.delta_f1_others}};
}

inline CompositionKind composition_kind_from_string(std::string_view s) {
  for (auto k : kCompositionKinds)
    if (to_string(k) == s) return k;
  throw DataError("unknown composition '" + std::string(s) + "'");
}

inline DeltaF1Report delta_report_from_json(const json& j) {
  DeltaF1Report r;
  r.target_source = j.at("target_source");
  r.variable = j.at("variable");
  r.config.m = j.at("m");
  r.config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.config.partition_seed = j.value("partition_seed", std::uint64_t{0});
  r.target_size = j.value("target_size", std::size_t{0});
  r.train_size = j.value("train_size", std::size_t{0});
  for (const auto& g : j.at("grid"))
    r.grid.push_back({g.at("subset"), g.at("seed"),
                      composition_kind_from_string(g.at("composition").get<std::string>()),
                      g.at("f1_target_test"), g.at("f1_others_test"), g.value("selected_epoch", 0)});
  r.mean_f1_target = j.at("mean_f1_target_test").get<std::map<std::string, double>>();
  r.mean_f1_others = j.at("mean_f1_others_test").get<std::map<std::string, double>>();
  r.delta_f1_target = j.at("delta_f1_target");
  r.delta_f1_others = j.at("delta_f1_others");
  return r;
}

struct InconsistencySummary {
  std::size_t positive_target = 0;
  std::size_t total = 0;
  std::string text() const {
    return std::to_string(positive_target) + " of " + std::to_string(total) + " positive";
  }
};

/// Counts targets whose target-test delta is positive.
inline InconsistencySummary summarize_sources(const std::vector<DeltaF1Report>& reports) {
  InconsistencySummary s;
  s.total = reports.size();
  for (const auto& r : reports) s.positive_target += r.delta_f1_target > 0;
  return s;
}

}  // namespace labelaudit
