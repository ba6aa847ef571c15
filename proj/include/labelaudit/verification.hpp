#pragma once

// Verifying flagged instances: retraining with flags removed versus the same
// number of random target instances dropped, and the incremental training
// paradigm comparing original and corrected target labels.

#include <array>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/adjudication.hpp"
#include "labelaudit/classifier.hpp"
#include "labelaudit/context.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/metrics.hpp"
#include "labelaudit/parallel.hpp"

namespace labelaudit {

// ---------------------------------------------------------------------------
// Corrections

struct CorrectedView {
  ExampleList base;
  std::map<std::string, int> overrides;  // incident id -> corrected label
  std::map<std::string, std::vector<std::string>> provenance;  // id -> adjudication record ids
  std::vector<std::string> uncertain;

  /// The base view with overrides applied.
  ExampleList examples(const Corpus& corpus) const {
    ExampleList out = base;
    for (auto& e : out) {
      auto it = overrides.find(corpus[e.row].incident_id);
      if (it != overrides.end()) e.label = it->second;
    }
    return out;
  }
};

/// Applies verdicts in order: flip toggles the current label, keep and
/// uncertain leave it (uncertain ids are listed). Overrides that end equal to
/// the base label are dropped, while provenance keeps every record.
inline CorrectedView apply_corrections(const Corpus& corpus, const ExampleList& view,
                                       const std::vector<std::string>& flags,
                                       const std::vector<Adjudication>& adjudications) {
  const std::set<std::string> flagged(flags.begin(), flags.end());
  std::map<std::string, int> base_label;
  for (const auto& e : view) base_label[corpus[e.row].incident_id] = e.label;
  CorrectedView out;
  out.base = view;
  std::set<std::string> uncertain;
  for (const auto& a : adjudications) {
    if (!flagged.count(a.incident_id))
      throw DataError("adjudication for unflagged incident '" + a.incident_id + "'");
    auto it = base_label.find(a.incident_id);
    if (it == base_label.end())
      throw DataError("adjudicated incident '" + a.incident_id + "' is not in the view");
    out.provenance[a.incident_id].push_back(a.record_id());
    if (a.verdict == Verdict::flip) {
      auto cur = out.overrides.count(a.incident_id) ? out.overrides[a.incident_id] : it->second;
      out.overrides[a.incident_id] = 1 - cur;
    } else if (a.verdict == Verdict::uncertain) {
      uncertain.insert(a.incident_id);
    }
  }
  for (auto it = out.overrides.begin(); it != out.overrides.end();) {
    if (it->second == base_label[it->first])
      it = out.overrides.erase(it);
    else
      ++it;
  }
  out.uncertain.assign(uncertain.begin(), uncertain.end());
  return out;
}

inline json to_json(const CorrectedView& v, const Corpus& corpus) {
  return {{"base", ids_of(corpus, v.base)},
          {"overrides", v.overrides},
          {"provenance", v.provenance},
          {"uncertain", v.uncertain}};
}

// ---------------------------------------------------------------------------
// Removal experiment

struct RemovalConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Fixes the splits and the others sample shared by every seed; the seeds
  /// drive training order and the random-drop draw.
  std::uint64_t split_seed = 0;
};

struct RemovalArm {
  std::string name;
  std::vector<double> f1_others;  // per seed
  std::vector<double> f1_target;  // per seed, for reference
  std::vector<std::size_t> removed;
  double mean_f1_others() const { return mean(f1_others); }
};

struct RemovalExperiment {
  std::string target_source;
  std::string variable;
  std::vector<std::uint64_t> seeds;
  std::uint64_t split_seed = 0;
  std::size_t flag_count = 0;
  std::array<RemovalArm, 3> arms;  // original, flags_removed, random_dropped
  std::optional<TTestResult> t_test_flags_vs_original;
  std::optional<TTestResult> t_test_flags_vs_random;
  std::vector<std::string> notes;

  const RemovalArm& original() const { return arms[0]; }
  const RemovalArm& flags_removed() const { return arms[1]; }
  const RemovalArm& random_dropped() const { return arms[2]; }
};

namespace detail {

inline std::optional<TTestResult> try_welch(const std::vector<double>& a, const std::vector<double>& b,
                                            std::vector<std::string>& notes, const std::string& what) {
  try {
    return welch_t(a, b);
  } catch (const std::invalid_argument& e) {
    notes.push_back(what + ": " + e.what());
    return std::nullopt;
  }
}

}  // namespace detail

/// Per seed: target and the other-source pool are split 8:1:1; training is
/// the target train part plus an equal-size sample of the others' train
/// part; selection uses the others' validation part and F1 is measured on
/// the others' test part. Arms differ only in which target training
/// instances are dropped: none, the flagged ones, or as many random ones.
inline RemovalExperiment run_removal_experiment(const AuditContext& ctx,
                                                const std::vector<std::string>& flags,
                                                const RemovalConfig& config,
                                                const TrainConfig& train_config,
                                                std::size_t jobs = 1) {
  const auto& corpus = *ctx.corpus;
  if (flags.empty()) throw DataError("removal experiment needs a non-empty flag list");
  if (config.seeds.empty()) throw UsageError("removal experiment needs at least one seed");
  const std::set<std::string> flagged(flags.begin(), flags.end());
  {
    std::size_t pos = 0, pos_flagged = 0;
    for (const auto& e : ctx.data.target_view) {
      if (e.label != 1) continue;
      ++pos;
      pos_flagged += flagged.count(corpus[e.row].incident_id);
    }
    if (pos > 0 && pos_flagged == pos)
      throw DataError("every positive target instance is flagged; removal would leave no positives");
  }

  struct Plan {
    std::array<TrainingSet, 3> train;
    ExampleList validation, test_others, test_target;
    std::array<std::size_t, 3> removed{};
  };
  std::vector<Plan> plans(config.seeds.size());
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    const auto seed = config.seeds[s];
    const auto target = split_8_1_1(ctx.data.target_view, derive_seed(config.split_seed, 0x7a67u));
    const auto others = split_8_1_1(ctx.data.others_view, derive_seed(config.split_seed, 0x0e5u));
    Rng rng(derive_seed(config.split_seed, 0x0e5au));
    ExampleList others_train;
    for (auto i : sample_positions(others.train.size(), target.train.size(), rng))
      others_train.push_back(others.train[i]);

    ExampleList kept;
    std::size_t n_flagged = 0;
    for (const auto& e : target.train) {
      if (flagged.count(corpus[e.row].incident_id))
        ++n_flagged;
      else
        kept.push_back(e);
    }
    Rng drop_rng(derive_seed(seed, 0xd209u));
    const auto drop = sample_positions(target.train.size(), n_flagged, drop_rng);
    ExampleList random_kept;
    std::size_t d = 0;
    for (std::size_t i = 0; i < target.train.size(); ++i) {
      if (d < drop.size() && drop[d] == i) {
        ++d;
        continue;
      }
      random_kept.push_back(target.train[i]);
    }
    auto& p = plans[s];
    p.train[0] = TrainingSet::concat({target.train, others_train});
    p.train[1] = TrainingSet::concat({kept, others_train});
    p.train[2] = TrainingSet::concat({random_kept, others_train});
    p.removed = {0, n_flagged, n_flagged};
    p.validation = others.validation;
    p.test_others = others.test;
    p.test_target = target.test;
  }

  std::vector<std::array<double, 2>> scores(plans.size() * 3);
  parallel_for(scores.size(), jobs, [&](std::size_t task) {
    const auto& p = plans[task / 3];
    TrainConfig tc = train_config;
    tc.seed = derive_seed(train_config.seed, config.seeds[task / 3]);
    const auto ckpt = train(ctx.features, p.train[task % 3], p.validation, ctx.encoder, tc);
    scores[task] = {evaluate_f1(ckpt.model, ctx.features, p.test_others),
                    evaluate_f1(ckpt.model, ctx.features, p.test_target)};
  });

  RemovalExperiment out;
  out.target_source = ctx.target_source;
  out.variable = ctx.variable;
  out.seeds = config.seeds;
  out.split_seed = config.split_seed;
  out.flag_count = flags.size();
  const char* names[3] = {"original", "flags_removed", "random_dropped"};
  for (std::size_t a = 0; a < 3; ++a) {
    out.arms[a].name = names[a];
    for (std::size_t s = 0; s < plans.size(); ++s) {
      out.arms[a].f1_others.push_back(scores[s * 3 + a][0]);
      out.arms[a].f1_target.push_back(scores[s * 3 + a][1]);
      out.arms[a].removed.push_back(plans[s].removed[a]);
    }
  }
  out.t_test_flags_vs_original = detail::try_welch(out.arms[0].f1_others, out.arms[1].f1_others,
                                                   out.notes, "flags_removed vs original");
  out.t_test_flags_vs_random = detail::try_welch(out.arms[2].f1_others, out.arms[1].f1_others,
                                                 out.notes, "flags_removed vs random_dropped");
  return out;
}

inline json to_json(const TTestResult& t) {
  return {{"t_statistic", t.t_statistic},
          {"degrees_of_freedom", t.degrees_of_freedom},
          {"p_value", t.p_value}};
}

inline json to_json(const RemovalExperiment& r) {
  json arms = json::object();
  for (const auto& a : r.arms)
    arms[a.name] = {{"f1_others_test", a.f1_others},
                    {"f1_target_test", a.f1_target},
                    {"removed", a.removed},
                    {"mean_f1_others_test", a.mean_f1_others()}};
  auto opt = [](const std::optional<TTestResult>& t) { return t ? to_json(*t) : json(nullptr); };
  return {{"target_source", r.target_source},
          {"variable", r.variable},
          {"seeds", r.seeds},
          {"split_seed", r.split_seed},
          {"flag_count", r.flag_count},
          {"arms", arms},
          {"t_test_flags_vs_original", opt(r.t_test_flags_vs_original)},
          {"t_test_flags_vs_random", opt(r.t_test_flags_vs_random)},
          {"notes", r.notes}};
}

// ---------------------------------------------------------------------------
// Incremental training paradigm

enum class IncrementalComposition {
  OthersTarget = 0,
  OthersCorrectedTarget = 1,
  TargetOthers = 2,
  CorrectedTargetOthers = 3
};

inline std::string_view to_string(IncrementalComposition c) {
  switch (c) {
    case IncrementalComposition::OthersCorrectedTarget: return "OthersCorrectedTarget";
    case IncrementalComposition::TargetOthers: return "TargetOthers";
    case IncrementalComposition::CorrectedTargetOthers: return "CorrectedTargetOthers";
    case IncrementalComposition::OthersTarget: break;
  }
  return "OthersTarget";
}

struct IncrementalConfig {
  std::size_t step_size = 100;
  int inc_epochs = 3;
  bool cold_start = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct CurvePoint {
  std::size_t instances_fed = 0;
  double f1_target = 0;
  double f1_others = 0;
};

struct IncrementalPlan {
  IncrementalComposition composition = IncrementalComposition::OthersTarget;
  std::size_t step_size = 0;
  std::size_t total = 0;
  std::size_t boundary = 0;  // instances fed when the second segment begins
  std::vector<CurvePoint> curve;  // mean over seeds
  std::vector<std::vector<CurvePoint>> per_seed;
};

struct IncrementalResult {
  std::string target_source;
  std::string variable;
  IncrementalConfig config;
  std::array<IncrementalPlan, 4> plans;
  std::vector<std::string> warnings;

  const IncrementalPlan& plan(IncrementalComposition c) const {
    return plans[static_cast<std::size_t>(c)];
  }
};

/// Cumulative reveal points T, 2T, ..., N with a final partial step.
inline std::vector<std::size_t> reveal_points(std::size_t total, std::size_t step) {
  std::vector<std::size_t> pts;
  if (step == 0) throw UsageError("incremental step size must be >= 1");
  for (std::size_t n = step; n < total; n += step) pts.push_back(n);
  pts.push_back(total);
  return pts;
}

namespace detail {

inline std::vector<CurvePoint> run_curve(const AuditContext& ctx, const TrainingSet& ordered,
                                         const ExampleList& test_target, const ExampleList& test_others,
                                         const IncrementalConfig& config, const TrainConfig& base,
                                         std::uint64_t seed) {
  std::vector<CurvePoint> curve;
  TrainConfig tc = base;
  tc.seed = derive_seed(base.seed, seed);
  AdamTrainer warm(ctx.features.dimension(), tc);
  Rng rng(derive_seed(tc.seed, 0x1ac0u));
  for (auto n : reveal_points(ordered.examples.size(), config.step_size)) {
    const TrainingSet prefix = ordered.prefix(n);
    const LogisticModel* model = nullptr;
    AdamTrainer cold(ctx.features.dimension(), tc);
    if (config.cold_start) {
      cold.absorb(ctx.features, prefix.examples);
      for (int e = 1; e <= tc.epochs; ++e)
        cold.run_epoch(ctx.features, epoch_order(prefix, tc.curriculum_ordered, rng), e);
      model = &cold.model();
    } else {
      warm.absorb(ctx.features, prefix.examples);
      for (int e = 1; e <= config.inc_epochs; ++e)
        warm.run_epoch(ctx.features, epoch_order(prefix, tc.curriculum_ordered, rng), e);
      model = &warm.model();
    }
    curve.push_back({n, evaluate_f1(*model, ctx.features, test_target),
                     evaluate_f1(*model, ctx.features, test_others)});
  }
  return curve;
}

}  // namespace detail

/// Feeds each of the four orderings in chunks of `step_size`, continuing to
/// train the same model (or retraining from scratch with cold_start) on the
/// revealed prefix, and records F1 on the target test set (corrected labels)
/// and the others' test set after every chunk.
inline IncrementalResult run_incremental(const AuditContext& ctx, const CorrectedView& corrected,
                                         const IncrementalConfig& config,
                                         const TrainConfig& train_config, std::size_t jobs = 1) {
  const auto& corpus = *ctx.corpus;
  if (config.step_size < 1) throw UsageError("incremental step size must be >= 1");
  if (config.inc_epochs < 1) throw UsageError("incremental epochs per step must be >= 1");
  if (config.seeds.empty()) throw UsageError("incremental run needs at least one seed");
  {
    std::set<std::size_t> rows;
    for (const auto& e : ctx.data.target_view) rows.insert(e.row);
    for (const auto& e : corrected.base)
      if (!rows.count(e.row))
        throw DataError("corrected view does not match the target view");
  }
  std::map<std::size_t, int> corrected_label;
  for (const auto& e : corrected.examples(corpus)) corrected_label[e.row] = e.label;

  IncrementalResult out;
  out.target_source = ctx.target_source;
  out.variable = ctx.variable;
  out.config = config;

  struct SeedPlan {
    std::array<TrainingSet, 4> ordered;
    ExampleList test_target, test_others;
  };
  std::vector<SeedPlan> plans(config.seeds.size());
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    const auto seed = config.seeds[s];
    const auto target = split_8_1_1(ctx.data.target_view, derive_seed(seed, 0x7a67u));
    Rng rng(derive_seed(seed, 0x0e5bu));
    if (ctx.data.others_view.size() < ctx.data.target_view.size())
      throw DataError("other-source pool is smaller than the target view");
    ExampleList others_sample;
    for (auto i : sample_positions(ctx.data.others_view.size(), ctx.data.target_view.size(), rng))
      others_sample.push_back(ctx.data.others_view[i]);
    const auto others = split_8_1_1(others_sample, derive_seed(seed, 0x0e5u));
    ExampleList target_corr = target.train;
    for (auto& e : target_corr) e.label = corrected_label.at(e.row);
    auto& p = plans[s];
    p.ordered[0] = TrainingSet::concat({others.train, target.train});
    p.ordered[1] = TrainingSet::concat({others.train, target_corr});
    p.ordered[2] = TrainingSet::concat({target.train, others.train});
    p.ordered[3] = TrainingSet::concat({target_corr, others.train});
    p.test_target = target.test;
    for (auto& e : p.test_target) e.label = corrected_label.at(e.row);
    p.test_others = others.test;
  }
  const std::size_t total = plans[0].ordered[0].examples.size();
  if (config.step_size > total)
    out.warnings.push_back("step size " + std::to_string(config.step_size) +
                           " exceeds the " + std::to_string(total) +
                           " training instances; single-step run");

  std::vector<std::vector<CurvePoint>> curves(plans.size() * 4);
  parallel_for(curves.size(), jobs, [&](std::size_t task) {
    const auto& p = plans[task / 4];
    curves[task] = detail::run_curve(ctx, p.ordered[task % 4], p.test_target, p.test_others, config,
                                     train_config, config.seeds[task / 4]);
  });

  for (std::size_t c = 0; c < 4; ++c) {
    auto& plan = out.plans[c];
    plan.composition = static_cast<IncrementalComposition>(c);
    plan.step_size = config.step_size;
    plan.total = total;
    plan.boundary = plans[0].ordered[c].segment_ends.front();
    for (std::size_t s = 0; s < plans.size(); ++s) plan.per_seed.push_back(curves[s * 4 + c]);
    plan.curve = plan.per_seed[0];
    for (std::size_t i = 0; i < plan.curve.size(); ++i) {
      double ft = 0, fo = 0;
      for (const auto& sc : plan.per_seed) {
        ft += sc[i].f1_target;
        fo += sc[i].f1_others;
      }
      plan.curve[i].f1_target = ft / static_cast<double>(plan.per_seed.size());
      plan.curve[i].f1_others = fo / static_cast<double>(plan.per_seed.size());
    }
  }
  return out;
}

inline json to_json(const IncrementalResult& r) {
  json plans = json::array();
  for (const auto& p : r.plans) {
    json curve = json::array();
    for (const auto& pt : p.curve)
      curve.push_back({{"instances_fed", pt.instances_fed},
                       {"f1_target_test", pt.f1_target},
                       {"f1_others_test", pt.f1_others}});
    json per_seed = json::array();
    for (const auto& sc : p.per_seed) {
      json c = json::array();
      for (const auto& pt : sc) c.push_back({pt.instances_fed, pt.f1_target, pt.f1_others});
      per_seed.push_back(std::move(c));
    }
    plans.push_back({{"composition", to_string(p.composition)},
                     {"step_size", p.step_size},
                     {"total", p.total},
                     {"boundary", p.boundary},
                     {"curve", curve},
                     {"per_seed", per_seed}});
  }
  return {{"target_source", r.target_source},
          {"variable", r.variable},
          {"step_size", r.config.step_size},
          {"inc_epochs", r.config.inc_epochs},
          {"cold_start", r.config.cold_start},
          {"seeds", r.config.seeds},
          {"plans", plans},
          {"warnings", r.warnings}};
}

/// composition,instances_fed,f1_target,f1_others,seed rows.
inline std::string curves_csv(const IncrementalResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "composition,instances_fed,f1_target,f1_others,seed\n";
  for (const auto& p : r.plans)
    for (std::size_t s = 0; s < p.per_seed.size(); ++s)
      for (const auto& pt : p.per_seed[s])
        out << to_string(p.composition) << ',' << pt.instances_fed << ',' << pt.f1_target << ','
            << pt.f1_others << ',' << r.config.seeds[s] << '\n';
  return out.str();
}

}  // namespace labelaudit
