#include <gtest/gtest.h>

#include <algorithm>

#include "labelaudit/context.hpp"
#include "labelaudit/inconsistency.hpp"
#include "labelaudit/synth.hpp"

using namespace labelaudit;

namespace {

ExampleList rows(std::size_t begin, std::size_t n) {
  ExampleList v;
  for (std::size_t i = 0; i < n; ++i) v.push_back({begin + i, static_cast<int>(i % 2)});
  return v;
}

std::vector<std::size_t> sorted_rows(const ExampleList& v) {
  std::vector<std::size_t> r;
  for (const auto& e : v) r.push_back(e.row);
  std::sort(r.begin(), r.end());
  return r;
}

SynthOutput small_synth(double flip_rate = 0.0) {
  SynthSpec s;
  s.sources = 4;
  s.instances_per_source = 120;
  s.signal_strength = 0.2;
  s.seed = 3;
  if (flip_rate > 0) s.noise_plan["S00"] = {flip_rate, FlipDirection::symmetric, FlipSelection::contested, ""};
  return generate(s);
}

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs = 3;
  t.learning_rate = 0.01;
  return t;
}

InconsistencyConfig quick_config() {
  InconsistencyConfig c;
  c.m = 2;
  c.seeds = {1, 2};
  return c;
}

}  // namespace

TEST(Compositions, EqualSizesFromEightyPercentSplits) {
  auto p = make_partition("T", rows(0, 100), rows(1000, 450), 4, 1);
  auto comps = build_compositions(p, 0, 7);
  for (const auto& c : comps) EXPECT_EQ(c.train.examples.size(), 160u);
}

TEST(Compositions, MixedOrdersShareMultisetAndPureHasNoTarget) {
  auto p = make_partition("T", rows(0, 100), rows(1000, 450), 4, 1);
  auto comps = build_compositions(p, 2, 7);
  const auto& ot = comps[1].train;
  const auto& to = comps[2].train;
  EXPECT_EQ(sorted_rows(ot.examples), sorted_rows(to.examples));
  EXPECT_EQ(ot.segment_ends, (std::vector<std::size_t>{80, 160}));
  EXPECT_EQ(std::vector(ot.examples.begin(), ot.examples.begin() + 80),
            std::vector(to.examples.begin() + 80, to.examples.end()));
  for (const auto& e : comps[0].train.examples) EXPECT_GE(e.row, 1000u);
  // second PureOthers segment lies outside subset j
  const auto subset = sorted_rows(p.exclusive_subsets[2]);
  for (std::size_t i = 80; i < 160; ++i)
    EXPECT_FALSE(std::binary_search(subset.begin(), subset.end(), comps[0].train.examples[i].row));
}

TEST(Compositions, TestSetsDisjointFromTraining) {
  auto p = make_partition("T", rows(0, 100), rows(1000, 450), 4, 1);
  for (std::size_t j = 0; j < 4; ++j) {
    auto comps = build_compositions(p, j, 3);
    for (const auto& c : comps) {
      auto train = sorted_rows(c.train.examples);
      for (const auto* test : {&c.test_target, &c.test_others, &c.validation})
        for (const auto& e : *test) EXPECT_FALSE(std::binary_search(train.begin(), train.end(), e.row));
    }
  }
}

TEST(Compositions, InsufficientSecondSampleErrors) {
  auto p = make_partition("T", rows(0, 100), rows(1000, 150), 1, 1);
  EXPECT_THROW(build_compositions(p, 0, 1), DataError);
  EXPECT_THROW(build_compositions(p, 3, 1), UsageError);
}

TEST(DeltaF1, Arithmetic) {
  EXPECT_NEAR(delta_f1(0.60, 0.68, 0.66), 0.07, 1e-12);
  EXPECT_EQ(delta_f1(0.5, 0.5, 0.5), 0.0);
  EXPECT_EQ(delta_f1(1.0, 0.0, 0.0), -1.0);
  EXPECT_EQ(delta_f1(0.3, 0.9, 0.1), delta_f1(0.3, 0.1, 0.9));
}

TEST(DeltaF1, AggregationOrder) {
  // subset 0 has two seeds, subset 1 one seed: seed mean first, then subset mean.
  std::vector<F1GridEntry> grid = {
      {0, 1, CompositionKind::PureOthers, 0.2, 0.4, 1}, {0, 2, CompositionKind::PureOthers, 0.4, 0.4, 1},
      {1, 1, CompositionKind::PureOthers, 0.6, 0.4, 1}, {0, 1, CompositionKind::OthersTarget, 0.5, 0.5, 1},
      {1, 1, CompositionKind::OthersTarget, 0.5, 0.5, 1}, {0, 1, CompositionKind::TargetOthers, 0.7, 0.3, 1},
      {1, 1, CompositionKind::TargetOthers, 0.7, 0.3, 1}};
  auto a = aggregate_grid(grid);
  EXPECT_NEAR(a.target["PureOthers"], 0.45, 1e-12);
  EXPECT_NEAR(a.delta_target, 0.6 - 0.45, 1e-12);
  EXPECT_NEAR(a.delta_others, 0.0, 1e-12);
}

TEST(StateInconsistency, RecomputedDeltasMatchAndJobsDoNotMatter) {
  const auto out = small_synth(0.2);
  const auto ctx = make_context(out.corpus, "crisis", "S00", {}, {});
  const auto r1 = run_state_inconsistency(ctx, quick_config(), quick_train(), 1);
  const auto r2 = run_state_inconsistency(ctx, quick_config(), quick_train(), 3);
  EXPECT_EQ(to_json(r1).dump(), to_json(r2).dump());
  EXPECT_EQ(r1.grid.size(), 2u * 2u * 3u);
  const auto agg = aggregate_grid(r1.grid);
  EXPECT_EQ(agg.delta_target, r1.delta_f1_target);
  EXPECT_EQ(agg.delta_others, r1.delta_f1_others);
  const auto back = delta_report_from_json(to_json(r1));
  EXPECT_EQ(to_json(back).dump(), to_json(r1).dump());
}

TEST(StateInconsistency, UnorderedMixedCompositionsTrainIdentically) {
  const auto out = small_synth();
  const auto ctx = make_context(out.corpus, "crisis", "S00", {}, {});
  auto p = make_partition("S00", ctx.data.target_view, ctx.data.others_view, 2, 0);
  auto comps = build_compositions(p, 0, 1);
  auto tc = quick_train();
  tc.curriculum_ordered = false;
  auto a = train(ctx.features, comps[1].train, comps[1].validation, ctx.encoder, tc);
  auto b = train(ctx.features, comps[2].train, comps[2].validation, ctx.encoder, tc);
  EXPECT_EQ(a.model, b.model);
}

TEST(StateInconsistency, SummaryCountsPositiveTargets) {
  std::vector<DeltaF1Report> reports(5);
  reports[0].delta_f1_target = 0.1;
  reports[1].delta_f1_target = -0.1;
  reports[2].delta_f1_target = 0.02;
  reports[3].delta_f1_target = 0.0;
  reports[4].delta_f1_target = 0.3;
  EXPECT_EQ(summarize_sources(reports).text(), "3 of 5 positive");
}
