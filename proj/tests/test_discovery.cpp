#include <gtest/gtest.h>

#include <filesystem>
#include <memory>
#include <fstream>
#include <numeric>

#include "labelaudit/context.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/synth.hpp"

using namespace labelaudit;

namespace {

struct Fixture {
  SynthOutput synth;
  AuditContext ctx;
};

const Fixture& separable() {
  static const std::unique_ptr<Fixture> f = [] {
    auto x = std::make_unique<Fixture>();
    SynthSpec s;
    s.sources = 4;
    s.instances_per_source = 100;
    s.signal_strength = 0.5;
    s.seed = 12;
    s.noise_plan["S00"] = {0.1, FlipDirection::symmetric, FlipSelection::uniform, ""};
    x->synth = generate(s);
    x->ctx = make_context(x->synth.corpus, "crisis", "S00", {}, {});
    return x;
  }();
  return *f;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs = 5;
  t.learning_rate = 0.02;
  return t;
}

}  // namespace

TEST(Folds, SizesDifferByAtMostOneLowestGetExtra) {
  Rng rng(1);
  for (std::size_t n : {10u, 11u, 14u, 103u}) {
    auto fold = deal_folds(n, 5, rng);
    std::vector<std::size_t> size(5, 0);
    for (int f : fold) ++size[static_cast<std::size_t>(f)];
    EXPECT_EQ(std::accumulate(size.begin(), size.end(), std::size_t{0}), n);
    for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(size[f], n / 5 + (f < n % 5 ? 1 : 0));
  }
}

TEST(Threshold, CountFourNotFlaggedAtFive) {
  std::map<std::string, int> counts{{"a", 4}, {"b", 5}, {"c", 0}};
  EXPECT_EQ(apply_threshold(counts, 5), std::vector<std::string>{"b"});
}

TEST(Threshold, PropertyLoweringNeverRemovesFlags) {
  Rng rng(4);
  std::map<std::string, int> counts;
  for (int i = 0; i < 200; ++i) counts["id" + std::to_string(i)] = static_cast<int>(uniform_index(rng, 6));
  for (int t = 5; t > 1; --t) {
    auto hi = apply_threshold(counts, t), lo = apply_threshold(counts, t - 1);
    EXPECT_TRUE(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
  }
}

TEST(Summary, PercentOneDecimal) {
  auto s = summarize_flags(159, 1077);
  EXPECT_EQ(s.percent, 14.8);
  EXPECT_EQ(summarize_flags(0, 500).percent, 0.0);
  EXPECT_EQ(summarize_flags(294, 6019).percent, 4.9);
}

TEST(ConfigValidation, Rejects) {
  DiscoveryConfig c;
  c.threshold = 6;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.k = 1;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.seeds = {1, 2};
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_EQ(discovery_config_from_json({{"repetitions", 3}, {"threshold", 3}}).seeds,
            (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Discovery, FlipsCountFiveCleanCountZero) {
  const auto& f = separable();
  const auto ledger = run_discovery(f.ctx, DiscoveryConfig{}, quick_train(), 1);
  EXPECT_EQ(ledger.counts.size(), f.ctx.data.target_view.size());
  std::size_t flips = 0, flips_at_five = 0, clean = 0, clean_at_zero = 0;
  for (const auto& [id, c] : ledger.counts) {
    EXPECT_GE(c, 0);
    EXPECT_LE(c, 5);
    if (f.synth.ledger.contains(id)) {
      ++flips;
      flips_at_five += c == 5;
    } else {
      ++clean;
      clean_at_zero += c == 0;
    }
  }
  ASSERT_GT(flips, 0u);
  EXPECT_GE(static_cast<double>(flips_at_five) / flips, 0.8);
  EXPECT_GE(static_cast<double>(clean_at_zero) / clean, 0.9);
  std::size_t hist_total = 0;
  for (const auto& [c, n] : ledger.histogram) hist_total += n;
  EXPECT_EQ(hist_total, ledger.counts.size());
  EXPECT_EQ(ledger.flags, apply_threshold(ledger.counts, 5));
}

TEST(Discovery, ScheduleIndependentAndReproducible) {
  const auto& f = separable();
  DiscoveryConfig c;
  c.k = 3;
  c.repetitions = 2;
  c.seeds = {7, 8};
  c.threshold = 2;
  c.record_all = true;
  const auto a = run_discovery(f.ctx, c, quick_train(), 1);
  const auto b = run_discovery(f.ctx, c, quick_train(), 4);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(histogram_csv(a), histogram_csv(b));
  EXPECT_EQ(a.other_counts.size(), f.ctx.data.others_view.size());
}

TEST(Ledger, JsonRoundTripAndHistogramCsv) {
  const auto& f = separable();
  DiscoveryConfig c;
  c.k = 2;
  c.repetitions = 1;
  c.seeds = {1};
  c.threshold = 1;
  const auto l = run_discovery(f.ctx, c, quick_train(), 1);
  const auto path = std::filesystem::temp_directory_path() / "labelaudit_ledger.json";
  std::ofstream(path) << to_json(l).dump();
  const auto back = load_ledger(path);
  EXPECT_EQ(to_json(back).dump(), to_json(l).dump());
  std::filesystem::remove(path);
  std::string expected = "count,frequency\n";
  std::map<int, std::size_t> h;
  for (const auto& [id, n] : l.counts) ++h[n];
  for (const auto& [n, k] : h) expected += std::to_string(n) + "," + std::to_string(k) + "\n";
  EXPECT_EQ(histogram_csv(l), expected);
}
