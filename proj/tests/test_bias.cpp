#include <gtest/gtest.h>

#include <cmath>

#include "labelaudit/bias.hpp"
#include "labelaudit/synth.hpp"

using namespace labelaudit;

namespace {

std::pair<std::vector<int>, std::vector<int>> expand(int a, int b, int c, int d) {
  std::vector<int> y, x;
  auto push = [&](int n, int yy, int xx) {
    for (int i = 0; i < n; ++i) {
      y.push_back(yy);
      x.push_back(xx);
    }
  };
  push(a, 1, 1);
  push(b, 0, 1);
  push(c, 1, 0);
  push(d, 0, 0);
  return {y, x};
}

Corpus demo_corpus() {
  Corpus c;
  const int ages[] = {23, 24, 30, 15, 40, 19};
  for (int i = 0; i < 6; ++i) {
    Incident inc;
    inc.incident_id = "d" + std::to_string(i);
    inc.source = i < 5 ? "T" : "U";
    inc.note_a = "x";
    inc.demographics.age_years = ages[i];
    inc.demographics.sex = i % 2 ? Sex::female : Sex::male;
    inc.demographics.race = i == 2 ? Race::other : (i % 3 ? Race::white : Race::black);
    inc.labels["v"] = i % 2 ? Label::present : Label::absent;
    c.add(inc);
  }
  return c;
}

}  // namespace

TEST(Logistic, WorkedExample) {
  auto [y, x] = expand(30, 70, 20, 80);
  const auto fit = fit_binary_logistic(y, x);
  EXPECT_FALSE(fit.continuity_corrected);
  const auto o = odds_ratio_ci(fit.coefficient, fit.standard_error);
  EXPECT_NEAR(o.or_value, 1.7143, 5e-5);
  EXPECT_NEAR(o.ci_low, 0.894, 2e-3);
  EXPECT_NEAR(o.ci_high, 3.285, 2e-3);
  const double se = std::sqrt(1.0 / 30 + 1.0 / 70 + 1.0 / 20 + 1.0 / 80), lor = std::log(2400.0 / 1400);
  EXPECT_NEAR(o.ci_low, std::exp(lor - 1.96 * se), 1e-9);
  EXPECT_NEAR(o.ci_high, std::exp(lor + 1.96 * se), 1e-9);
  // closed form: log cross-product ratio and Woolf standard error
  EXPECT_NEAR(fit.standard_error, std::sqrt(1.0 / 30 + 1.0 / 70 + 1.0 / 20 + 1.0 / 80), 1e-9);
  EXPECT_NEAR(fit.intercept, std::log(20.0 / 80), 1e-9);
}

TEST(Logistic, SymmetricTableAndCodingSwap) {
  auto [y, x] = expand(25, 75, 25, 75);
  EXPECT_NEAR(odds_ratio_ci(fit_binary_logistic(y, x).coefficient, 0).or_value, 1.0, 1e-12);
  auto [y2, x2] = expand(12, 40, 30, 33);
  std::vector<int> swapped;
  for (int v : x2) swapped.push_back(1 - v);
  const auto f = fit_binary_logistic(y2, x2), g = fit_binary_logistic(y2, swapped);
  EXPECT_NEAR(f.coefficient, -g.coefficient, 1e-10);
  EXPECT_NEAR(f.standard_error, g.standard_error, 1e-10);
}

TEST(Logistic, ZeroCellGetsContinuityCorrection) {
  auto [y, x] = expand(0, 10, 5, 5);
  const auto fit = fit_binary_logistic(y, x);
  EXPECT_TRUE(fit.continuity_corrected);
  EXPECT_TRUE(std::isfinite(fit.coefficient));
  EXPECT_NEAR(fit.coefficient, std::log((0.5 * 5.5) / (10.5 * 5.5)), 1e-9);
}

TEST(Logistic, RejectsMissingGroupAndBadValues) {
  EXPECT_THROW(fit_binary_logistic(std::vector<int>{1, 0}, std::vector<int>{1, 1}), std::invalid_argument);
  EXPECT_THROW(fit_binary_logistic(std::vector<int>{2, 0}, std::vector<int>{1, 0}), std::invalid_argument);
  EXPECT_THROW(fit_binary_logistic(std::vector<int>{1}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST(Logistic, RandomTablesMatchCrossProductRatio) {
  Rng rng(33);
  for (int k = 0; k < 20; ++k) {
    const int a = 1 + static_cast<int>(uniform_index(rng, 60)), b = 1 + static_cast<int>(uniform_index(rng, 60));
    const int c = 1 + static_cast<int>(uniform_index(rng, 60)), d = 1 + static_cast<int>(uniform_index(rng, 60));
    auto [y, x] = expand(a, b, c, d);
    const auto fit = fit_binary_logistic(y, x);
    const double ratio = (double(a) * d) / (double(b) * c);
    EXPECT_NEAR(std::exp(fit.coefficient), ratio, 1e-6);
    const double se = std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
    EXPECT_NEAR(odds_ratio_ci(fit.coefficient, fit.standard_error).ci_high, std::exp(std::log(ratio) + 1.96 * se), 1e-9);
  }
}

TEST(OddsRatioCi, MonotoneInSeAndZ) {
  double prev_w = 0;
  for (double se : {0.0, 0.1, 0.3, 0.9}) {
    const auto o = odds_ratio_ci(0.4, se);
    EXPECT_LE(o.ci_low, o.or_value);
    EXPECT_GE(o.ci_high, o.or_value);
    EXPECT_GE(o.ci_high - o.ci_low, prev_w);
    prev_w = o.ci_high - o.ci_low;
  }
  EXPECT_LT(odds_ratio_ci(0.4, 0.3, 1.645).ci_high, odds_ratio_ci(0.4, 0.3, 2.576).ci_high);
  EXPECT_THROW(odds_ratio_ci(0.4, -1), std::invalid_argument);
}

TEST(OddsRatioCi, LiteralVariantIsAdditive) {
  const auto o = odds_ratio_ci(std::log(1.2), 1.0, 1.96, true);
  EXPECT_NEAR(o.ci_low, 1.2 - 1.96, 1e-12);
  EXPECT_NEAR(o.ci_high, 1.2 + 1.96, 1e-12);
}

TEST(GroupSpec, YouthCutoffAndCoding) {
  GroupSpec age{DemographicAxis::age};
  Demographics d;
  d.age_years = 23;
  EXPECT_EQ(age.code(d), 1);
  d.age_years = 24;
  EXPECT_EQ(age.code(d), 0);
  d.age_years.reset();
  EXPECT_EQ(age.code(d), std::nullopt);
  GroupSpec race{DemographicAxis::race};
  d.race = Race::other;
  EXPECT_EQ(race.code(d), std::nullopt);
}

TEST(BiasAnalysis, CountsExclusionsAndIdenticalVariants) {
  const auto corpus = demo_corpus();
  const auto variants = build_bias_variants(corpus, "v", "T", {"d1"}, 1);
  ASSERT_EQ(variants.size(), 3u);
  EXPECT_EQ(variants[0].examples.size(), 5u);
  EXPECT_EQ(variants[1].examples.size(), 4u);
  EXPECT_EQ(variants[2].examples.size(), 4u);
  const auto r = run_bias_analysis(corpus, "v", {variants[0], {"copy", variants[0].examples}},
                                   default_group_specs());
  ASSERT_EQ(r.records.size(), 6u);
  const auto& age = r.records[0];
  EXPECT_EQ(age.axis, "age");
  EXPECT_EQ(age.comparison_total, 2u);  // 23 and 15
  EXPECT_EQ(age.reference_total, 3u);
  EXPECT_EQ(r.records[1].excluded, 1u);  // race other
  for (std::size_t i = 0; i < 3; ++i) {
    auto a = to_json(r.records[i]), b = to_json(r.records[i + 3]);
    a.erase("annotation_variant");
    b.erase("annotation_variant");
    EXPECT_EQ(a, b);
  }
}

TEST(BiasAnalysis, EmptyGroupWarnsAndSkips) {
  Corpus c;
  for (int i = 0; i < 4; ++i) {
    Incident inc;
    inc.incident_id = "m" + std::to_string(i);
    inc.source = "T";
    inc.note_a = "x";
    inc.demographics.sex = Sex::male;
    inc.demographics.age_years = 30 - i * 5;
    inc.labels["v"] = i % 2 ? Label::present : Label::absent;
    c.add(inc);
  }
  const auto r = run_bias_analysis(c, "v", build_bias_variants(c, "v", "T", {}, 1),
                                   {GroupSpec{DemographicAxis::sex}});
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.warnings.size(), 3u);
}

TEST(ORRecord, JsonRoundTripAndTable) {
  SynthSpec s;
  s.sources = 2;
  s.instances_per_source = 300;
  s.seed = 4;
  const auto out = generate(s);
  const auto r = run_bias_analysis(out.corpus, "crisis", build_bias_variants(out.corpus, "crisis", "S00", {}, 2),
                                   default_group_specs());
  ASSERT_FALSE(r.records.empty());
  for (const auto& rec : r.records) EXPECT_EQ(to_json(or_record_from_json(to_json(rec))), to_json(rec));
  const auto csv = bias_table_csv(r.records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "variable,variant,age_or_ci,age_comparison_count,age_reference_count,race_or_ci,"
            "race_comparison_count,race_reference_count,sex_or_ci,sex_comparison_count,sex_reference_count");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(BiasVariants, RandomDropRemovesSameCountDeterministically) {
  SynthSpec s;
  s.sources = 1;
  s.instances_per_source = 200;
  const auto out = generate(s);
  std::vector<std::string> flags = {"S00-00003", "S00-00010", "S00-00150"};
  const auto a = build_bias_variants(out.corpus, "crisis", "S00", flags, 9);
  const auto b = build_bias_variants(out.corpus, "crisis", "S00", flags, 9);
  EXPECT_EQ(a[2].examples, b[2].examples);
  EXPECT_EQ(a[1].examples.size(), 197u);
  EXPECT_EQ(a[2].examples.size(), 197u);
}
