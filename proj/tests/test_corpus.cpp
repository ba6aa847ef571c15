#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "labelaudit/corpus.hpp"

using namespace labelaudit;

namespace {

std::string line(const std::string& id, const std::string& source, const std::string& labels,
                 const std::string& note = "the victim argued with family") {
  return R"({"incident_id":")" + id + R"(","source":")" + source + R"(","note_a":")" + note +
         R"(","note_b":"","age":30,"sex":"male","race":"white","labels":)" + labels + "}\n";
}

IngestResult ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest_jsonl(in);
}

// source -> (positives, negatives)
Corpus make_corpus(const std::vector<std::tuple<std::string, int, int>>& sources) {
  Corpus c;
  int n = 0;
  for (const auto& [src, pos, neg] : sources) {
    for (int i = 0; i < pos + neg; ++i) {
      Incident inc;
      inc.incident_id = src + "-" + std::to_string(n++);
      inc.source = src;
      inc.note_a = "note";
      inc.labels["family"] = i < pos ? Label::present : Label::absent;
      c.add(inc);
    }
  }
  return c;
}

ExampleList all_examples(const Corpus& c, const std::string& var) {
  ExampleList v;
  for (std::size_t r = 0; r < c.size(); ++r)
    if (auto l = c[r].label(var)) v.push_back({r, *l});
  return v;
}

}  // namespace

TEST(Ingest, WellFormedLines) {
  auto r = ingest_text(line("a", "OH", R"({"family":1})") + line("b", "OH", R"({"family":0})") +
                       line("c", "CO", R"({"family":"unknown"})"));
  EXPECT_EQ(r.corpus.size(), 3u);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_EQ(r.corpus[0].label("family"), 1);
  EXPECT_EQ(r.corpus[2].label("family"), std::nullopt);
}

TEST(Ingest, BadLabelTokenIsReportedWithLine) {
  auto r = ingest_text(line("a", "OH", R"({"family":1})") + line("b", "OH", R"({"family":"2"})"));
  EXPECT_EQ(r.corpus.size(), 1u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].line, 2u);
  EXPECT_NE(r.rejected[0].message.find("family"), std::string::npos);
}

TEST(Ingest, DuplicateIdIsFatal) {
  EXPECT_THROW(ingest_text(line("X1", "OH", R"({"family":1})") + line("X1", "CO", R"({"family":0})")),
               DataError);
}

TEST(Ingest, MissingSourceIsFatal) {
  EXPECT_THROW(ingest_text(R"({"incident_id":"a","note_a":"x","labels":{}})" "\n"), DataError);
}

TEST(Ingest, BothNotesEmptyIsRejected) {
  auto r = ingest_text(line("a", "OH", R"({"family":1})", ""));
  EXPECT_EQ(r.corpus.size(), 0u);
  EXPECT_EQ(r.rejected.size(), 1u);
}

TEST(Ingest, CsvMapsColumnsByHeader) {
  std::istringstream in(
      "source,incident_id,note_a,note_b,age,sex,race,family\n"
      "OH,a,\"quoted, with comma\",,19,female,black,1\n"
      "CO,b,\"multi\nline\",x,,male,white,0\n"
      "CO,c,note,,abc,male,white,0\n");
  auto r = ingest_csv(in);
  ASSERT_EQ(r.corpus.size(), 2u);
  EXPECT_EQ(r.corpus[0].note_a, "quoted, with comma");
  EXPECT_EQ(r.corpus[0].demographics.age_years, 19);
  EXPECT_EQ(r.corpus[1].note_a, "multi\nline");
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].line, 5u);
}

TEST(Ingest, JsonlRoundTrip) {
  auto r = ingest_text(line("a", "OH", R"({"family":1,"mental":"unknown"})") + line("b", "CO", R"({"family":0})"));
  std::ostringstream out;
  write_jsonl(r.corpus, out);
  auto again = ingest_text(out.str());
  std::ostringstream out2;
  write_jsonl(again.corpus, out2);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(Exclusion, BoundaryIsFewerThanTen) {
  auto c = make_corpus({{"AL", 4, 20}, {"OH", 470, 607}, {"TX", 10, 30}});
  auto r = exclude_sparse_sources(c, "family");
  EXPECT_EQ(r.retained(), (std::set<std::string>{"OH", "TX"}));
  EXPECT_EQ(r.corpus.size(), 470u + 607 + 40);
  for (const auto& e : r.log)
    if (e.source == "AL") EXPECT_TRUE(e.excluded);
}

TEST(Exclusion, UnknownVariableErrors) {
  auto c = make_corpus({{"OH", 10, 10}});
  EXPECT_THROW(exclude_sparse_sources(c, "nope"), DataError);
}

TEST(Balance, OhioFamilyShape) {
  auto c = make_corpus({{"OH", 470, 607}});
  auto r = balance(c, "family", 7);
  EXPECT_EQ(r.view.size(), 940u);
  EXPECT_EQ(count_positive(r.view), 470u);
}

TEST(Balance, NoPositivesGivesEmptyView) {
  auto c = make_corpus({{"A", 0, 50}});
  EXPECT_TRUE(balance(c, "family", 1).view.empty());
}

TEST(Balance, SameSeedSameSelection) {
  auto c = make_corpus({{"A", 30, 100}, {"B", 20, 90}});
  EXPECT_EQ(balance(c, "family", 3).view, balance(c, "family", 3).view);
  EXPECT_NE(balance(c, "family", 3).view, balance(c, "family", 4).view);
}

TEST(Balance, MorePositivesNeedsFlag) {
  auto c = make_corpus({{"A", 30, 10}});
  EXPECT_THROW(balance(c, "family", 1), DataError);
  BalanceOptions o;
  o.allow_unbalanced = true;
  auto r = balance(c, "family", 1, o);
  EXPECT_EQ(r.view.size(), 40u);
  EXPECT_EQ(r.unbalanced_sources, std::vector<std::string>{"A"});
}

TEST(Balance, PropertyKeepsAllPositivesOneToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int pos = 1 + static_cast<int>(uniform_index(rng, 40));
    const int neg = pos + static_cast<int>(uniform_index(rng, 40));
    auto c = make_corpus({{"A", pos, neg}, {"B", pos + 3, neg + 5}});
    auto v = balance(c, "family", seed).view;
    std::size_t pa = 0, na = 0;
    for (const auto& e : v) {
      if (c[e.row].source != "A") continue;
      (e.label ? pa : na)++;
    }
    EXPECT_EQ(pa, static_cast<std::size_t>(pos));
    EXPECT_EQ(na, pa);
  }
}

TEST(Split, SizesFollowRoundingRule) {
  auto s = split_sizes(940);
  EXPECT_EQ(s.train, 752u);
  EXPECT_EQ(s.validation, 94u);
  EXPECT_EQ(s.test, 94u);
  s = split_sizes(101);
  EXPECT_EQ(s.train, 80u);
  EXPECT_EQ(s.validation, 11u);
  EXPECT_EQ(s.test, 10u);
}

TEST(Split, TooSmallErrors) {
  auto c = make_corpus({{"A", 4, 5}});
  EXPECT_THROW(split_8_1_1(all_examples(c, "family"), 1), DataError);
}

TEST(Split, StratifiedOnToyView) {
  auto c = make_corpus({{"A", 10, 10}});
  auto p = split_8_1_1(all_examples(c, "family"), 9);
  EXPECT_EQ(p.train.size(), 16u);
  EXPECT_EQ(p.validation.size(), 2u);
  EXPECT_EQ(p.test.size(), 2u);
  for (const auto* part : {&p.train, &p.validation, &p.test}) {
    const double half = part->size() / 2.0;
    EXPECT_LE(std::abs(static_cast<double>(count_positive(*part)) - half), 1.0);
  }
}

TEST(Split, PropertyPartitionAndBalance) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const int n = 5 + static_cast<int>(seed * 7 % 200);
    auto c = make_corpus({{"A", n, n}});
    const auto view = all_examples(c, "family");
    auto p = split_8_1_1(view, seed);
    const auto s = split_sizes(view.size());
    EXPECT_EQ(p.train.size(), s.train);
    EXPECT_EQ(p.validation.size(), s.validation);
    EXPECT_EQ(p.test.size(), s.test);
    std::set<std::size_t> rows;
    for (const auto* part : {&p.train, &p.validation, &p.test})
      for (const auto& e : *part) rows.insert(e.row);
    EXPECT_EQ(rows.size(), view.size());
    for (const auto* part : {&p.validation, &p.test})
      EXPECT_LE(std::abs(static_cast<double>(count_positive(*part)) - part->size() / 2.0), 1.0);
  }
}

TEST(Subsets, FourDisjointOfHundred) {
  auto c = make_corpus({{"OTHER", 225, 225}});
  auto subsets = sample_exclusive_subsets(all_examples(c, "family"), 100, 4, 5);
  ASSERT_EQ(subsets.size(), 4u);
  std::set<std::size_t> seen;
  for (const auto& s : subsets) {
    EXPECT_EQ(s.size(), 100u);
    for (const auto& e : s) EXPECT_TRUE(seen.insert(e.row).second);
  }
}

TEST(Subsets, ShortfallNamesAmount) {
  auto c = make_corpus({{"OTHER", 175, 175}});
  try {
    sample_exclusive_subsets(all_examples(c, "family"), 100, 4, 5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("short by 50"), std::string::npos);
  }
}

TEST(Prepare, PureFunctionOfInputs) {
  auto c = make_corpus({{"OH", 40, 90}, {"CO", 50, 70}, {"AL", 3, 40}});
  PrepareOptions o;
  o.data_seed = 11;
  auto a = prepare(c, "family", "OH", o);
  auto b = prepare(c, "family", "OH", o);
  EXPECT_EQ(a.target_view, b.target_view);
  EXPECT_EQ(a.others_view, b.others_view);
  for (const auto& e : a.others_view) EXPECT_EQ(c[e.row].source, "CO");
  EXPECT_THROW(prepare(c, "family", "AL", o), DataError);
}
