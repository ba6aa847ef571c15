#pragma once

// Synthetic multi-source corpora with known label noise.
//
// Every incident has a true class and a sub-theme. Notes mix theme tokens of
// that class and sub-theme (rate `signal_strength`) with shared filler. Sub-
// theme 0 of each class is "contested": with the contested selection, a noisy
// source flips those instances first, which models a source whose annotators
// follow a different convention for one kind of case. Uniform selection flips
// eligible instances at random.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/random.hpp"

namespace labelaudit {

enum class FlipDirection { symmetric, pos_to_neg, neg_to_pos };
enum class FlipSelection { contested, uniform };

struct NoisePlan {
  double flip_rate = 0.0;
  FlipDirection direction = FlipDirection::symmetric;
  FlipSelection selection = FlipSelection::contested;
  /// Restricts flips to one demographic group: youth, adult, black, white,
  /// female or male. Empty means everyone.
  std::string subgroup;
};

struct SynthVocab {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::string> filler;
};

struct SynthSpec {
  std::size_t sources = 10;
  std::size_t instances_per_source = 600;
  std::string variable = "crisis";
  std::string source_prefix = "S";
  SynthVocab vocab;  // generated from the sizes below when empty
  std::size_t theme_tokens = 30;
  std::size_t filler_tokens = 400;
  std::size_t subthemes = 3;
  std::size_t note_tokens = 30;
  double signal_strength = 0.04;
  double positive_fraction = 0.5;
  std::map<std::string, NoisePlan> noise_plan;  // keyed by source name
  double youth_rate = 0.2;
  double female_rate = 0.35;
  double black_rate = 0.2;
  double white_rate = 0.7;
  double unknown_age_rate = 0.02;
  std::uint64_t seed = 1;
};

inline std::string synth_source_name(const SynthSpec& spec, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return spec.source_prefix + buf;
}

struct NoiseLedger {
  std::vector<std::string> flipped_ids;  // sorted
  std::map<std::string, std::size_t> per_source;

  bool contains(const std::string& id) const {
    return std::binary_search(flipped_ids.begin(), flipped_ids.end(), id);
  }
};

inline json to_json(const NoiseLedger& l) {
  return {{"flipped_ids", l.flipped_ids}, {"per_source", l.per_source}};
}

inline NoiseLedger noise_ledger_from_json(const json& j) {
  NoiseLedger l;
  l.flipped_ids = j.at("flipped_ids").get<std::vector<std::string>>();
  std::sort(l.flipped_ids.begin(), l.flipped_ids.end());
  l.per_source = j.at("per_source").get<std::map<std::string, std::size_t>>();
  return l;
}

struct SynthOutput {
  Corpus corpus;
  NoiseLedger ledger;
  std::map<std::string, int> true_labels;
  std::map<std::string, std::size_t> subtheme;
};

inline FlipDirection flip_direction_from_string(const std::string& s) {
  if (s == "symmetric") return FlipDirection::symmetric;
  if (s == "pos_to_neg") return FlipDirection::pos_to_neg;
  if (s == "neg_to_pos") return FlipDirection::neg_to_pos;
  throw UsageError("unknown flip direction '" + s + "'");
}

inline std::string to_string(FlipDirection d) {
  switch (d) {
    case FlipDirection::pos_to_neg: return "pos_to_neg";
    case FlipDirection::neg_to_pos: return "neg_to_pos";
    case FlipDirection::symmetric: break;
  }
  return "symmetric";
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.sources = j.value("sources", s.sources);
  s.instances_per_source = j.value("instances_per_source", s.instances_per_source);
  s.variable = j.value("variable", s.variable);
  s.source_prefix = j.value("source_prefix", s.source_prefix);
  if (j.contains("vocab")) {
    const auto& v = j.at("vocab");
    s.vocab.positive = v.value("positive", std::vector<std::string>{});
    s.vocab.negative = v.value("negative", std::vector<std::string>{});
    s.vocab.filler = v.value("filler", std::vector<std::string>{});
  }
  s.theme_tokens = j.value("theme_tokens", s.theme_tokens);
  s.filler_tokens = j.value("filler_tokens", s.filler_tokens);
  s.subthemes = j.value("subthemes", s.subthemes);
  s.note_tokens = j.value("note_tokens", s.note_tokens);
  s.signal_strength = j.value("signal_strength", s.signal_strength);
  s.positive_fraction = j.value("positive_fraction", s.positive_fraction);
  s.youth_rate = j.value("youth_rate", s.youth_rate);
  s.female_rate = j.value("female_rate", s.female_rate);
  s.black_rate = j.value("black_rate", s.black_rate);
  s.white_rate = j.value("white_rate", s.white_rate);
  s.unknown_age_rate = j.value("unknown_age_rate", s.unknown_age_rate);
  s.seed = j.value("seed", s.seed);
  if (j.contains("noise_plan")) {
    for (const auto& [src, p] : j.at("noise_plan").items()) {
      NoisePlan plan;
      plan.flip_rate = p.value("flip_rate", 0.0);
      plan.direction = flip_direction_from_string(p.value("direction", std::string("symmetric")));
      const auto sel = p.value("selection", std::string("contested"));
      if (sel == "contested")
        plan.selection = FlipSelection::contested;
      else if (sel == "uniform")
        plan.selection = FlipSelection::uniform;
      else
        throw UsageError("unknown flip selection '" + sel + "'");
      plan.subgroup = p.value("subgroup", std::string{});
      s.noise_plan[src] = plan;
    }
  }
  return s;
}

inline json to_json(const SynthSpec& s) {
  json plan = json::object();
  for (const auto& [src, p] : s.noise_plan)
    plan[src] = {{"flip_rate", p.flip_rate},
                 {"direction", to_string(p.direction)},
                 {"selection", p.selection == FlipSelection::contested ? "contested" : "uniform"},
                 {"subgroup", p.subgroup}};
  return {{"sources", s.sources},
          {"instances_per_source", s.instances_per_source},
          {"variable", s.variable},
          {"source_prefix", s.source_prefix},
          {"vocab",
           {{"positive", s.vocab.positive},
            {"negative", s.vocab.negative},
            {"filler", s.vocab.filler}}},
          {"theme_tokens", s.theme_tokens},
          {"filler_tokens", s.filler_tokens},
          {"subthemes", s.subthemes},
          {"note_tokens", s.note_tokens},
          {"signal_strength", s.signal_strength},
          {"positive_fraction", s.positive_fraction},
          {"noise_plan", plan},
          {"youth_rate", s.youth_rate},
          {"female_rate", s.female_rate},
          {"black_rate", s.black_rate},
          {"white_rate", s.white_rate},
          {"unknown_age_rate", s.unknown_age_rate},
          {"seed", s.seed}};
}

namespace detail {

inline std::vector<std::string> numbered_tokens(const std::string& stem, std::size_t n) {
  std::vector<std::string> v;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%03zu", i);
    v.push_back(stem + buf);
  }
  return v;
}

inline bool in_subgroup(const Incident& inc, const std::string& subgroup) {
  const auto& d = inc.demographics;
  if (subgroup.empty()) return true;
  if (subgroup == "youth") return d.age_years && *d.age_years < 24;
  if (subgroup == "adult") return d.age_years && *d.age_years >= 24;
  if (subgroup == "black") return d.race == Race::black;
  if (subgroup == "white") return d.race == Race::white;
  if (subgroup == "female") return d.sex == Sex::female;
  if (subgroup == "male") return d.sex == Sex::male;
  throw UsageError("unknown noise subgroup '" + subgroup + "'");
}

}  // namespace detail

inline SynthVocab resolved_vocab(const SynthSpec& spec) {
  SynthVocab v = spec.vocab;
  if (v.positive.empty()) v.positive = detail::numbered_tokens("pos", spec.theme_tokens);
  if (v.negative.empty()) v.negative = detail::numbered_tokens("neg", spec.theme_tokens);
  if (v.filler.empty()) v.filler = detail::numbered_tokens("fill", spec.filler_tokens);
  return v;
}

inline SynthOutput generate(const SynthSpec& spec) {
  const SynthVocab vocab = resolved_vocab(spec);
  if (vocab.positive.empty() || vocab.negative.empty() || vocab.filler.empty())
    throw UsageError("synthetic vocabulary has an empty token class");
  {
    std::set<std::string> pos(vocab.positive.begin(), vocab.positive.end());
    for (const auto& t : vocab.negative)
      if (pos.count(t)) throw UsageError("theme token '" + t + "' is in both theme sets");
  }
  if (spec.subthemes < 1) throw UsageError("synth.subthemes must be >= 1");
  if (spec.subthemes > vocab.positive.size() || spec.subthemes > vocab.negative.size())
    throw UsageError("synth.subthemes exceeds the theme vocabulary size");
  for (const auto& [src, plan] : spec.noise_plan)
    if (!(plan.flip_rate >= 0 && plan.flip_rate < 0.5))
      throw UsageError("flip_rate for '" + src + "' must lie in [0, 0.5)");

  // Theme tokens of each class are dealt round-robin into sub-themes.
  auto subtheme_tokens = [&](const std::vector<std::string>& theme, std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = k; i < theme.size(); i += spec.subthemes) out.push_back(theme[i]);
    return out;
  };
  std::vector<std::vector<std::string>> pos_sub, neg_sub;
  for (std::size_t k = 0; k < spec.subthemes; ++k) {
    pos_sub.push_back(subtheme_tokens(vocab.positive, k));
    neg_sub.push_back(subtheme_tokens(vocab.negative, k));
  }

  SynthOutput out;
  std::set<std::string> known_sources;
  for (std::size_t s = 0; s < spec.sources; ++s) {
    const std::string source = synth_source_name(spec, s);
    known_sources.insert(source);
    Rng rng(derive_seed(spec.seed, 0x5157u, s));
    const std::size_t n = spec.instances_per_source;
    const auto n_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * n));
    std::vector<int> truth(n, 0);
    for (std::size_t i = 0; i < n_pos && i < n; ++i) truth[i] = 1;
    shuffle(truth, rng);

    std::vector<Incident> incidents(n);
    std::vector<std::size_t> themes(n);
    for (std::size_t i = 0; i < n; ++i) {
      Incident inc;
      char buf[32];
      std::snprintf(buf, sizeof buf, "-%05zu", i);
      inc.incident_id = source + buf;
      inc.source = source;
      const std::size_t sub = static_cast<std::size_t>(uniform_index(rng, spec.subthemes));
      const auto& theme = truth[i] ? pos_sub[sub] : neg_sub[sub];
      auto note = [&] {
        std::string text;
        for (std::size_t t = 0; t < spec.note_tokens; ++t) {
          if (t) text.push_back(' ');
          if (uniform_unit(rng) < spec.signal_strength)
            text += theme[uniform_index(rng, theme.size())];
          else
            text += vocab.filler[uniform_index(rng, vocab.filler.size())];
        }
        return text;
      };
      inc.note_a = note();
      inc.note_b = note();
      if (uniform_unit(rng) < spec.unknown_age_rate) {
        uniform_unit(rng);
      } else if (uniform_unit(rng) < spec.youth_rate) {
        inc.demographics.age_years = 12 + static_cast<int>(uniform_index(rng, 12));
      } else {
        inc.demographics.age_years = 24 + static_cast<int>(uniform_index(rng, 67));
      }
      inc.demographics.sex = uniform_unit(rng) < spec.female_rate ? Sex::female : Sex::male;
      const double u = uniform_unit(rng);
      inc.demographics.race = u < spec.black_rate                    ? Race::black
                              : u < spec.black_rate + spec.white_rate ? Race::white
                                                                      : Race::other;
      inc.labels[spec.variable] = truth[i] ? Label::present : Label::absent;
      out.true_labels[inc.incident_id] = truth[i];
      out.subtheme[inc.incident_id] = sub;
      themes[i] = sub;
      incidents[i] = std::move(inc);
    }

    auto it = spec.noise_plan.find(source);
    const NoisePlan plan = it == spec.noise_plan.end() ? NoisePlan{} : it->second;
    const auto count = static_cast<std::size_t>(std::llround(plan.flip_rate * static_cast<double>(n)));
    // Symmetric noise takes half of the flips from each class so class
    // balance survives; the odd flip comes from the positives.
    std::array<std::size_t, 2> quota{0, 0};
    if (plan.direction == FlipDirection::pos_to_neg)
      quota[1] = count;
    else if (plan.direction == FlipDirection::neg_to_pos)
      quota[0] = count;
    else
      quota = {count / 2, count - count / 2};
    Rng flip_rng(derive_seed(spec.seed, 0xf11bu, s));
    std::vector<std::size_t> chosen;
    for (int cls = 0; cls < 2; ++cls) {
      const auto need = quota[static_cast<std::size_t>(cls)];
      if (!need) continue;
      std::vector<std::size_t> preferred, rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (truth[i] != cls || !detail::in_subgroup(incidents[i], plan.subgroup)) continue;
        (plan.selection == FlipSelection::contested && themes[i] == 0 ? preferred : rest).push_back(i);
      }
      if (preferred.size() + rest.size() < need)
        throw UsageError("source '" + source + "' has only " +
                         std::to_string(preferred.size() + rest.size()) + " " +
                         (cls ? "positive" : "negative") +
                         " instances eligible for flipping, need " + std::to_string(need));
      shuffle(preferred, flip_rng);
      shuffle(rest, flip_rng);
      preferred.insert(preferred.end(), rest.begin(), rest.end());
      chosen.insert(chosen.end(), preferred.begin(), preferred.begin() + static_cast<std::ptrdiff_t>(need));
    }
    for (auto i : chosen) {
      incidents[i].labels[spec.variable] = truth[i] ? Label::absent : Label::present;
      out.ledger.flipped_ids.push_back(incidents[i].incident_id);
    }
    if (count) out.ledger.per_source[source] = count;
    for (auto& inc : incidents) out.corpus.add(std::move(inc));
  }
  for (const auto& [src, _] : spec.noise_plan)
    if (!known_sources.count(src))
      throw UsageError("noise plan names unknown source '" + src + "'");
  std::sort(out.ledger.flipped_ids.begin(), out.ledger.flipped_ids.end());
  return out;
}

}  // namespace labelaudit
