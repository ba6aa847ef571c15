#pragma once

// Risk-of-bias analysis: one logistic regression per (annotation variant,
// demographic contrast) with a single binary predictor, reported as an odds
// ratio with a Wald confidence interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/random.hpp"

namespace labelaudit {

enum class DemographicAxis { age, race, sex };

inline std::string_view to_string(DemographicAxis a) {
  switch (a) {
    case DemographicAxis::race: return "race";
    case DemographicAxis::sex: return "sex";
    case DemographicAxis::age: break;
  }
  return "age";
}

/// Comparison group coded 1 versus reference group coded 0; instances in
/// neither group are left out of that regression.
struct GroupSpec {
  DemographicAxis axis = DemographicAxis::age;
  int youth_cutoff = 24;  // age < cutoff is youth

  std::string_view comparison_name() const {
    switch (axis) {
      case DemographicAxis::race: return "black";
      case DemographicAxis::sex: return "female";
      case DemographicAxis::age: break;
    }
    return "youth";
  }
  std::string_view reference_name() const {
    switch (axis) {
      case DemographicAxis::race: return "white";
      case DemographicAxis::sex: return "male";
      case DemographicAxis::age: break;
    }
    return "adult";
  }

  /// 1 comparison, 0 reference, nullopt for neither.
  std::optional<int> code(const Demographics& d) const {
    switch (axis) {
      case DemographicAxis::age:
        if (!d.age_years) return std::nullopt;
        return *d.age_years < youth_cutoff ? 1 : 0;
      case DemographicAxis::race:
        if (d.race == Race::black) return 1;
        if (d.race == Race::white) return 0;
        return std::nullopt;
      case DemographicAxis::sex:
        if (d.sex == Sex::female) return 1;
        if (d.sex == Sex::male) return 0;
        return std::nullopt;
    }
    return std::nullopt;
  }
};

inline std::vector<GroupSpec> default_group_specs() {
  return {GroupSpec{DemographicAxis::age}, GroupSpec{DemographicAxis::race},
          GroupSpec{DemographicAxis::sex}};
}

struct LogisticFit {
  double coefficient = 0;
  double intercept = 0;
  double standard_error = 0;
  bool continuity_corrected = false;
  int iterations = 0;
};

/// 2x2 cell counts: a/b comparison positive/negative, c/d reference.
struct TwoByTwo {
  double a = 0, b = 0, c = 0, d = 0;
};

/// Newton-Raphson on the two-parameter log-likelihood of a binary predictor,
/// written over cell weights so the continuity-corrected table can be fit the
/// same way. Stops when the gradient norm drops below 1e-10.
inline LogisticFit fit_table(const TwoByTwo& t) {
  // groups: x=1 (a positives, b negatives), x=0 (c positives, d negatives)
  double b0 = 0, b1 = 0;
  LogisticFit fit;
  double h00 = 0, h01 = 0, h11 = 0;
  for (int it = 0; it < 200; ++it) {
    const double p1 = 1.0 / (1.0 + std::exp(-(b0 + b1)));
    const double p0 = 1.0 / (1.0 + std::exp(-b0));
    const double n1 = t.a + t.b, n0 = t.c + t.d;
    const double r1 = t.a - n1 * p1, r0 = t.c - n0 * p0;
    const double g0 = r1 + r0, g1 = r1;
    const double w1 = n1 * p1 * (1 - p1), w0 = n0 * p0 * (1 - p0);
    h00 = w1 + w0;
    h01 = w1;
    h11 = w1;
    fit.iterations = it;
    if (std::hypot(g0, g1) < 1e-10) break;
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0)) break;
    b0 += (h11 * g0 - h01 * g1) / det;
    b1 += (h00 * g1 - h01 * g0) / det;
  }
  const double det = h00 * h11 - h01 * h01;
  fit.intercept = b0;
  fit.coefficient = b1;
  fit.standard_error = det > 0 ? std::sqrt(h00 / det) : std::numeric_limits<double>::infinity();
  return fit;
}

/// Maximum-likelihood fit of outcome ~ predictor. A zero cell (complete or
/// quasi separation) gets 0.5 added to every cell and the record is flagged.
inline LogisticFit fit_binary_logistic(std::span<const int> outcomes, std::span<const int> predictor) {
  if (outcomes.size() != predictor.size())
    throw std::invalid_argument("fit_binary_logistic: length mismatch");
  TwoByTwo t;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const int y = outcomes[i], x = predictor[i];
    if ((y != 0 && y != 1) || (x != 0 && x != 1))
      throw std::invalid_argument("fit_binary_logistic: values must be 0 or 1");
    (x ? (y ? t.a : t.b) : (y ? t.c : t.d)) += 1;
  }
  if (t.a + t.b == 0 || t.c + t.d == 0)
    throw std::invalid_argument("fit_binary_logistic: both predictor groups must be present");
  bool corrected = false;
  if (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0) {
    t.a += 0.5;
    t.b += 0.5;
    t.c += 0.5;
    t.d += 0.5;
    corrected = true;
  }
  auto fit = fit_table(t);
  fit.continuity_corrected = corrected;
  return fit;
}

struct OddsRatio {
  double or_value = 1;
  double ci_low = 1;
  double ci_high = 1;
};

/// e^coef with interval e^(coef -/+ z SE). paper_literal evaluates
/// e^coef -/+ z SE instead, which can go negative; it exists for comparison.
inline OddsRatio odds_ratio_ci(double coefficient, double standard_error, double z = 1.96,
                               bool paper_literal = false) {
  if (standard_error < 0) throw std::invalid_argument("standard error must be non-negative");
  OddsRatio o;
  o.or_value = std::exp(coefficient);
  if (paper_literal) {
    o.ci_low = o.or_value - z * standard_error;
    o.ci_high = o.or_value + z * standard_error;
  } else {
    o.ci_low = std::exp(coefficient - z * standard_error);
    o.ci_high = std::exp(coefficient + z * standard_error);
  }
  return o;
}

struct AnnotationVariant {
  std::string name;  // original, flags_removed, random_dropped
  ExampleList examples;
};

struct ORRecord {
  std::string variable;
  std::string annotation_variant;
  std::string axis;
  std::string comparison;
  std::string reference;
  std::size_t comparison_count = 0;  // positive-labeled
  std::size_t reference_count = 0;   // positive-labeled
  std::size_t comparison_total = 0;
  std::size_t reference_total = 0;
  std::size_t excluded = 0;  // in neither group
  double coefficient = 0;
  double intercept = 0;
  double standard_error = 0;
  double or_value = 1;
  double ci_low = 1;
  double ci_high = 1;
  bool continuity_corrected = false;
};

struct BiasOptions {
  double z = 1.96;
  bool paper_literal = false;
};

struct BiasAnalysis {
  std::vector<ORRecord> records;
  std::vector<std::string> warnings;
};

inline BiasAnalysis run_bias_analysis(const Corpus& corpus, const std::string& variable,
                                      const std::vector<AnnotationVariant>& variants,
                                      const std::vector<GroupSpec>& groups,
                                      const BiasOptions& options = {}) {
  BiasAnalysis out;
  for (const auto& variant : variants) {
    for (const auto& g : groups) {
      ORRecord rec;
      rec.variable = variable;
      rec.annotation_variant = variant.name;
      rec.axis = std::string(to_string(g.axis));
      rec.comparison = std::string(g.comparison_name());
      rec.reference = std::string(g.reference_name());
      std::vector<int> y, x;
      for (const auto& e : variant.examples) {
        auto code = g.code(corpus[e.row].demographics);
        if (!code) {
          ++rec.excluded;
          continue;
        }
        y.push_back(e.label);
        x.push_back(*code);
        if (*code) {
          ++rec.comparison_total;
          rec.comparison_count += e.label;
        } else {
          ++rec.reference_total;
          rec.reference_count += e.label;
        }
      }
      if (rec.comparison_total == 0 || rec.reference_total == 0) {
        out.warnings.push_back(variant.name + "/" + rec.axis + ": empty " +
                               (rec.comparison_total == 0 ? rec.comparison : rec.reference) +
                               " group, skipped");
        continue;
      }
      const auto fit = fit_binary_logistic(y, x);
      const auto ci = odds_ratio_ci(fit.coefficient, fit.standard_error, options.z, options.paper_literal);
      rec.coefficient = fit.coefficient;
      rec.intercept = fit.intercept;
      rec.standard_error = fit.standard_error;
      rec.or_value = ci.or_value;
      rec.ci_low = ci.ci_low;
      rec.ci_high = ci.ci_high;
      rec.continuity_corrected = fit.continuity_corrected;
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

inline json to_json(const ORRecord& r) {
  return {{"variable", r.variable},
          {"annotation_variant", r.annotation_variant},
          {"axis", r.axis},
          {"comparison", r.comparison},
          {"reference", r.reference},
          {"comparison_count", r.comparison_count},
          {"reference_count", r.reference_count},
          {"comparison_total", r.comparison_total},
          {"reference_total", r.reference_total},
          {"excluded", r.excluded},
          {"coefficient", r.coefficient},
          {"intercept", r.intercept},
          {"standard_error", r.standard_error},
          {"or_value", r.or_value},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"continuity_corrected", r.continuity_corrected}};
}

inline ORRecord or_record_from_json(const json& j) {
  ORRecord r;
  r.variable = j.at("variable");
  r.annotation_variant = j.at("annotation_variant");
  r.axis = j.at("axis");
  r.comparison = j.at("comparison");
  r.reference = j.at("reference");
  r.comparison_count = j.at("comparison_count");
  r.reference_count = j.at("reference_count");
  r.comparison_total = j.at("comparison_total");
  r.reference_total = j.at("reference_total");
  r.excluded = j.at("excluded");
  r.coefficient = j.at("coefficient");
  r.intercept = j.at("intercept");
  r.standard_error = j.at("standard_error");
  r.or_value = j.at("or_value");
  r.ci_low = j.at("ci_low");
  r.ci_high = j.at("ci_high");
  r.continuity_corrected = j.at("continuity_corrected");
  return r;
}

/// Variant rows by group columns; cells read "OR[low;high]" to two decimals,
/// with the positive counts in their own columns.
inline std::string bias_table_csv(const std::vector<ORRecord>& records) {
  std::vector<std::string> variants, axes;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : records) {
    add_unique(variants, r.annotation_variant);
    add_unique(axes, r.axis);
  }
  std::ostringstream out;
  out << "variable,variant";
  for (const auto& a : axes) out << ',' << a << "_or_ci," << a << "_comparison_count," << a << "_reference_count";
  out << '\n';
  char buf[96];
  for (const auto& v : variants) {
    out << (records.empty() ? "" : records.front().variable) << ',' << v;
    for (const auto& a : axes) {
      auto it = std::find_if(records.begin(), records.end(), [&](const ORRecord& r) {
        return r.annotation_variant == v && r.axis == a;
      });
      if (it == records.end()) {
        out << ",,,";
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.2f[%.2f;%.2f]", it->or_value, it->ci_low, it->ci_high);
      out << ',' << buf << ',' << it->comparison_count << ',' << it->reference_count;
    }
    out << '\n';
  }
  return out.str();
}

/// original: every coded target-source instance; flags_removed: minus the
/// flagged ids; random_dropped: minus as many random instances as flags removed.
inline std::vector<AnnotationVariant> build_bias_variants(const Corpus& corpus,
                                                          const std::string& variable,
                                                          const std::string& target_source,
                                                          const std::vector<std::string>& flags,
                                                          std::uint64_t seed) {
  const std::set<std::string> flagged(flags.begin(), flags.end());
  AnnotationVariant original{"original", {}}, removed{"flags_removed", {}}, dropped{"random_dropped", {}};
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& inc = corpus[r];
    if (inc.source != target_source) continue;
    auto l = inc.label(variable);
    if (!l) continue;
    original.examples.push_back({r, *l});
    if (!flagged.count(inc.incident_id)) removed.examples.push_back({r, *l});
  }
  const std::size_t n_removed = original.examples.size() - removed.examples.size();
  Rng rng(derive_seed(seed, 0xb1a5u));
  const auto drop = sample_positions(original.examples.size(), n_removed, rng);
  std::size_t d = 0;
  for (std::size_t i = 0; i < original.examples.size(); ++i) {
    if (d < drop.size() && drop[d] == i) {
      ++d;
      continue;
    }
    dropped.examples.push_back(original.examples[i]);
  }
  return {original, removed, dropped};
}

}  // namespace labelaudit
