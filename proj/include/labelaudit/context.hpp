#pragma once

#include <string>
#include <vector>

#include "labelaudit/corpus.hpp"
#include "labelaudit/encoder.hpp"

namespace labelaudit {

/// Prepared views of one (variable, target source) audit plus their features.
/// Holds a reference to the corpus, which must outlive it.
struct AuditContext {
  const Corpus* corpus = nullptr;
  std::string variable;
  std::string target_source;
  PreparedData data;
  EncoderConfig encoder;
  FeatureStore features;
};

inline AuditContext make_context(const Corpus& corpus, const std::string& variable,
                                 const std::string& target_source, const PrepareOptions& options,
                                 const EncoderConfig& encoder) {
  AuditContext ctx;
  ctx.corpus = &corpus;
  ctx.variable = variable;
  ctx.target_source = target_source;
  ctx.data = prepare(corpus, variable, target_source, options);
  ctx.encoder = encoder;
  std::vector<std::size_t> rows;
  rows.reserve(ctx.data.target_view.size() + ctx.data.others_view.size());
  for (const auto& e : ctx.data.target_view) rows.push_back(e.row);
  for (const auto& e : ctx.data.others_view) rows.push_back(e.row);
  ctx.features = FeatureStore(corpus, encoder, rows);
  return ctx;
}

}  // namespace labelaudit
