#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "cfd/context_builder.hpp"
#include "cfd/decoder.hpp"
#include "cfd/lm_provider.hpp"

namespace cfd {

// Next-token effects of the dialogue at one decode step, over the vocabulary:
//   tde = p(C_{d,k})  - p(C_{d*,k})
//   pie = p(C_{d*,k}) - p(C_{d*,K_{d*}})
//   te  = p(C_{d,k})  - p(C_{d*,K_{d*}})
struct EffectVectors {
  std::vector<double> te;
  std::vector<double> tde;
  std::vector<double> pie;
};

// Only the decomposition TE = TDE + PIE is implemented. The other pair
// (pure direct / total indirect) is reserved.
enum class EffectKind { TotalDirect, PureIndirect, Total };

EffectVectors step_effects(const NextTokenDistribution& p_dk, const NextTokenDistribution& p_dstar_k,
                           const NextTokenDistribution& p_dstar_kstar);

// max_i |te_i - tde_i - pie_i|
double decomposition_residual(const EffectVectors& effects);

struct EffectNorms {
  double l1_te = 0.0;
  double l1_tde = 0.0;
  double l1_pie = 0.0;
};

EffectNorms norms(const EffectVectors& effects);

struct EffectStep {
  std::size_t step = 0;  // 1-based
  EffectVectors effects;
  EffectNorms norms;
  // Most negative tde entries: tokens the dialogue pushes down the hardest.
  ScoredTokens top_suppressed;
};

struct EffectTrace {
  std::vector<EffectStep> steps;
  double mean_l1_tde = 0.0;
};

struct EffectTraceOptions {
  std::size_t top_suppressed = 10;
  bool parallel_queries = false;
};

// For each generated position i, query the three contexts extended with the
// shared prefix w_1..w_{i-1}. The trace has one step per generated token.
EffectTrace trace_effects(const LanguageModel& lm, const Context& factual, const Context& counterfactual,
                          const Context& null_ctx, std::span<const TokenId> generated,
                          const EffectTraceOptions& opts = {});

// Steps aligned with a decode trace: the token chosen at every step,
// including a final eos, is one position.
EffectTrace trace_effects(const LanguageModel& lm, const Context& null_ctx, const DecodeTrace& decode,
                          const EffectTraceOptions& opts = {});

nlohmann::json to_json(const EffectTrace& trace, const LanguageModel& lm);

}  // namespace cfd
