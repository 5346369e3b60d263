#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfd/context_builder.hpp"
#include "cfd/lm_provider.hpp"

namespace cfd {

// How the two streams' distributions are combined before the argmax.
//   Probability: p_fact - s * lambda * p_cf            (default)
//   Log:         log p_fact - s * lambda * log p_cf    (contrastive-style variant)
enum class ScoreSpace { Probability, Log };

std::string_view to_string(ScoreSpace s);
ScoreSpace score_space_from_string(std::string_view s);

struct DecodeParams {
  double alpha = 0.3;
  // Multiplier on the counterfactual penalty: 1 is the plain method, 0 turns
  // counterfactual decoding into greedy decoding.
  double strength = 1.0;
  std::size_t max_new_tokens = 64;
  // Defaults to the provider's eos token.
  std::optional<TokenId> eos_id;
  NullMode null_mode = NullMode::QueryOnly;
  int top_k_remote = 50;

  ScoreSpace score_space = ScoreSpace::Probability;
  // Extension, off at 0: tokens whose factual probability is below this value
  // cannot be chosen (the factual argmax always stays eligible).
  double min_factual_prob = 0.0;
  // Query the two streams concurrently. Output does not depend on it.
  bool parallel_streams = false;
  // Keep the full combined score vector of every step in the trace.
  bool record_full_scores = false;
  std::size_t trace_top_k = 10;

  // Throws DomainError when a bound is violated.
  void validate() const;
};

using ScoredTokens = std::vector<std::pair<TokenId, double>>;

struct DecodeStep {
  std::size_t i = 0;  // 1-based
  TokenId chosen;
  // alpha^(i-1) for counterfactual decoding; 0 for the greedy baseline.
  double lambda_i = 0.0;
  ScoredTokens p_fact_topk;
  ScoredTokens p_cf_topk;
  ScoredTokens combined_topk;
  // Only filled when DecodeParams::record_full_scores is set.
  std::vector<double> combined;
};

enum class StopReason { Eos, MaxTokens };

std::string_view to_string(StopReason r);

struct DecodeTrace {
  std::vector<DecodeStep> steps;
  Context factual;
  std::optional<Context> counterfactual;
  StopReason stop_reason = StopReason::MaxTokens;
};

// Generated tokens without the terminating eos, and their text.
struct Response {
  TokenSeq token_ids;
  std::string text;
};

struct DecodeResult {
  Response response;
  DecodeTrace trace;
};

// lambda(i) = alpha^(i-1), with decay(1, alpha) = 1 for every alpha.
double decay(std::size_t i, double alpha);

// Elementwise p_fact - strength * lambda * p_cf. Not renormalized; entries
// may be negative.
std::vector<double> combine_step(const NextTokenDistribution& p_fact, const NextTokenDistribution& p_cf,
                                 double lambda_i, double strength,
                                 ScoreSpace space = ScoreSpace::Probability);

// Top-k entries by value, ties broken by lowest id.
ScoredTokens top_k(std::span<const double> values, std::size_t k);

// Single-stream argmax decoding on one context.
DecodeResult greedy_decode(const LanguageModel& lm, const Context& context, const DecodeParams& params);

// Dual-stream decoding: at step i both contexts are extended with the same
// generated tokens w_1..w_{i-1} and w_i is the argmax of
// combine_step(p(factual), p(counterfactual), decay(i, alpha), strength).
DecodeResult counterfactual_decode(const LanguageModel& lm, const Context& factual, const Context& counterfactual,
                                   const DecodeParams& params);

// Trace file representation. Token strings come from `lm`.
nlohmann::json to_json(const DecodeTrace& trace, const LanguageModel& lm);

}  // namespace cfd
