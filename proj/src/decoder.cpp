#include "cfd/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "cfd/error.hpp"
#include "cfd/kernels.hpp"

namespace cfd {
namespace {

// log(0) would turn 0 * -inf into NaN; clamp first.
constexpr double kLogFloor = 1e-300;

std::vector<double> log_probs(const NextTokenDistribution& p) {
  std::vector<double> out(p.size());
  std::transform(p.probs().begin(), p.probs().end(), out.begin(),
                 [](double x) { return std::log(std::max(x, kLogFloor)); });
  return out;
}

NextTokenDistribution query(const LanguageModel& lm, std::span<const TokenId> prefix, const char* stream,
                            std::size_t step) {
  try {
    return lm.next_distribution(prefix);
  } catch (const std::exception& e) {
    throw DecodeError(stream, step, e.what());
  }
}

void apply_plausibility_floor(std::vector<double>& scores, const NextTokenDistribution& p_fact, double floor) {
  if (floor <= 0.0) return;
  const auto keep = kernels::argmax(p_fact.probs());
  for (std::size_t t = 0; t < scores.size(); ++t)
    if (t != keep && p_fact.probs()[t] < floor) scores[t] = -std::numeric_limits<double>::infinity();
}

Response make_response(const LanguageModel& lm, TokenSeq ids) {
  Response r;
  r.text = lm.detokenize(ids);
  r.token_ids = std::move(ids);
  return r;
}

nlohmann::json scored_json(const ScoredTokens& v, const LanguageModel& lm) {
  auto arr = nlohmann::json::array();
  for (const auto& [id, x] : v) arr.push_back(nlohmann::json::array({id.value, lm.token_text(id), x}));
  return arr;
}

nlohmann::json context_json(const Context& c) {
  auto tokens = nlohmann::json::array();
  for (TokenId t : c.tokens) tokens.push_back(t.value);
  return {{"provenance", to_string(c.provenance)},
          {"text", c.text},
          {"tokens", std::move(tokens)},
          {"selected_knowledge_ids", c.selected_knowledge_ids}};
}

}  // namespace

std::string_view to_string(ScoreSpace s) { return s == ScoreSpace::Probability ? "probability" : "log"; }

ScoreSpace score_space_from_string(std::string_view s) {
  if (s == "probability" || s == "prob") return ScoreSpace::Probability;
  if (s == "log") return ScoreSpace::Log;
  throw DomainError("unknown score space \"" + std::string(s) + "\"");
}

std::string_view to_string(StopReason r) { return r == StopReason::Eos ? "eos" : "max_tokens"; }

void DecodeParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  if (!(strength >= 0.0) || !std::isfinite(strength)) throw DomainError("strength must be >= 0");
  if (top_k_remote < 1) throw DomainError("top_k_remote must be positive");
  if (!(min_factual_prob >= 0.0 && min_factual_prob <= 1.0))
    throw DomainError("min_factual_prob must lie in [0, 1]");
}

double decay(std::size_t i, double alpha) {
  if (i < 1) throw DomainError("decay step index must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  return std::pow(alpha, static_cast<double>(i - 1));
}

std::vector<double> combine_step(const NextTokenDistribution& p_fact, const NextTokenDistribution& p_cf,
                                 double lambda_i, double strength, ScoreSpace space) {
  if (p_fact.size() != p_cf.size())
    throw SizeMismatchError("factual and counterfactual distributions have sizes " +
                            std::to_string(p_fact.size()) + " and " + std::to_string(p_cf.size()));
  std::vector<double> out(p_fact.size());
  const double factor = strength * lambda_i;
  if (space == ScoreSpace::Probability) {
    kernels::scaled_subtract(p_fact.probs(), p_cf.probs(), factor, out);
  } else {
    auto lf = log_probs(p_fact), lc = log_probs(p_cf);
    kernels::scaled_subtract(lf, lc, factor, out);
  }
  return out;
}

ScoredTokens top_k(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  ScoredTokens out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.emplace_back(TokenId{static_cast<std::int32_t>(idx[j])}, values[idx[j]]);
  return out;
}

DecodeResult greedy_decode(const LanguageModel& lm, const Context& context, const DecodeParams& params) {
  params.validate();
  const TokenId eos = params.eos_id.value_or(lm.eos_id());
  DecodeResult result;
  result.trace.factual = context;

  TokenSeq prefix = context.tokens;
  TokenSeq generated;
  for (std::size_t i = 1; i <= params.max_new_tokens; ++i) {
    auto p = query(lm, prefix, "factual", i);
    std::vector<double> scores(p.probs().begin(), p.probs().end());
    apply_plausibility_floor(scores, p, params.min_factual_prob);

    DecodeStep step;
    step.i = i;
    step.chosen = TokenId{static_cast<std::int32_t>(kernels::argmax(scores))};
    step.p_fact_topk = top_k(p.probs(), params.trace_top_k);
    step.combined_topk = top_k(scores, params.trace_top_k);
    if (params.record_full_scores) step.combined = scores;
    const TokenId chosen = step.chosen;
    result.trace.steps.push_back(std::move(step));

    if (chosen == eos) {
      result.trace.stop_reason = StopReason::Eos;
      break;
    }
    generated.push_back(chosen);
    prefix.push_back(chosen);
  }
  result.response = make_response(lm, std::move(generated));
  return result;
}

DecodeResult counterfactual_decode(const LanguageModel& lm, const Context& factual, const Context& counterfactual,
                                   const DecodeParams& params) {
  params.validate();
  const TokenId eos = params.eos_id.value_or(lm.eos_id());
  DecodeResult result;
  result.trace.factual = factual;
  result.trace.counterfactual = counterfactual;

  TokenSeq prefix_f = factual.tokens;
  TokenSeq prefix_cf = counterfactual.tokens;
  TokenSeq generated;
  for (std::size_t i = 1; i <= params.max_new_tokens; ++i) {
    std::optional<NextTokenDistribution> p_f, p_cf;
    if (params.parallel_streams) {
      auto cf_future = std::async(std::launch::async, [&] { return query(lm, prefix_cf, "counterfactual", i); });
      std::exception_ptr factual_error;
      try {
        p_f.emplace(query(lm, prefix_f, "factual", i));
      } catch (...) {
        factual_error = std::current_exception();
      }
      p_cf.emplace(cf_future.get());
      if (factual_error) std::rethrow_exception(factual_error);
    } else {
      p_f.emplace(query(lm, prefix_f, "factual", i));
      p_cf.emplace(query(lm, prefix_cf, "counterfactual", i));
    }

    DecodeStep step;
    step.i = i;
    step.lambda_i = decay(i, params.alpha);
    auto scores = combine_step(*p_f, *p_cf, step.lambda_i, params.strength, params.score_space);
    apply_plausibility_floor(scores, *p_f, params.min_factual_prob);
    step.chosen = TokenId{static_cast<std::int32_t>(kernels::argmax(scores))};
    step.p_fact_topk = top_k(p_f->probs(), params.trace_top_k);
    step.p_cf_topk = top_k(p_cf->probs(), params.trace_top_k);
    step.combined_topk = top_k(scores, params.trace_top_k);
    if (params.record_full_scores) step.combined = std::move(scores);
    const TokenId chosen = step.chosen;
    result.trace.steps.push_back(std::move(step));

    // Only the combined argmax can stop the decode.
    if (chosen == eos) {
      result.trace.stop_reason = StopReason::Eos;
      break;
    }
    generated.push_back(chosen);
    prefix_f.push_back(chosen);
    prefix_cf.push_back(chosen);
  }
  result.response = make_response(lm, std::move(generated));
  return result;
}

nlohmann::json to_json(const DecodeTrace& trace, const LanguageModel& lm) {
  nlohmann::json j;
  j["stop_reason"] = to_string(trace.stop_reason);
  j["contexts"]["factual"] = context_json(trace.factual);
  if (trace.counterfactual) j["contexts"]["counterfactual"] = context_json(*trace.counterfactual);
  auto& steps = j["steps"] = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"i", s.i},
                     {"chosen", s.chosen.value},
                     {"chosen_text", lm.token_text(s.chosen)},
                     {"lambda_i", s.lambda_i},
                     {"p_fact_topk", scored_json(s.p_fact_topk, lm)},
                     {"p_cf_topk", scored_json(s.p_cf_topk, lm)},
                     {"combined_topk", scored_json(s.combined_topk, lm)}});
  }
  return j;
}

}  // namespace cfd
