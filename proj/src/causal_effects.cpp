#include "cfd/causal_effects.hpp"

#include <future>

#include "cfd/error.hpp"
#include "cfd/kernels.hpp"

namespace cfd {
namespace {

NextTokenDistribution query(const LanguageModel& lm, std::span<const TokenId> prefix, const char* label,
                            std::size_t step) {
  try {
    return lm.next_distribution(prefix);
  } catch (const std::exception& e) {
    throw DecodeError(label, step, e.what());
  }
}

TokenSeq extend(const Context& ctx, std::span<const TokenId> generated, std::size_t n) {
  TokenSeq out = ctx.tokens;
  out.insert(out.end(), generated.begin(), generated.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace

EffectVectors step_effects(const NextTokenDistribution& p_dk, const NextTokenDistribution& p_dstar_k,
                           const NextTokenDistribution& p_dstar_kstar) {
  const auto n = p_dk.size();
  if (p_dstar_k.size() != n || p_dstar_kstar.size() != n)
    throw SizeMismatchError("effect distributions have sizes " + std::to_string(n) + ", " +
                            std::to_string(p_dstar_k.size()) + ", " + std::to_string(p_dstar_kstar.size()));
  EffectVectors e{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  kernels::subtract(p_dk.probs(), p_dstar_k.probs(), e.tde);
  kernels::subtract(p_dstar_k.probs(), p_dstar_kstar.probs(), e.pie);
  kernels::subtract(p_dk.probs(), p_dstar_kstar.probs(), e.te);
  return e;
}

double decomposition_residual(const EffectVectors& effects) {
  return kernels::max_abs_residual(effects.te, effects.tde, effects.pie);
}

EffectNorms norms(const EffectVectors& effects) {
  return {kernels::l1_norm(effects.te), kernels::l1_norm(effects.tde), kernels::l1_norm(effects.pie)};
}

EffectTrace trace_effects(const LanguageModel& lm, const Context& factual, const Context& counterfactual,
                          const Context& null_ctx, std::span<const TokenId> generated,
                          const EffectTraceOptions& opts) {
  EffectTrace trace;
  double l1_sum = 0.0;
  for (std::size_t i = 1; i <= generated.size(); ++i) {
    auto pf = extend(factual, generated, i - 1);
    auto pcf = extend(counterfactual, generated, i - 1);
    auto pn = extend(null_ctx, generated, i - 1);

    std::optional<NextTokenDistribution> d_f, d_cf, d_n;
    if (opts.parallel_queries) {
      auto f_cf = std::async(std::launch::async, [&] { return query(lm, pcf, "counterfactual", i); });
      auto f_n = std::async(std::launch::async, [&] { return query(lm, pn, "null", i); });
      std::exception_ptr err;
      try {
        d_f.emplace(query(lm, pf, "factual", i));
      } catch (...) {
        err = std::current_exception();
      }
      // Join both futures before propagating anything.
      try {
        d_cf.emplace(f_cf.get());
      } catch (...) {
        if (!err) err = std::current_exception();
      }
      try {
        d_n.emplace(f_n.get());
      } catch (...) {
        if (!err) err = std::current_exception();
      }
      if (err) std::rethrow_exception(err);
    } else {
      d_f.emplace(query(lm, pf, "factual", i));
      d_cf.emplace(query(lm, pcf, "counterfactual", i));
      d_n.emplace(query(lm, pn, "null", i));
    }

    EffectStep step;
    step.step = i;
    step.effects = step_effects(*d_f, *d_cf, *d_n);
    step.norms = norms(step.effects);

    std::vector<double> negated(step.effects.tde.size());
    for (std::size_t t = 0; t < negated.size(); ++t) negated[t] = -step.effects.tde[t];
    for (auto [id, v] : top_k(negated, opts.top_suppressed))
      step.top_suppressed.emplace_back(id, step.effects.tde[static_cast<std::size_t>(id.value)]);

    l1_sum += step.norms.l1_tde;
    trace.steps.push_back(std::move(step));
  }
  if (!trace.steps.empty()) trace.mean_l1_tde = l1_sum / static_cast<double>(trace.steps.size());
  return trace;
}

EffectTrace trace_effects(const LanguageModel& lm, const Context& null_ctx, const DecodeTrace& decode,
                          const EffectTraceOptions& opts) {
  if (!decode.counterfactual) throw DomainError("effect tracing needs a counterfactual decode trace");
  TokenSeq chosen;
  for (const auto& s : decode.steps) chosen.push_back(s.chosen);
  return trace_effects(lm, decode.factual, *decode.counterfactual, null_ctx, chosen, opts);
}

nlohmann::json to_json(const EffectTrace& trace, const LanguageModel& lm) {
  nlohmann::json j;
  j["mean_l1_tde"] = trace.mean_l1_tde;
  auto& steps = j["steps"] = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    auto suppressed = nlohmann::json::array();
    for (const auto& [id, v] : s.top_suppressed) suppressed.push_back(nlohmann::json::array({lm.token_text(id), v}));
    steps.push_back({{"step", s.step},
                     {"top_suppressed", std::move(suppressed)},
                     {"norms", {{"l1_te", s.norms.l1_te}, {"l1_tde", s.norms.l1_tde}, {"l1_pie", s.norms.l1_pie}}}});
  }
  return j;
}

}  // namespace cfd
