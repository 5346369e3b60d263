#include "cfd/pipeline.hpp"

#include "cfd/error.hpp"

namespace cfd {

std::string_view to_string(DecodeMode m) { return m == DecodeMode::Plain ? "plain" : "ah"; }

DecodeMode decode_mode_from_string(std::string_view s) {
  if (s == "plain") return DecodeMode::Plain;
  if (s == "ah") return DecodeMode::Ah;
  throw DomainError("unknown decode mode \"" + std::string(s) + "\"");
}

PreparedExample prepare_example(const LanguageModel& lm, const DialogueHistory& history, const KnowledgePool& pool,
                                const EngineConfig& config) {
  PreparedExample p;
  p.selection = select_knowledge(history, pool, config.top_n, config.selector);
  p.factual = build_factual(history, p.selection.selected, config.tmpl, lm, config.context);
  p.counterfactual =
      build_counterfactual(history, p.selection.selected, config.tmpl, lm, config.params.null_mode, config.context);
  return p;
}

Context null_context(const LanguageModel& lm, const DialogueHistory& history, const KnowledgePool& pool,
                     const EngineConfig& config) {
  return build_null(history, pool, config.top_n, config.tmpl, lm, config.params.null_mode, config.selector,
                    config.context);
}

DecodeResult decode_prepared(const LanguageModel& lm, const PreparedExample& prepared, DecodeMode mode,
                             const EngineConfig& config) {
  if (mode == DecodeMode::Plain) return greedy_decode(lm, prepared.factual, config.params);
  return counterfactual_decode(lm, prepared.factual, prepared.counterfactual, config.params);
}

nlohmann::json config_to_json(const EngineConfig& config) {
  const auto& p = config.params;
  nlohmann::json j{{"alpha", p.alpha},
                   {"strength", p.strength},
                   {"max_new_tokens", p.max_new_tokens},
                   {"null_mode", to_string(p.null_mode)},
                   {"score_space", to_string(p.score_space)},
                   {"min_factual_prob", p.min_factual_prob},
                   {"top_k_remote", p.top_k_remote},
                   {"top_n", config.top_n},
                   {"use_full_history", config.selector.use_full_history},
                   {"max_context_tokens", config.context.max_context_tokens},
                   {"template", to_json(config.tmpl)}};
  if (p.eos_id) j["eos_id"] = p.eos_id->value;
  return j;
}

}  // namespace cfd
