#pragma once

#include <string>
#include <vector>

#include "cfd/context_builder.hpp"
#include "cfd/decoder.hpp"
#include "cfd/dialogue.hpp"
#include "cfd/knowledge_selector.hpp"
#include "cfd/lm_provider.hpp"

namespace cfd {

// Everything needed to turn one example into responses.
struct EngineConfig {
  DecodeParams params;
  PromptTemplate tmpl = PromptTemplate::default_template();
  std::size_t top_n = 1;
  SelectorOptions selector;
  ContextOptions context;
};

enum class DecodeMode { Plain, Ah };

std::string_view to_string(DecodeMode m);
DecodeMode decode_mode_from_string(std::string_view s);

struct PreparedExample {
  SelectionResult selection;
  Context factual;
  Context counterfactual;
};

// Select knowledge under the real dialogue and build C_{d,k} and C_{d*,k}.
PreparedExample prepare_example(const LanguageModel& lm, const DialogueHistory& history, const KnowledgePool& pool,
                                const EngineConfig& config);

// C_{d*,K_{d*}} for effect tracing.
Context null_context(const LanguageModel& lm, const DialogueHistory& history, const KnowledgePool& pool,
                     const EngineConfig& config);

// Plain: greedy on the factual context. Ah: counterfactual dual decoding.
DecodeResult decode_prepared(const LanguageModel& lm, const PreparedExample& prepared, DecodeMode mode,
                             const EngineConfig& config);

nlohmann::json config_to_json(const EngineConfig& config);

}  // namespace cfd
