#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfd/dialogue.hpp"
#include "cfd/knowledge_selector.hpp"
#include "cfd/lm_provider.hpp"

namespace cfd {

// Prompt layout. The pattern holds {QUERY} exactly once and {KNOWLEDGE},
// {HISTORY} at most once each. Turns render as "<prefix> <text>".
class PromptTemplate {
 public:
  PromptTemplate(std::string pattern, std::string user_prefix, std::string system_prefix,
                 std::string knowledge_separator);

  // "knowledge: {KNOWLEDGE} dialogue: {HISTORY} {QUERY} response:"
  static PromptTemplate default_template();

  const std::string& pattern() const noexcept { return pattern_; }
  const std::string& user_prefix() const noexcept { return user_prefix_; }
  const std::string& system_prefix() const noexcept { return system_prefix_; }
  const std::string& knowledge_separator() const noexcept { return separator_; }

  // Fill the slots. `history` supplies both the prior turns and the query;
  // a null history leaves both slots empty.
  std::string instantiate(const DialogueHistory& history, std::span<const KnowledgePiece> knowledge,
                          std::size_t skip_oldest_turns = 0) const;

  std::string format_turn(const Utterance& u) const;

 private:
  std::string pattern_;
  std::string user_prefix_;
  std::string system_prefix_;
  std::string separator_;
};

nlohmann::json to_json(const PromptTemplate& t);
// {"pattern", "user_prefix", "system_prefix", "knowledge_separator"}; missing
// keys keep their default values.
PromptTemplate template_from_json(const nlohmann::json& j);
PromptTemplate load_template(const std::filesystem::path& path);

enum class Provenance { Factual, Counterfactual, Null };

std::string_view to_string(Provenance p);

struct Context {
  TokenSeq tokens;
  Provenance provenance = Provenance::Factual;
  std::vector<std::string> selected_knowledge_ids;
  // The instantiated prompt before tokenization.
  std::string text;
};

struct ContextOptions {
  // Oldest prior turns are dropped until the context fits. If the query and
  // knowledge alone exceed the cap, the leading tokens are cut.
  std::size_t max_context_tokens = 1024;
};

// C_{d,k}: full history with the knowledge selected under it.
Context build_factual(const DialogueHistory& history, std::span<const KnowledgePiece> selected,
                      const PromptTemplate& tmpl, const LanguageModel& lm, const ContextOptions& opts = {});

// C_{d*,k}: history replaced by its null version, knowledge unchanged.
Context build_counterfactual(const DialogueHistory& history, std::span<const KnowledgePiece> selected,
                             const PromptTemplate& tmpl, const LanguageModel& lm, NullMode mode,
                             const ContextOptions& opts = {});

// C_{d*,K_{d*}}: null history and the knowledge selected under it, which is
// nothing in Empty mode and the query's own selection in QueryOnly mode.
Context build_null(const DialogueHistory& history, const KnowledgePool& pool, std::size_t top_n,
                   const PromptTemplate& tmpl, const LanguageModel& lm, NullMode mode,
                   const SelectorOptions& selector = {}, const ContextOptions& opts = {});

}  // namespace cfd
