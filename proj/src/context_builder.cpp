#include "cfd/context_builder.hpp"

#include <fstream>

#include "cfd/error.hpp"

namespace cfd {
namespace {

constexpr std::string_view kKnowledgeSlot = "{KNOWLEDGE}";
constexpr std::string_view kHistorySlot = "{HISTORY}";
constexpr std::string_view kQuerySlot = "{QUERY}";

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::vector<std::string> ids_of(std::span<const KnowledgePiece> pieces) {
  std::vector<std::string> ids;
  for (const auto& p : pieces) ids.push_back(p.id());
  return ids;
}

Context build(const DialogueHistory& history, std::span<const KnowledgePiece> knowledge,
              const PromptTemplate& tmpl, const LanguageModel& lm, Provenance provenance,
              const ContextOptions& opts) {
  Context ctx;
  ctx.provenance = provenance;
  ctx.selected_knowledge_ids = ids_of(knowledge);
  const std::size_t prior = history.prior_turns().size();
  for (std::size_t skip = 0;; ++skip) {
    ctx.text = tmpl.instantiate(history, knowledge, skip);
    ctx.tokens = lm.tokenize(ctx.text);
    if (ctx.tokens.size() <= opts.max_context_tokens || skip >= prior) break;
  }
  if (ctx.tokens.size() > opts.max_context_tokens)
    ctx.tokens.erase(ctx.tokens.begin(),
                     ctx.tokens.end() - static_cast<std::ptrdiff_t>(opts.max_context_tokens));
  return ctx;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string pattern, std::string user_prefix, std::string system_prefix,
                               std::string knowledge_separator)
    : pattern_(std::move(pattern)),
      user_prefix_(std::move(user_prefix)),
      system_prefix_(std::move(system_prefix)),
      separator_(std::move(knowledge_separator)) {
  if (count_occurrences(pattern_, kQuerySlot) != 1)
    throw InvariantError("template pattern must contain {QUERY} exactly once");
  if (count_occurrences(pattern_, kKnowledgeSlot) > 1)
    throw InvariantError("template pattern contains {KNOWLEDGE} more than once");
  if (count_occurrences(pattern_, kHistorySlot) > 1)
    throw InvariantError("template pattern contains {HISTORY} more than once");
}

PromptTemplate PromptTemplate::default_template() {
  return PromptTemplate("knowledge: {KNOWLEDGE} dialogue: {HISTORY} {QUERY} response:", "user:", "system:",
                        " ; ");
}

std::string PromptTemplate::format_turn(const Utterance& u) const {
  const auto& prefix = u.speaker() == Speaker::User ? user_prefix_ : system_prefix_;
  return prefix.empty() ? u.text() : prefix + " " + u.text();
}

std::string PromptTemplate::instantiate(const DialogueHistory& history,
                                        std::span<const KnowledgePiece> knowledge,
                                        std::size_t skip_oldest_turns) const {
  std::string knowledge_text;
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    if (i) knowledge_text += separator_;
    knowledge_text += render_knowledge(knowledge[i]);
  }
  std::string history_text;
  auto prior = history.prior_turns();
  for (std::size_t i = std::min(skip_oldest_turns, prior.size()); i < prior.size(); ++i) {
    if (!history_text.empty()) history_text += ' ';
    history_text += format_turn(prior[i]);
  }
  std::string query_text = history.is_null() ? std::string() : format_turn(query_of(history));

  // Single pass: inserted text is never re-scanned for placeholders.
  std::string out;
  std::string_view rest = pattern_;
  while (!rest.empty()) {
    auto brace = rest.find('{');
    if (brace == std::string_view::npos) {
      out += rest;
      break;
    }
    out += rest.substr(0, brace);
    rest.remove_prefix(brace);
    if (rest.starts_with(kKnowledgeSlot)) {
      out += knowledge_text;
      rest.remove_prefix(kKnowledgeSlot.size());
    } else if (rest.starts_with(kHistorySlot)) {
      out += history_text;
      rest.remove_prefix(kHistorySlot.size());
    } else if (rest.starts_with(kQuerySlot)) {
      out += query_text;
      rest.remove_prefix(kQuerySlot.size());
    } else {
      out += '{';
      rest.remove_prefix(1);
    }
  }
  return out;
}

nlohmann::json to_json(const PromptTemplate& t) {
  return {{"pattern", t.pattern()},
          {"user_prefix", t.user_prefix()},
          {"system_prefix", t.system_prefix()},
          {"knowledge_separator", t.knowledge_separator()}};
}

PromptTemplate template_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("template must be a JSON object");
  auto def = PromptTemplate::default_template();
  auto str = [&](const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw ParseError(std::string("template field \"") + key + "\" must be a string");
    return j[key].get<std::string>();
  };
  return PromptTemplate(str("pattern", def.pattern()), str("user_prefix", def.user_prefix()),
                        str("system_prefix", def.system_prefix()),
                        str("knowledge_separator", def.knowledge_separator()));
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open template " + path.string());
  try {
    return template_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Factual: return "factual";
    case Provenance::Counterfactual: return "counterfactual";
    case Provenance::Null: return "null";
  }
  return "?";
}

Context build_factual(const DialogueHistory& history, std::span<const KnowledgePiece> selected,
                      const PromptTemplate& tmpl, const LanguageModel& lm, const ContextOptions& opts) {
  return build(history, selected, tmpl, lm, Provenance::Factual, opts);
}

Context build_counterfactual(const DialogueHistory& history, std::span<const KnowledgePiece> selected,
                             const PromptTemplate& tmpl, const LanguageModel& lm, NullMode mode,
                             const ContextOptions& opts) {
  return build(null_history(history, mode), selected, tmpl, lm, Provenance::Counterfactual, opts);
}

Context build_null(const DialogueHistory& history, const KnowledgePool& pool, std::size_t top_n,
                   const PromptTemplate& tmpl, const LanguageModel& lm, NullMode mode,
                   const SelectorOptions& selector, const ContextOptions& opts) {
  auto d_star = null_history(history, mode);
  auto k_star = select_knowledge(d_star, pool, top_n, selector);
  return build(d_star, k_star.selected, tmpl, lm, Provenance::Null, opts);
}

}  // namespace cfd
