#include "cfd/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "cfd/error.hpp"

namespace cfd {
namespace {

bool has_visible_char(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return !std::isspace(c); });
}

const std::string& require_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field \"") + key + "\"");
  if (!it->is_string()) throw ParseError(std::string("field \"") + key + "\" must be a string");
  return it->get_ref<const std::string&>();
}

}  // namespace

std::string_view to_string(Speaker s) { return s == Speaker::User ? "user" : "system"; }

std::string_view to_string(NullMode m) {
  return m == NullMode::QueryOnly ? "query_only" : "empty";
}

NullMode null_mode_from_string(std::string_view s) {
  if (s == "query_only" || s == "query") return NullMode::QueryOnly;
  if (s == "empty") return NullMode::Empty;
  throw DomainError("unknown null mode \"" + std::string(s) + "\"");
}

Utterance::Utterance(Speaker speaker, std::string text)
    : speaker_(speaker), text_(std::move(text)) {
  if (!has_visible_char(text_))
    throw MalformedHistoryError("utterance text must contain a non-whitespace character");
}

DialogueHistory::DialogueHistory(std::vector<Utterance> turns) : turns_(std::move(turns)) {
  if (turns_.empty()) throw MalformedHistoryError("dialogue history is empty");
  if (turns_.back().speaker() != Speaker::User)
    throw MalformedHistoryError("dialogue history must end with a user turn (the query)");
}

std::span<const Utterance> DialogueHistory::prior_turns() const noexcept {
  if (turns_.empty()) return {};
  return std::span<const Utterance>(turns_).first(turns_.size() - 1);
}

const Utterance& query_of(const DialogueHistory& history) {
  auto turns = history.turns();
  if (turns.empty() || turns.back().speaker() != Speaker::User)
    throw MalformedHistoryError("history has no trailing user query");
  return turns.back();
}

DialogueHistory null_history(const DialogueHistory& history, NullMode mode) {
  if (mode == NullMode::Empty) return DialogueHistory(DialogueHistory::NullTag{});
  if (history.is_null()) return history;
  return DialogueHistory({query_of(history)});
}

KnowledgePiece::KnowledgePiece(std::string id, Content content)
    : id_(std::move(id)), content_(std::move(content)) {
  if (id_.empty()) throw InvariantError("knowledge piece id must be non-empty");
  if (!has_visible_char(render_knowledge(*this)))
    throw InvariantError("knowledge piece \"" + id_ + "\" renders to empty text");
}

std::string render_knowledge(const KnowledgePiece& piece) {
  if (const auto* text = std::get_if<std::string>(&piece.content())) return *text;
  const auto& t = std::get<KnowledgeTriple>(piece.content());
  return t.subject + " " + t.relation + " " + t.object;
}

KnowledgePool::KnowledgePool(std::vector<KnowledgePiece> pieces) : pieces_(std::move(pieces)) {
  std::unordered_set<std::string_view> seen;
  for (const auto& p : pieces_) {
    if (!seen.insert(p.id()).second)
      throw InvariantError("duplicate knowledge id \"" + p.id() + "\"");
  }
}

nlohmann::json to_json(const KnowledgePiece& piece) {
  nlohmann::json j;
  j["id"] = piece.id();
  if (const auto* text = std::get_if<std::string>(&piece.content())) {
    j["text"] = *text;
  } else {
    const auto& t = std::get<KnowledgeTriple>(piece.content());
    j["subject"] = t.subject;
    j["relation"] = t.relation;
    j["object"] = t.object;
  }
  return j;
}

KnowledgePiece knowledge_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("knowledge entry must be an object");
  std::string id = require_string(j, "id");
  if (j.contains("text")) return KnowledgePiece(std::move(id), require_string(j, "text"));
  return KnowledgePiece(std::move(id), KnowledgeTriple{require_string(j, "subject"),
                                                       require_string(j, "relation"),
                                                       require_string(j, "object")});
}

nlohmann::json to_json(const DialogueExample& example) {
  nlohmann::json j;
  j["example_id"] = example.example_id;
  auto& turns = j["turns"] = nlohmann::json::array();
  for (const auto& u : example.history.turns())
    turns.push_back({{"speaker", to_string(u.speaker())}, {"text", u.text()}});
  auto& knowledge = j["knowledge"] = nlohmann::json::array();
  for (const auto& p : example.pool.pieces()) knowledge.push_back(to_json(p));
  if (example.gold_response) j["gold_response"] = *example.gold_response;
  return j;
}

DialogueExample example_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("dataset line must be a JSON object");
  DialogueExample ex{require_string(j, "example_id"), DialogueHistory({Utterance(Speaker::User, "x")}),
                     {}, std::nullopt};

  auto turns_it = j.find("turns");
  if (turns_it == j.end()) throw ParseError("missing field \"turns\"");
  if (!turns_it->is_array()) throw ParseError("field \"turns\" must be an array");
  std::vector<Utterance> turns;
  for (const auto& t : *turns_it) {
    if (!t.is_object()) throw ParseError("turn must be an object");
    const auto& speaker = require_string(t, "speaker");
    Speaker s;
    if (speaker == "user") s = Speaker::User;
    else if (speaker == "system") s = Speaker::System;
    else throw ParseError("unknown speaker \"" + speaker + "\"");
    turns.emplace_back(s, require_string(t, "text"));
  }
  ex.history = DialogueHistory(std::move(turns));

  if (auto k = j.find("knowledge"); k != j.end()) {
    if (!k->is_array()) throw ParseError("field \"knowledge\" must be an array");
    std::vector<KnowledgePiece> pieces;
    for (const auto& entry : *k) pieces.push_back(knowledge_from_json(entry));
    ex.pool = KnowledgePool(std::move(pieces));
  }

  if (auto g = j.find("gold_response"); g != j.end() && !g->is_null()) {
    if (!g->is_string()) throw ParseError("field \"gold_response\" must be a string");
    ex.gold_response = g->get<std::string>();
  }
  return ex;
}

}  // namespace cfd
