#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace cfd {

enum class Speaker { User, System };

std::string_view to_string(Speaker s);

// One turn of a conversation. Text must contain a non-whitespace character.
class Utterance {
 public:
  Utterance(Speaker speaker, std::string text);

  Speaker speaker() const noexcept { return speaker_; }
  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const Utterance&, const Utterance&) = default;

 private:
  Speaker speaker_;
  std::string text_;
};

// How a dialogue is replaced when building the counterfactual scenario.
//   QueryOnly: keep only the final user query.
//   Empty:     drop everything, including the query.
enum class NullMode { QueryOnly, Empty };

std::string_view to_string(NullMode m);
NullMode null_mode_from_string(std::string_view s);

// Ordered turns ending in the user's query. Alternation of speakers is not
// enforced. The only way to obtain an empty history is null_history(.., Empty).
class DialogueHistory {
 public:
  explicit DialogueHistory(std::vector<Utterance> turns);

  std::span<const Utterance> turns() const noexcept { return turns_; }
  std::size_t size() const noexcept { return turns_.size(); }
  bool is_null() const noexcept { return turns_.empty(); }

  // Turns before the query. Empty for single-turn and null histories.
  std::span<const Utterance> prior_turns() const noexcept;

  friend bool operator==(const DialogueHistory&, const DialogueHistory&) = default;

 private:
  struct NullTag {};
  explicit DialogueHistory(NullTag) {}
  friend DialogueHistory null_history(const DialogueHistory&, NullMode);

  std::vector<Utterance> turns_;
};

// Final user turn. Throws MalformedHistoryError on a null history.
const Utterance& query_of(const DialogueHistory& history);

DialogueHistory null_history(const DialogueHistory& history, NullMode mode);

struct KnowledgeTriple {
  std::string subject;
  std::string relation;
  std::string object;

  friend bool operator==(const KnowledgeTriple&, const KnowledgeTriple&) = default;
};

class KnowledgePiece {
 public:
  using Content = std::variant<std::string, KnowledgeTriple>;

  KnowledgePiece(std::string id, Content content);

  const std::string& id() const noexcept { return id_; }
  const Content& content() const noexcept { return content_; }

  friend bool operator==(const KnowledgePiece&, const KnowledgePiece&) = default;

 private:
  std::string id_;
  Content content_;
};

// Text is returned verbatim; triples become "subject relation object".
std::string render_knowledge(const KnowledgePiece& piece);

class KnowledgePool {
 public:
  KnowledgePool() = default;
  explicit KnowledgePool(std::vector<KnowledgePiece> pieces);

  std::span<const KnowledgePiece> pieces() const noexcept { return pieces_; }
  std::size_t size() const noexcept { return pieces_.size(); }
  bool empty() const noexcept { return pieces_.empty(); }

  friend bool operator==(const KnowledgePool&, const KnowledgePool&) = default;

 private:
  std::vector<KnowledgePiece> pieces_;
};

struct DialogueExample {
  std::string example_id;
  DialogueHistory history;
  KnowledgePool pool;
  std::optional<std::string> gold_response;

  friend bool operator==(const DialogueExample&, const DialogueExample&) = default;
};

// Dataset line <-> example. Parsing throws ParseError (no line number) or
// the invariant error of the offending component.
nlohmann::json to_json(const DialogueExample& example);
DialogueExample example_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KnowledgePiece& piece);
KnowledgePiece knowledge_from_json(const nlohmann::json& j);

}  // namespace cfd
