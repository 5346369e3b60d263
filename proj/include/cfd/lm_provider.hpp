#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace cfd {

// Index into one Vocabulary. Meaningless across vocabularies.
struct TokenId {
  std::int32_t value = 0;

  constexpr auto operator<=>(const TokenId&) const = default;
};

using TokenSeq = std::vector<TokenId>;

// Surface strings of the reserved tokens a vocabulary must contain.
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Ordered, duplicate-free token strings. Lookup is case-folded, so two
// entries that differ only in ASCII case are rejected as duplicates.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId bos_id() const noexcept { return bos_; }
  TokenId eos_id() const noexcept { return eos_; }
  TokenId unk_id() const noexcept { return unk_; }

  bool contains(TokenId id) const noexcept {
    return id.value >= 0 && static_cast<std::size_t>(id.value) < tokens_.size();
  }
  // Throws DomainError for an out-of-range id.
  const std::string& surface(TokenId id) const;
  // Case-folded lookup; unk_id for unknown words.
  TokenId lookup(std::string_view word) const;
  std::optional<TokenId> find(std::string_view word) const;

  std::span<const std::string> tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId bos_, eos_, unk_;
};

// ASCII case fold; bytes >= 0x80 pass through untouched.
std::string case_fold(std::string_view s);
// Whitespace split + case fold. Shared by the toy tokenizer and the metrics.
std::vector<std::string> split_words(std::string_view text);

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);
// Surface strings joined by single spaces, bos/eos dropped.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

// Probability vector over a vocabulary: entries >= 0, sum 1 within 1e-9.
class NextTokenDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Validates; throws InvariantError with `what` in the message.
  explicit NextTokenDistribution(std::vector<double> probs, std::string_view what = "distribution");

  static NextTokenDistribution uniform(std::size_t vocab_size);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](TokenId id) const { return probs_.at(static_cast<std::size_t>(id.value)); }

  friend bool operator==(const NextTokenDistribution&, const NextTokenDistribution&) = default;

 private:
  std::vector<double> probs_;
};

// The p(.) oracle. Implementations must be safe to call concurrently from
// several threads and must return identical output for identical prefixes.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_id() const = 0;
  virtual TokenSeq tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;
  virtual NextTokenDistribution next_distribution(std::span<const TokenId> prefix) const = 0;
  // Short identifier echoed into reports.
  virtual std::string model_id() const = 0;
  // Human readable surface of one token, used by traces and reports.
  virtual std::string token_text(TokenId id) const { return detokenize(std::span(&id, 1)); }
};

// Deterministic rule table: the longest rule whose context is a suffix of
// the prefix wins; with no match the distribution is uniform. Rules may be
// keyed on the empty context, which then acts as the last resort before the
// uniform fallback.
class TableLm final : public LanguageModel {
 public:
  TableLm(Vocabulary vocab, std::size_t order, std::map<TokenSeq, NextTokenDistribution> rules,
          std::string id = "table");

  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId eos_id() const override { return vocab_.eos_id(); }
  TokenSeq tokenize(std::string_view text) const override { return cfd::tokenize(text, vocab_); }
  std::string detokenize(std::span<const TokenId> ids) const override {
    return cfd::detokenize(ids, vocab_);
  }
  NextTokenDistribution next_distribution(std::span<const TokenId> prefix) const override;
  std::string model_id() const override { return id_; }
  std::string token_text(TokenId id) const override { return vocab_.surface(id); }

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t rule_count() const noexcept { return rules_.size(); }

 private:
  Vocabulary vocab_;
  std::size_t order_;
  std::map<TokenSeq, NextTokenDistribution> rules_;
  NextTokenDistribution uniform_;
  std::string id_;
};

// Build a TableLm from the JSON spec format:
//   {"vocab": [str...], "order": int, "rules": [{"context": [str...], "dist": {str: float}}]}
// Tokens missing from "dist" get probability 0.
TableLm table_lm_from_json(const nlohmann::json& spec, std::string id = "table");
// Parse errors carry line/column; invariant errors name the offending rule.
TableLm load_table_lm(const std::filesystem::path& path);

}  // namespace cfd
