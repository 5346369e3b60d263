#include "cfd/lm_provider.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cfd/error.hpp"

namespace cfd {

std::string case_fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.push_back(case_fold(text.substr(start, i - start)));
  }
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 4) throw InvariantError("vocabulary needs at least 4 tokens");
  if (tokens_.size() > static_cast<std::size_t>(INT32_MAX))
    throw InvariantError("vocabulary too large");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InvariantError("vocabulary entry " + std::to_string(i) + " is empty");
    auto [it, inserted] =
        index_.emplace(case_fold(tokens_[i]), TokenId{static_cast<std::int32_t>(i)});
    if (!inserted) throw InvariantError("duplicate vocabulary entry \"" + tokens_[i] + "\"");
  }
  auto reserved = [&](std::string_view name) {
    auto found = find(name);
    if (!found) throw InvariantError("vocabulary lacks reserved token " + std::string(name));
    return *found;
  };
  bos_ = reserved(kBosToken);
  eos_ = reserved(kEosToken);
  unk_ = reserved(kUnkToken);
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (!contains(id))
    throw DomainError("token id " + std::to_string(id.value) + " outside vocabulary of size " +
                      std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id.value)];
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(case_fold(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::lookup(std::string_view word) const { return find(word).value_or(unk_); }

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSeq ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.lookup(w));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const auto& s = vocab.surface(id);
    if (id == vocab.bos_id() || id == vocab.eos_id()) continue;
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

NextTokenDistribution::NextTokenDistribution(std::vector<double> probs, std::string_view what)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvariantError(std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    double p = probs_[i];
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvariantError(std::string(what) + ": entry " + std::to_string(i) +
                           " is negative or not finite");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": probabilities sum to " << sum << ", expected 1";
    throw InvariantError(msg.str());
  }
}

NextTokenDistribution NextTokenDistribution::uniform(std::size_t vocab_size) {
  if (vocab_size == 0) throw InvariantError("uniform distribution over empty vocabulary");
  return NextTokenDistribution(std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size)),
                               "uniform");
}

TableLm::TableLm(Vocabulary vocab, std::size_t order, std::map<TokenSeq, NextTokenDistribution> rules,
                 std::string id)
    : vocab_(std::move(vocab)),
      order_(order),
      rules_(std::move(rules)),
      uniform_(NextTokenDistribution::uniform(vocab_.size())),
      id_(std::move(id)) {
  if (order_ < 1) throw InvariantError("table LM order must be >= 1");
  for (const auto& [ctx, dist] : rules_) {
    if (ctx.size() > order_)
      throw InvariantError("rule context longer than order " + std::to_string(order_));
    if (dist.size() != vocab_.size())
      throw InvariantError("rule distribution size does not match the vocabulary");
    for (TokenId t : ctx)
      if (!vocab_.contains(t)) throw InvariantError("rule context holds an out-of-range token");
  }
}

NextTokenDistribution TableLm::next_distribution(std::span<const TokenId> prefix) const {
  for (TokenId t : prefix)
    if (!vocab_.contains(t))
      throw DomainError("prefix token " + std::to_string(t.value) + " outside the vocabulary");
  const std::size_t longest = std::min(order_, prefix.size());
  for (std::size_t len = longest + 1; len-- > 0;) {
    auto suffix = prefix.last(len);
    auto it = rules_.find(TokenSeq(suffix.begin(), suffix.end()));
    if (it != rules_.end()) return it->second;
  }
  return uniform_;
}

namespace {

std::string describe_context(const nlohmann::json& ctx) { return ctx.dump(); }

}  // namespace

TableLm table_lm_from_json(const nlohmann::json& spec, std::string id) {
  if (!spec.is_object()) throw ParseError("table LM spec must be a JSON object");
  auto vocab_it = spec.find("vocab");
  if (vocab_it == spec.end() || !vocab_it->is_array())
    throw ParseError("table LM spec needs a \"vocab\" array");
  std::vector<std::string> words;
  for (const auto& w : *vocab_it) {
    if (!w.is_string()) throw ParseError("vocab entries must be strings");
    words.push_back(w.get<std::string>());
  }
  Vocabulary vocab(std::move(words));

  auto order_it = spec.find("order");
  if (order_it == spec.end() || !order_it->is_number_integer() || order_it->get<long long>() < 1)
    throw ParseError("table LM spec needs a positive integer \"order\"");
  const auto order = static_cast<std::size_t>(order_it->get<long long>());

  std::map<TokenSeq, NextTokenDistribution> rules;
  if (auto rules_it = spec.find("rules"); rules_it != spec.end()) {
    if (!rules_it->is_array()) throw ParseError("\"rules\" must be an array");
    for (const auto& rule : *rules_it) {
      if (!rule.is_object() || !rule.contains("context") || !rule["context"].is_array() ||
          !rule.contains("dist") || !rule["dist"].is_object())
        throw ParseError("each rule needs a \"context\" array and a \"dist\" object");
      const auto& ctx_json = rule["context"];
      const std::string name = "rule " + describe_context(ctx_json);

      TokenSeq ctx;
      for (const auto& w : ctx_json) {
        if (!w.is_string()) throw ParseError(name + ": context entries must be strings");
        auto t = vocab.find(w.get<std::string>());
        if (!t) throw InvariantError(name + ": context token \"" + w.get<std::string>() +
                                     "\" is not in the vocabulary");
        ctx.push_back(*t);
      }
      if (ctx.size() > order)
        throw InvariantError(name + ": context longer than order " + std::to_string(order));

      std::vector<double> probs(vocab.size(), 0.0);
      for (const auto& [word, p] : rule["dist"].items()) {
        auto t = vocab.find(word);
        if (!t) throw InvariantError(name + ": dist token \"" + word + "\" is not in the vocabulary");
        if (!p.is_number()) throw ParseError(name + ": probability for \"" + word + "\" is not a number");
        probs[static_cast<std::size_t>(t->value)] += p.get<double>();
      }
      NextTokenDistribution dist(std::move(probs), name);
      if (!rules.emplace(std::move(ctx), std::move(dist)).second)
        throw InvariantError("duplicate rule key " + describe_context(ctx_json));
    }
  }
  return TableLm(std::move(vocab), order, std::move(rules), std::move(id));
}

TableLm load_table_lm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open table LM spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                         e.what(),
                     line);
  }
  return table_lm_from_json(spec, "table:" + path.filename().string());
}

}  // namespace cfd
