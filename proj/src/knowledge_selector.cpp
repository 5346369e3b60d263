#include "cfd/knowledge_selector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "cfd/error.hpp"
#include "cfd/lm_provider.hpp"

namespace cfd {
namespace {

using TermCounts = std::map<std::string, double>;

TermCounts term_counts(std::string_view text) {
  TermCounts tf;
  for (auto& w : split_words(text)) tf[std::move(w)] += 1.0;
  return tf;
}

class IdfTable {
 public:
  explicit IdfTable(const KnowledgePool& pool) : n_(static_cast<double>(pool.size())) {
    for (const auto& piece : pool.pieces()) {
      auto words = split_words(render_knowledge(piece));
      std::set<std::string> unique(words.begin(), words.end());
      for (const auto& w : unique) df_[w] += 1;
    }
  }

  double weight(const std::string& term) const {
    auto it = df_.find(term);
    if (it == df_.end()) return 1.0;
    return std::log((1.0 + n_) / (1.0 + it->second)) + 1.0;
  }

 private:
  double n_;
  std::map<std::string, double> df_;
};

std::string scoring_text(const DialogueHistory& history, const SelectorOptions& opts) {
  if (!opts.use_full_history) return query_of(history).text();
  std::string text;
  for (const auto& u : history.turns()) {
    text += u.text();
    text += ' ';
  }
  return text;
}

TermCounts weighted(const TermCounts& tf, const IdfTable& idf) {
  TermCounts out;
  for (const auto& [term, count] : tf) out.emplace(term, count * idf.weight(term));
  return out;
}

double norm(const TermCounts& v) {
  double s = 0.0;
  for (const auto& [term, x] : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const TermCounts& query, const TermCounts& doc) {
  const double nq = norm(query), nd = norm(doc);
  if (nq == 0.0 || nd == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [term, x] : query) {
    auto it = doc.find(term);
    if (it != doc.end()) dot += x * it->second;
  }
  return std::clamp(dot / (nq * nd), 0.0, 1.0);
}

}  // namespace

std::vector<std::string> SelectionResult::selected_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : selected) ids.push_back(p.id());
  return ids;
}

double score_piece(const DialogueHistory& history, const KnowledgePiece& piece, const KnowledgePool& pool,
                   const SelectorOptions& opts) {
  IdfTable idf(pool);
  auto q = weighted(term_counts(scoring_text(history, opts)), idf);
  auto d = weighted(term_counts(render_knowledge(piece)), idf);
  return cosine(q, d);
}

SelectionResult select_knowledge(const DialogueHistory& history, const KnowledgePool& pool, std::size_t top_n,
                                 const SelectorOptions& opts) {
  if (top_n < 1) throw DomainError("top_n must be at least 1");
  SelectionResult result;
  if (history.is_null() || pool.empty()) return result;

  IdfTable idf(pool);
  auto q = weighted(term_counts(scoring_text(history, opts)), idf);
  for (const auto& piece : pool.pieces())
    result.ranked.push_back({piece, cosine(q, weighted(term_counts(render_knowledge(piece)), idf))});

  std::sort(result.ranked.begin(), result.ranked.end(), [](const ScoredPiece& a, const ScoredPiece& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.piece.id() < b.piece.id();
  });
  const auto n = std::min(top_n, result.ranked.size());
  for (std::size_t i = 0; i < n; ++i) result.selected.push_back(result.ranked[i].piece);
  return result;
}

}  // namespace cfd
