#pragma once

#include <cstddef>
#include <vector>

#include "cfd/dialogue.hpp"

namespace cfd {

struct SelectorOptions {
  // Score against every turn of the history instead of the query alone.
  bool use_full_history = false;
};

struct ScoredPiece {
  KnowledgePiece piece;
  double score = 0.0;
};

// ranked: descending score, ties by ascending id. selected: prefix of ranked.
struct SelectionResult {
  std::vector<ScoredPiece> ranked;
  std::vector<KnowledgePiece> selected;

  std::vector<std::string> selected_ids() const;
};

// TF-IDF cosine between the query and one rendered piece, in [0, 1].
//
// IDF is the smoothed log((1 + N) / (1 + df)) + 1 over the N rendered pieces
// of the pool. Query words that occur in no piece get weight 1, the weight of
// a word present in every piece: they cannot match anything but still count
// toward the query norm.
double score_piece(const DialogueHistory& history, const KnowledgePiece& piece,
                   const KnowledgePool& pool, const SelectorOptions& opts = {});

// Top min(top_n, |pool|) pieces. A null history selects nothing.
SelectionResult select_knowledge(const DialogueHistory& history, const KnowledgePool& pool,
                                 std::size_t top_n, const SelectorOptions& opts = {});

}  // namespace cfd
