#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfd/decoder.hpp"
#include "cfd/dialogue.hpp"
#include "cfd/pipeline.hpp"

namespace cfd {

// ---------------------------------------------------------------------------
// Dataset

struct DatasetIssue {
  std::size_t line = 0;  // 1-based, 0 when not tied to a line
  std::string example_id;
  std::string message;
};

struct Dataset {
  std::vector<DialogueExample> examples;
  // Lines rejected while loading with collect_errors set.
  std::vector<DatasetIssue> issues;
};

struct DatasetLoadOptions {
  // Record malformed lines instead of failing on the first one.
  bool collect_errors = false;
};

// JSON Lines, one example per line; blank lines are skipped. Throws
// ParseError citing the line, InvariantError on a duplicate example_id, and
// Error when no valid example remains.
Dataset load_dataset(const std::filesystem::path& path, const DatasetLoadOptions& opts = {});
Dataset parse_dataset(std::string_view text, const DatasetLoadOptions& opts = {});

// ---------------------------------------------------------------------------
// Lexical proxy metrics. All tokenization is whitespace + ASCII case fold.

// Unigram F1 between the response and the multiset union of the knowledge
// texts. 0 when either side is empty.
double knowledge_f1(std::string_view response, std::span<const std::string> knowledge_texts);
// Unigram F1 between the response and the query.
double query_overlap_f1(std::string_view response, std::string_view query);
// Unique n-grams / total n-grams over the corpus, n in {1, 2}. 0 when there
// are no n-grams.
double distinct_n(std::span<const std::string> responses, int n);
bool is_generic(std::string_view response, std::span<const std::string> phrases, std::size_t min_tokens = 3);
// Fraction of responses that contain a phrase (whole words, case-folded) or are
// shorter than min_tokens. phrases must be non-empty.
double generic_rate(std::span<const std::string> responses, std::span<const std::string> phrases,
                    std::size_t min_tokens = 3);

// One phrase per line; blank lines and lines starting with '#' are ignored.
std::vector<std::string> load_phrase_list(const std::filesystem::path& path);

struct MetricsRecord {
  double knowledge_f1 = 0.0;
  double query_overlap_f1 = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  bool generic = false;
  std::size_t response_length = 0;
};

// ---------------------------------------------------------------------------
// Report

struct ModeOutcome {
  std::string response;
  std::vector<std::string> selected_knowledge_ids;
  StopReason stop_reason = StopReason::MaxTokens;
  MetricsRecord metrics;
};

struct PairedRecord {
  std::string example_id;
  ModeOutcome plain;
  ModeOutcome ah;
};

struct ModeAggregate {
  double mean_knowledge_f1 = 0.0;
  double mean_query_overlap_f1 = 0.0;
  double mean_response_length = 0.0;
  double generic_rate = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
};

struct Report {
  // Sorted by example_id.
  std::vector<PairedRecord> records;
  ModeAggregate plain;
  ModeAggregate ah;
  std::vector<DatasetIssue> errors;
  bool partial = false;
  nlohmann::json config;
  std::string timestamp;
};

struct EvalOptions {
  EngineConfig engine;
  std::vector<std::string> generic_phrases;
  std::size_t generic_min_tokens = 3;
  // Examples evaluated concurrently. The report does not depend on it.
  std::size_t jobs = 1;
};

// Decode every example in both modes and score the outputs. Failures of a
// single example are recorded in report.errors and leave it out of both modes.
Report run_eval(const LanguageModel& lm, const Dataset& dataset, const EvalOptions& opts);

MetricsRecord compute_metrics(std::string_view response, const DialogueExample& example,
                              std::span<const KnowledgePiece> selected, std::span<const std::string> phrases,
                              std::size_t generic_min_tokens);

// With include_timestamp=false the output is a pure function of the inputs.
nlohmann::json to_json(const Report& report, bool include_timestamp = true);

}  // namespace cfd
