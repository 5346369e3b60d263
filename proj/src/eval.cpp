#include "cfd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "cfd/error.hpp"

namespace cfd {
namespace {

using Counts = std::map<std::string, std::size_t>;

Counts counts_of(const std::vector<std::string>& words) {
  Counts c;
  for (const auto& w : words) ++c[w];
  return c;
}

std::size_t total(const Counts& c) {
  std::size_t n = 0;
  for (const auto& [w, k] : c) n += k;
  return n;
}

double unigram_f1(const Counts& response, const Counts& reference) {
  const auto nr = total(response), nk = total(reference);
  if (nr == 0 || nk == 0) return 0.0;
  std::size_t overlap = 0;
  for (const auto& [w, k] : response)
    if (auto it = reference.find(w); it != reference.end()) overlap += std::min(k, it->second);
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(nr);
  const double recall = static_cast<double>(overlap) / static_cast<double>(nk);
  return 2.0 * precision * recall / (precision + recall);
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ModeOutcome outcome_of(const DecodeResult& r, const PreparedExample& prepared, const DialogueExample& ex,
                       const EvalOptions& opts) {
  ModeOutcome o;
  o.response = r.response.text;
  o.selected_knowledge_ids = prepared.selection.selected_ids();
  o.stop_reason = r.trace.stop_reason;
  o.metrics = compute_metrics(o.response, ex, prepared.selection.selected, opts.generic_phrases,
                              opts.generic_min_tokens);
  return o;
}

ModeAggregate aggregate(const std::vector<PairedRecord>& records, bool ah) {
  ModeAggregate a;
  if (records.empty()) return a;
  std::vector<std::string> responses;
  for (const auto& r : records) {
    const auto& o = ah ? r.ah : r.plain;
    a.mean_knowledge_f1 += o.metrics.knowledge_f1;
    a.mean_query_overlap_f1 += o.metrics.query_overlap_f1;
    a.mean_response_length += static_cast<double>(o.metrics.response_length);
    responses.push_back(o.response);
  }
  const auto n = static_cast<double>(records.size());
  a.mean_knowledge_f1 /= n;
  a.mean_query_overlap_f1 /= n;
  a.mean_response_length /= n;
  std::size_t generic = 0;
  for (const auto& r : records) generic += (ah ? r.ah : r.plain).metrics.generic ? 1 : 0;
  a.generic_rate = static_cast<double>(generic) / n;
  a.distinct_1 = distinct_n(responses, 1);
  a.distinct_2 = distinct_n(responses, 2);
  return a;
}

nlohmann::json metrics_json(const MetricsRecord& m) {
  return {{"knowledge_f1", m.knowledge_f1},     {"query_overlap_f1", m.query_overlap_f1},
          {"distinct_1", m.distinct_1},         {"distinct_2", m.distinct_2},
          {"generic", m.generic},               {"response_length", m.response_length}};
}

nlohmann::json outcome_json(const ModeOutcome& o) {
  return {{"response", o.response},
          {"selected_knowledge_ids", o.selected_knowledge_ids},
          {"stop_reason", to_string(o.stop_reason)},
          {"metrics", metrics_json(o.metrics)}};
}

nlohmann::json aggregate_json(const ModeAggregate& a) {
  return {{"mean_knowledge_f1", a.mean_knowledge_f1},
          {"mean_query_overlap_f1", a.mean_query_overlap_f1},
          {"mean_response_length", a.mean_response_length},
          {"generic_rate", a.generic_rate},
          {"distinct_1", a.distinct_1},
          {"distinct_2", a.distinct_2}};
}

}  // namespace

Dataset parse_dataset(std::string_view text, const DatasetLoadOptions& opts) {
  Dataset ds;
  std::set<std::string> seen_ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }

    std::string id_hint;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.is_object() && j.contains("example_id") && j["example_id"].is_string())
        id_hint = j["example_id"].get<std::string>();
      auto ex = example_from_json(j);
      if (!seen_ids.insert(ex.example_id).second)
        throw InvariantError("duplicate example_id \"" + ex.example_id + "\"");
      ds.examples.push_back(std::move(ex));
    } catch (const std::exception& e) {
      std::string msg = e.what();
      if (auto* pe = dynamic_cast<const nlohmann::json::parse_error*>(&e)) msg = pe->what();
      if (!opts.collect_errors) {
        if (dynamic_cast<const InvariantError*>(&e))
          throw InvariantError("line " + std::to_string(line_no) + ": " + msg);
        throw ParseError(msg, line_no);
      }
      ds.issues.push_back({line_no, id_hint, msg});
    }
    if (end == text.size()) break;
  }
  if (ds.examples.empty()) throw Error("dataset contains no valid examples");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const DatasetLoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), opts);
}

double knowledge_f1(std::string_view response, std::span<const std::string> knowledge_texts) {
  Counts reference;
  for (const auto& text : knowledge_texts)
    for (const auto& [w, k] : counts_of(split_words(text))) reference[w] = std::max(reference[w], k);
  return unigram_f1(counts_of(split_words(response)), reference);
}

double query_overlap_f1(std::string_view response, std::string_view query) {
  return unigram_f1(counts_of(split_words(response)), counts_of(split_words(query)));
}

double distinct_n(std::span<const std::string> responses, int n) {
  if (n != 1 && n != 2) throw DomainError("distinct_n supports n = 1 or 2");
  std::set<std::vector<std::string>> unique;
  std::size_t grams = 0;
  for (const auto& r : responses) {
    auto words = split_words(r);
    if (words.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
      unique.emplace(words.begin() + static_cast<std::ptrdiff_t>(i),
                     words.begin() + static_cast<std::ptrdiff_t>(i) + n);
      ++grams;
    }
  }
  return grams == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(grams);
}

bool is_generic(std::string_view response, std::span<const std::string> phrases, std::size_t min_tokens) {
  const auto words = split_words(response);
  if (words.size() < min_tokens) return true;
  // Whole-word match: "i see" must not fire inside "hi seen".
  auto padded = [](const std::vector<std::string>& ws) {
    std::string s = " ";
    for (const auto& w : ws) s += w + ' ';
    return s;
  };
  const auto text = padded(words);
  return std::any_of(phrases.begin(), phrases.end(), [&](const std::string& p) {
    auto pw = split_words(p);
    return !pw.empty() && text.find(padded(pw)) != std::string::npos;
  });
}

double generic_rate(std::span<const std::string> responses, std::span<const std::string> phrases,
                    std::size_t min_tokens) {
  if (phrases.empty()) throw DomainError("generic phrase list must not be empty");
  if (responses.empty()) return 0.0;
  auto n = std::count_if(responses.begin(), responses.end(),
                         [&](const std::string& r) { return is_generic(r, phrases, min_tokens); });
  return static_cast<double>(n) / static_cast<double>(responses.size());
}

std::vector<std::string> load_phrase_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open phrase list " + path.string());
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    phrases.push_back(line.substr(b, e - b + 1));
  }
  if (phrases.empty()) throw Error("phrase list " + path.string() + " is empty");
  return phrases;
}

MetricsRecord compute_metrics(std::string_view response, const DialogueExample& example,
                              std::span<const KnowledgePiece> selected, std::span<const std::string> phrases,
                              std::size_t generic_min_tokens) {
  std::vector<std::string> knowledge;
  for (const auto& p : selected) knowledge.push_back(render_knowledge(p));
  std::vector<std::string> single{std::string(response)};
  MetricsRecord m;
  m.knowledge_f1 = knowledge_f1(response, knowledge);
  m.query_overlap_f1 = query_overlap_f1(response, query_of(example.history).text());
  m.distinct_1 = distinct_n(single, 1);
  m.distinct_2 = distinct_n(single, 2);
  m.generic = phrases.empty() ? split_words(response).size() < generic_min_tokens
                              : is_generic(response, phrases, generic_min_tokens);
  m.response_length = split_words(response).size();
  return m;
}

Report run_eval(const LanguageModel& lm, const Dataset& dataset, const EvalOptions& opts) {
  Report report;
  report.config = config_to_json(opts.engine);
  report.config["model"] = lm.model_id();
  report.timestamp = iso_timestamp();
  report.errors = dataset.issues;

  struct Slot {
    std::optional<PairedRecord> record;
    std::optional<DatasetIssue> error;
  };
  std::vector<Slot> slots(dataset.examples.size());

  auto run_one = [&](std::size_t i) {
    const auto& ex = dataset.examples[i];
    try {
      auto prepared = prepare_example(lm, ex.history, ex.pool, opts.engine);
      auto plain = decode_prepared(lm, prepared, DecodeMode::Plain, opts.engine);
      auto ah = decode_prepared(lm, prepared, DecodeMode::Ah, opts.engine);
      slots[i].record =
          PairedRecord{ex.example_id, outcome_of(plain, prepared, ex, opts), outcome_of(ah, prepared, ex, opts)};
    } catch (const Error& e) {
      slots[i].error = DatasetIssue{0, ex.example_id, e.what()};
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < slots.size(); ++i) run_one(i);
  } else {
    std::vector<std::future<void>> workers;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < jobs; ++w)
      workers.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < slots.size(); i = next++) run_one(i);
      }));
    for (auto& f : workers) f.get();
  }

  for (auto& s : slots) {
    if (s.record) report.records.push_back(std::move(*s.record));
    if (s.error) report.errors.push_back(std::move(*s.error));
  }
  std::sort(report.records.begin(), report.records.end(),
            [](const PairedRecord& a, const PairedRecord& b) { return a.example_id < b.example_id; });
  std::stable_sort(report.errors.begin(), report.errors.end(), [](const DatasetIssue& a, const DatasetIssue& b) {
    return std::tie(a.example_id, a.line) < std::tie(b.example_id, b.line);
  });
  report.partial = !report.errors.empty();
  report.plain = aggregate(report.records, false);
  report.ah = aggregate(report.records, true);
  return report;
}

nlohmann::json to_json(const Report& report, bool include_timestamp) {
  nlohmann::json j;
  j["config"] = report.config;
  j["partial"] = report.partial;
  j["aggregates"] = {{"plain", aggregate_json(report.plain)}, {"ah", aggregate_json(report.ah)}};
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& r : report.records)
    records.push_back({{"example_id", r.example_id}, {"plain", outcome_json(r.plain)}, {"ah", outcome_json(r.ah)}});
  auto& errors = j["errors"] = nlohmann::json::array();
  for (const auto& e : report.errors)
    errors.push_back({{"line", e.line}, {"example_id", e.example_id}, {"message", e.message}});
  if (include_timestamp) j["timestamp"] = report.timestamp;
  return j;
}

}  // namespace cfd
