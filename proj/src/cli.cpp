#include "cfd/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cfd/causal_effects.hpp"
#include "cfd/error.hpp"
#include "cfd/eval.hpp"
#include "cfd/pipeline.hpp"
#include "cfd/remote.hpp"

#ifndef CFD_DEFAULT_PHRASES
#define CFD_DEFAULT_PHRASES ""
#endif

namespace cfd::cli {
namespace {

using nlohmann::json;

// Raised for bad user input discovered after CLI11 parsing succeeded.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand. Values stay empty unless given, so the
// config file can fill the gaps.
struct CommonFlags {
  std::string model;
  std::string config_path;
  std::string template_path;
  std::string null_mode;
  std::string score_space;
  double alpha = 0.0;
  double strength = 0.0;
  double min_factual_prob = 0.0;
  double timeout_s = 0.0;
  std::size_t max_new_tokens = 0;
  std::size_t top_n = 0;
  std::size_t max_context_tokens = 0;
  int top_k_remote = 0;
  int eos_id = 0;
  bool full_history = false;
  bool parallel = false;

  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_common(CLI::App& cmd, CommonFlags& f) {
  f.opts["model"] = cmd.add_option("--model", f.model, "table:PATH | remote:URL | remote (uses CFD_REMOTE_URL)");
  f.opts["config"] = cmd.add_option("--config", f.config_path, "JSON config file (flags take precedence)");
  f.opts["template"] = cmd.add_option("--template", f.template_path, "prompt template JSON");
  f.opts["null_mode"] = cmd.add_option("--null-mode", f.null_mode, "query_only | empty");
  f.opts["score_space"] = cmd.add_option("--score-space", f.score_space, "probability | log");
  f.opts["alpha"] = cmd.add_option("--alpha", f.alpha, "decay base, lambda(i) = alpha^(i-1)");
  f.opts["strength"] = cmd.add_option("--strength", f.strength, "penalty multiplier (0 = greedy)");
  f.opts["min_factual_prob"] =
      cmd.add_option("--min-factual-prob", f.min_factual_prob, "plausibility floor on p_fact (0 = off)");
  f.opts["timeout"] = cmd.add_option("--timeout", f.timeout_s, "remote request timeout in seconds");
  f.opts["max_new_tokens"] = cmd.add_option("--max-new-tokens", f.max_new_tokens, "generation budget");
  f.opts["top_n"] = cmd.add_option("--top-n", f.top_n, "knowledge pieces selected per example");
  f.opts["max_context_tokens"] = cmd.add_option("--max-context-tokens", f.max_context_tokens, "context cap");
  f.opts["top_k_remote"] = cmd.add_option("--top-k-remote", f.top_k_remote, "logprobs requested per remote call");
  f.opts["eos_id"] = cmd.add_option("--eos-id", f.eos_id, "override the end-of-sequence token id");
  f.opts["full_history"] = cmd.add_flag("--full-history", f.full_history, "score knowledge against all turns");
  f.opts["parallel"] = cmd.add_flag("--parallel", f.parallel, "query the two streams concurrently");
}

struct RunConfig {
  std::string model;
  EngineConfig engine;
  double timeout_s = 30.0;
  json file;  // the --config contents, for subcommand-specific keys
};

template <typename T>
void take(const json& file, const char* key, T& dst) {
  if (!file.contains(key)) return;
  try {
    dst = file[key].get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key \"") + key + "\": " + e.what());
  }
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig rc;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw UsageError("cannot open config file " + f.config_path);
    try {
      rc.file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config file " + f.config_path + ": " + e.what());
    }
    if (!rc.file.is_object()) throw UsageError("config file must hold a JSON object");
  } else {
    rc.file = json::object();
  }

  auto& e = rc.engine;
  auto& p = e.params;
  std::string null_mode = std::string(to_string(p.null_mode));
  std::string score_space = std::string(to_string(p.score_space));
  std::string template_path;
  std::optional<int> eos;

  // Layer 1: config file.
  take(rc.file, "model", rc.model);
  take(rc.file, "alpha", p.alpha);
  take(rc.file, "strength", p.strength);
  take(rc.file, "max_new_tokens", p.max_new_tokens);
  take(rc.file, "top_k_remote", p.top_k_remote);
  take(rc.file, "min_factual_prob", p.min_factual_prob);
  take(rc.file, "null_mode", null_mode);
  take(rc.file, "score_space", score_space);
  take(rc.file, "template", template_path);
  take(rc.file, "top_n", e.top_n);
  take(rc.file, "full_history", e.selector.use_full_history);
  take(rc.file, "max_context_tokens", e.context.max_context_tokens);
  take(rc.file, "timeout_s", rc.timeout_s);
  take(rc.file, "parallel", p.parallel_streams);
  if (rc.file.contains("eos_id")) {
    int v = 0;
    take(rc.file, "eos_id", v);
    eos = v;
  }

  // Layer 2: flags.
  if (f.given("model")) rc.model = f.model;
  if (f.given("alpha")) p.alpha = f.alpha;
  if (f.given("strength")) p.strength = f.strength;
  if (f.given("max_new_tokens")) p.max_new_tokens = f.max_new_tokens;
  if (f.given("top_k_remote")) p.top_k_remote = f.top_k_remote;
  if (f.given("min_factual_prob")) p.min_factual_prob = f.min_factual_prob;
  if (f.given("null_mode")) null_mode = f.null_mode;
  if (f.given("score_space")) score_space = f.score_space;
  if (f.given("template")) template_path = f.template_path;
  if (f.given("top_n")) e.top_n = f.top_n;
  if (f.given("full_history")) e.selector.use_full_history = f.full_history;
  if (f.given("max_context_tokens")) e.context.max_context_tokens = f.max_context_tokens;
  if (f.given("timeout")) rc.timeout_s = f.timeout_s;
  if (f.given("parallel")) p.parallel_streams = f.parallel;
  if (f.given("eos_id")) eos = f.eos_id;

  try {
    p.null_mode = null_mode_from_string(null_mode);
    p.score_space = score_space_from_string(score_space);
    p.validate();
  } catch (const Error& err) {
    throw UsageError(err.what());
  }
  if (eos) p.eos_id = TokenId{*eos};
  if (e.top_n < 1) throw UsageError("--top-n must be at least 1");
  if (!(rc.timeout_s > 0.0)) throw UsageError("--timeout must be positive");
  if (rc.model.empty()) throw UsageError("no model given; pass --model table:PATH or --model remote:URL");
  if (!template_path.empty()) e.tmpl = load_template(template_path);
  return rc;
}

std::unique_ptr<LanguageModel> open_model(const RunConfig& rc) {
  const auto& spec = rc.model;
  if (spec.rfind("table:", 0) == 0) return std::make_unique<TableLm>(load_table_lm(spec.substr(6)));
  if (spec == "remote" || spec.rfind("remote:", 0) == 0) {
    RemoteConfig c;
    if (spec == "remote") {
      auto env = remote_url_from_env();
      if (!env) throw UsageError("--model remote needs CFD_REMOTE_URL to be set");
      c.base_url = *env;
    } else {
      c.base_url = spec.substr(7);
    }
    c.top_k = rc.engine.params.top_k_remote;
    c.timeout = std::chrono::milliseconds(static_cast<long long>(rc.timeout_s * 1000.0));
    c.eos_id = rc.engine.params.eos_id;
    return std::make_unique<RemoteLm>(std::move(c));
  }
  throw UsageError("model spec must start with table: or remote: (got \"" + spec + "\")");
}

std::vector<DecodeMode> modes_of(const std::string& mode) {
  if (mode == "plain") return {DecodeMode::Plain};
  if (mode == "ah") return {DecodeMode::Ah};
  if (mode == "both") return {DecodeMode::Plain, DecodeMode::Ah};
  throw UsageError("--mode must be plain, ah, or both");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << content;
  if (!f) throw Error("failed writing " + path);
}

// ---------------------------------------------------------------------------

int cmd_decode(const RunConfig& rc, const std::string& dataset_path, const std::string& mode,
               const std::string& trace_path, std::ostream& out) {
  auto modes = modes_of(mode);
  auto lm = open_model(rc);
  auto ds = load_dataset(dataset_path);
  json traces = json::array();
  for (const auto& ex : ds.examples) {
    auto prepared = prepare_example(*lm, ex.history, ex.pool, rc.engine);
    for (auto m : modes) {
      auto r = decode_prepared(*lm, prepared, m, rc.engine);
      json line{{"example_id", ex.example_id},
                {"mode", to_string(m)},
                {"response", r.response.text},
                {"selected_knowledge_ids", prepared.selection.selected_ids()},
                {"stop_reason", to_string(r.trace.stop_reason)}};
      out << line.dump() << '\n';
      if (!trace_path.empty()) {
        auto t = to_json(r.trace, *lm);
        t["example_id"] = ex.example_id;
        t["mode"] = to_string(m);
        traces.push_back(std::move(t));
      }
    }
  }
  if (!trace_path.empty()) write_file(trace_path, traces.dump(2) + "\n");
  return kExitOk;
}

int cmd_trace(const RunConfig& rc, const std::string& dataset_path, std::size_t top_suppressed,
              const std::string& out_path, std::ostream& out) {
  auto lm = open_model(rc);
  auto ds = load_dataset(dataset_path);
  std::ostringstream buf;
  EffectTraceOptions opts;
  opts.top_suppressed = top_suppressed;
  opts.parallel_queries = rc.engine.params.parallel_streams;
  for (const auto& ex : ds.examples) {
    auto prepared = prepare_example(*lm, ex.history, ex.pool, rc.engine);
    auto decoded = decode_prepared(*lm, prepared, DecodeMode::Ah, rc.engine);
    auto null_ctx = null_context(*lm, ex.history, ex.pool, rc.engine);
    auto effects = trace_effects(*lm, null_ctx, decoded.trace, opts);
    auto j = to_json(effects, *lm);
    j["example_id"] = ex.example_id;
    j["response"] = decoded.response.text;
    buf << j.dump() << '\n';
  }
  if (out_path.empty()) {
    out << buf.str();
  } else {
    write_file(out_path, buf.str());
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, const std::string& dataset_path, const std::string& out_path, bool partial,
             std::string phrases_path, std::size_t min_tokens, std::size_t jobs, std::ostream& out,
             std::ostream& err) {
  EvalOptions opts;
  opts.engine = rc.engine;
  opts.generic_min_tokens = min_tokens;
  opts.jobs = jobs;
  if (phrases_path.empty()) phrases_path = CFD_DEFAULT_PHRASES;
  if (!phrases_path.empty() && std::filesystem::exists(phrases_path)) {
    opts.generic_phrases = load_phrase_list(phrases_path);
  } else {
    err << "warning: no generic phrase list found; only the length rule marks generic responses\n";
  }

  auto lm = open_model(rc);
  DatasetLoadOptions load;
  load.collect_errors = partial;
  auto ds = load_dataset(dataset_path, load);
  auto report = run_eval(*lm, ds, opts);
  auto text = to_json(report).dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    write_file(out_path, text);
  }
  if (report.partial) err << "warning: " << report.errors.size() << " example(s) failed; report is partial\n";
  return kExitOk;
}

KnowledgePool load_pool(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw Error("cannot open knowledge file " + path);
  std::vector<KnowledgePiece> pieces;
  std::string first;
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  try {
    auto j = json::parse(text);
    if (!j.is_array()) throw ParseError("knowledge file must hold a JSON array");
    for (const auto& entry : j) pieces.push_back(knowledge_from_json(entry));
  } catch (const json::parse_error&) {
    // Fall back to one JSON object per line.
    std::istringstream lines(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        pieces.push_back(knowledge_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what(), n);
      }
    }
  }
  return KnowledgePool(std::move(pieces));
}

void print_step_table(const DecodeResult& r, const LanguageModel& lm, std::ostream& out) {
  out << "step  chosen           lambda      p_fact      p_cf        combined\n";
  for (const auto& s : r.trace.steps) {
    auto find = [&](const ScoredTokens& v) -> std::string {
      for (const auto& [id, x] : v)
        if (id == s.chosen) {
          std::ostringstream o;
          o << std::fixed << std::setprecision(6) << x;
          return o.str();
        }
      return "-";
    };
    out << std::left << std::setw(6) << s.i << std::setw(17) << lm.token_text(s.chosen) << std::setw(12)
        << std::fixed << std::setprecision(6) << s.lambda_i << std::setw(12) << find(s.p_fact_topk)
        << std::setw(12) << find(s.p_cf_topk) << find(s.combined_topk) << '\n';
  }
  out << "stop: " << to_string(r.trace.stop_reason) << '\n';
}

int cmd_chat(const RunConfig& rc, const std::string& knowledge_path, std::istream& in, std::ostream& out,
             std::ostream& err) {
  auto lm = open_model(rc);
  auto pool = load_pool(knowledge_path);
  std::vector<Utterance> turns;
  std::optional<PreparedExample> last_prepared;
  std::optional<DecodeResult> last;

  err << "cfd chat: type a message, /knowledge, /trace, or /quit\n";
  std::string line;
  while (true) {
    err << "user> " << std::flush;
    if (!std::getline(in, line)) break;
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);

    if (line == "/quit") break;
    if (line == "/knowledge") {
      if (!last_prepared || last_prepared->selection.selected.empty()) {
        out << "(no knowledge selected)\n";
      } else {
        for (const auto& sp : last_prepared->selection.ranked) {
          bool chosen = std::any_of(last_prepared->selection.selected.begin(), last_prepared->selection.selected.end(),
                                    [&](const KnowledgePiece& p) { return p.id() == sp.piece.id(); });
          out << (chosen ? "* " : "  ") << sp.piece.id() << " (" << std::fixed << std::setprecision(4) << sp.score
              << ") " << render_knowledge(sp.piece) << '\n';
        }
      }
      continue;
    }
    if (line == "/trace") {
      if (!last) {
        out << "(nothing decoded yet)\n";
      } else {
        print_step_table(*last, *lm, out);
      }
      continue;
    }
    if (line[0] == '/') {
      err << "unknown command " << line << '\n';
      continue;
    }

    turns.emplace_back(Speaker::User, line);
    DialogueHistory history(turns);
    try {
      last_prepared = prepare_example(*lm, history, pool, rc.engine);
      last = decode_prepared(*lm, *last_prepared, DecodeMode::Ah, rc.engine);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      turns.pop_back();
      continue;
    }
    out << "system: " << last->response.text << '\n' << std::flush;
    if (last->response.text.find_first_not_of(" \t") != std::string::npos)
      turns.emplace_back(Speaker::System, last->response.text);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual dual decoding for knowledge-grounded dialogue", "cfd"};
  app.require_subcommand(1);

  CommonFlags decode_flags, chat_flags, trace_flags, eval_flags;

  auto* decode = app.add_subcommand("decode", "decode every example of a dataset");
  add_common(*decode, decode_flags);
  std::string decode_dataset, decode_mode = "ah", emit_trace;
  decode->add_option("--dataset", decode_dataset, "JSONL dataset")->required();
  decode->add_option("--mode", decode_mode, "plain | ah | both")->capture_default_str();
  decode->add_option("--emit-trace", emit_trace, "write per-step traces to this JSON file");

  auto* chat = app.add_subcommand("chat", "interactive dialogue with dual decoding");
  add_common(*chat, chat_flags);
  std::string knowledge_path;
  chat->add_option("--knowledge", knowledge_path, "knowledge pool (JSON array or JSONL)");

  auto* trace = app.add_subcommand("trace", "per-step TE/TDE/PIE effect report");
  add_common(*trace, trace_flags);
  std::string trace_dataset, trace_out;
  std::size_t top_suppressed = 10;
  trace->add_option("--dataset", trace_dataset, "JSONL dataset")->required();
  trace->add_option("--out", trace_out, "write the report here instead of stdout");
  trace->add_option("--top-suppressed", top_suppressed, "tokens listed per step")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "evaluate plain vs counterfactual decoding");
  add_common(*eval, eval_flags);
  std::string eval_dataset, eval_out, phrases_path;
  bool partial = false;
  std::size_t min_tokens = 3, jobs = 1;
  eval->add_option("--dataset", eval_dataset, "JSONL dataset")->required();
  eval->add_option("--out", eval_out, "report path (stdout if omitted)");
  eval->add_flag("--partial", partial, "skip malformed dataset lines and record them in the report");
  eval->add_option("--generic-phrases", phrases_path, "phrase list for the generic-response metric");
  eval->add_option("--min-tokens", min_tokens, "responses shorter than this count as generic")->capture_default_str();
  eval->add_option("--jobs", jobs, "examples evaluated concurrently")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == decode)
      return cmd_decode(resolve_config(decode_flags), decode_dataset, decode_mode, emit_trace, out);
    if (active == chat) return cmd_chat(resolve_config(chat_flags), knowledge_path, in, out, err);
    if (active == trace) return cmd_trace(resolve_config(trace_flags), trace_dataset, top_suppressed, trace_out, out);
    if (active == eval)
      return cmd_eval(resolve_config(eval_flags), eval_dataset, eval_out, partial, phrases_path, min_tokens, jobs,
                      out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cfd::cli
