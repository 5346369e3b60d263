#include "cfd/remote.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "cfd/error.hpp"

namespace cfd {
namespace {

using nlohmann::json;

json parse_body(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(what + ": response is not valid JSON (" + e.what() + ")");
  }
}

json tokens_json(std::span<const TokenId> ids) {
  json arr = json::array();
  for (TokenId t : ids) arr.push_back(t.value);
  return arr;
}

}  // namespace

std::optional<std::string> remote_url_from_env() {
  const char* v = std::getenv("CFD_REMOTE_URL");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

NextTokenDistribution distribution_from_logprobs(
    std::size_t vocab_size, const std::vector<std::pair<TokenId, double>>& logprobs) {
  if (vocab_size == 0) throw BackendError("server reported an empty vocabulary");
  if (logprobs.size() > vocab_size) throw BackendError("more logprobs than vocabulary entries");
  std::vector<double> probs(vocab_size, 0.0);
  std::vector<bool> returned(vocab_size, false);
  double mass = 0.0;
  for (const auto& [id, lp] : logprobs) {
    if (id.value < 0 || static_cast<std::size_t>(id.value) >= vocab_size)
      throw BackendError("logprob for out-of-range token " + std::to_string(id.value));
    auto i = static_cast<std::size_t>(id.value);
    if (returned[i]) throw BackendError("token " + std::to_string(id.value) + " returned twice");
    if (std::isnan(lp) || lp > 0.0) throw BackendError("invalid logprob for token " + std::to_string(id.value));
    returned[i] = true;
    probs[i] = std::exp(lp);
    mass += probs[i];
  }
  if (mass > 1.0 + NextTokenDistribution::kSumTolerance)
    throw BackendError("returned probabilities sum to more than 1");
  const std::size_t rest = vocab_size - logprobs.size();
  // A residual within the normalization tolerance is rounding noise, not mass.
  const double residual = 1.0 - mass;
  if (rest > 0 && residual > NextTokenDistribution::kSumTolerance) {
    const double share = residual / static_cast<double>(rest);
    for (std::size_t i = 0; i < vocab_size; ++i)
      if (!returned[i]) probs[i] = share;
  }
  return NextTokenDistribution(std::move(probs), "remote distribution");
}

RemoteLm::RemoteLm(RemoteConfig config) : config_(std::move(config)) {
  if (config_.top_k < 1) throw DomainError("top_k must be positive");
  std::string url = config_.base_url;
  if (url.rfind("https://", 0) == 0) throw BackendError("https backends are not supported: " + url);
  if (url.rfind("http://", 0) != 0) url = "http://" + url;
  auto slash = url.find('/', 7);
  if (slash == std::string::npos) {
    scheme_host_port_ = url;
  } else {
    scheme_host_port_ = url.substr(0, slash);
    path_prefix_ = url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
  if (scheme_host_port_.size() <= 7) throw BackendError("malformed remote URL \"" + config_.base_url + "\"");

  auto info = get("/v1/info");
  if (info.status == 200) {
    auto j = parse_body(info.body, "/v1/info");
    try {
      vocab_size_ = j.at("vocab_size").get<std::size_t>();
      eos_id_ = TokenId{j.at("eos_id").get<std::int32_t>()};
      if (j.contains("bos_id")) bos_id_ = TokenId{j["bos_id"].get<std::int32_t>()};
    } catch (const json::exception& e) {
      throw BackendError(std::string("/v1/info: ") + e.what());
    }
    if (config_.eos_id) eos_id_ = *config_.eos_id;
  } else {
    if (!config_.eos_id)
      throw BackendError("server has no /v1/info endpoint; an explicit eos id is required");
    eos_id_ = *config_.eos_id;
    // One probe query reveals the vocabulary size.
    auto probe = post("/v1/next_token_logprobs", json{{"tokens", json::array()}, {"top_k", 1}}.dump());
    if (probe.status != 200)
      throw BackendError("/v1/next_token_logprobs returned HTTP " + std::to_string(probe.status));
    vocab_size_ = parse_body(probe.body, "/v1/next_token_logprobs").value("vocab_size", std::size_t{0});
  }
  if (vocab_size_ == 0) throw BackendError("server reported an empty vocabulary");
}

RemoteLm::Response RemoteLm::post(const std::string& path, const std::string& body) const {
  httplib::Client cli(scheme_host_port_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  auto res = cli.Post(path_prefix_ + path, body, "application/json");
  if (!res)
    throw BackendError("cannot reach " + scheme_host_port_ + path_prefix_ + path + ": " +
                       httplib::to_string(res.error()));
  return {res->status, res->body};
}

RemoteLm::Response RemoteLm::get(const std::string& path) const {
  httplib::Client cli(scheme_host_port_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  auto res = cli.Get(path_prefix_ + path);
  if (!res)
    throw BackendError("cannot reach " + scheme_host_port_ + path_prefix_ + path + ": " +
                       httplib::to_string(res.error()));
  return {res->status, res->body};
}

TokenSeq RemoteLm::tokenize(std::string_view text) const {
  auto res = post("/v1/tokenize", json{{"text", std::string(text)}}.dump());
  if (res.status != 200) throw BackendError("/v1/tokenize returned HTTP " + std::to_string(res.status));
  auto j = parse_body(res.body, "/v1/tokenize");
  TokenSeq ids;
  try {
    for (const auto& t : j.at("tokens")) {
      TokenId id{t.get<std::int32_t>()};
      if (id.value < 0 || static_cast<std::size_t>(id.value) >= vocab_size_)
        throw BackendError("/v1/tokenize returned out-of-range token " + std::to_string(id.value));
      ids.push_back(id);
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("/v1/tokenize: ") + e.what());
  }
  return ids;
}

std::string RemoteLm::detokenize(std::span<const TokenId> ids) const {
  TokenSeq kept;
  for (TokenId t : ids) {
    if (t.value < 0 || static_cast<std::size_t>(t.value) >= vocab_size_)
      throw DomainError("token id " + std::to_string(t.value) + " outside remote vocabulary");
    if (t == eos_id_ || (bos_id_ && t == *bos_id_)) continue;
    kept.push_back(t);
  }
  if (has_detokenize_.load()) {
    auto res = post("/v1/detokenize", json{{"tokens", tokens_json(kept)}}.dump());
    if (res.status == 200) {
      auto j = parse_body(res.body, "/v1/detokenize");
      if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
      throw BackendError("/v1/detokenize: missing \"text\"");
    }
    if (res.status != 404) throw BackendError("/v1/detokenize returned HTTP " + std::to_string(res.status));
    has_detokenize_.store(false);
  }
  std::string out;
  for (TokenId t : kept) {
    if (!out.empty()) out += ' ';
    out += "<" + std::to_string(t.value) + ">";
  }
  return out;
}

std::vector<std::pair<TokenId, double>> RemoteLm::top_logprobs(std::span<const TokenId> prefix,
                                                               int top_k) const {
  auto res = post("/v1/next_token_logprobs", json{{"tokens", tokens_json(prefix)}, {"top_k", top_k}}.dump());
  if (res.status != 200)
    throw BackendError("/v1/next_token_logprobs returned HTTP " + std::to_string(res.status) + ": " + res.body);
  auto j = parse_body(res.body, "/v1/next_token_logprobs");
  std::vector<std::pair<TokenId, double>> out;
  try {
    auto reported = j.at("vocab_size").get<std::size_t>();
    if (reported != vocab_size_)
      throw BackendError("vocab_size changed from " + std::to_string(vocab_size_) + " to " +
                         std::to_string(reported));
    for (const auto& entry : j.at("logprobs")) {
      if (!entry.is_array() || entry.size() != 2) throw BackendError("logprob entries must be [id, logprob]");
      out.emplace_back(TokenId{entry[0].get<std::int32_t>()}, entry[1].get<double>());
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("/v1/next_token_logprobs: ") + e.what());
  }
  return out;
}

NextTokenDistribution RemoteLm::next_distribution(std::span<const TokenId> prefix) const {
  return distribution_from_logprobs(vocab_size_, top_logprobs(prefix, config_.top_k));
}

// ---------------------------------------------------------------------------
// Stub server

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

TokenSeq read_tokens(const json& j, const TableLm& lm) {
  TokenSeq ids;
  for (const auto& t : j.at("tokens")) {
    TokenId id{t.get<std::int32_t>()};
    if (!lm.vocabulary().contains(id)) throw DomainError("token " + std::to_string(id.value) + " out of range");
    ids.push_back(id);
  }
  return ids;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const std::exception& e) {
      reply(res, 400, json{{"error", e.what()}});
    }
  };
}

}  // namespace

StubServer::StubServer(std::shared_ptr<const TableLm> lm, std::string host, int port)
    : lm_(std::move(lm)), host_(std::move(host)), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  const TableLm& model = *lm_;

  srv.Get("/v1/info", guarded([&model](const httplib::Request&, httplib::Response& res) {
    const auto& v = model.vocabulary();
    reply(res, 200,
          json{{"vocab_size", v.size()},
               {"bos_id", v.bos_id().value},
               {"eos_id", v.eos_id().value},
               {"unk_id", v.unk_id().value}});
  }));

  srv.Post("/v1/tokenize", guarded([&model](const httplib::Request& req, httplib::Response& res) {
    auto j = json::parse(req.body);
    reply(res, 200, json{{"tokens", tokens_json(model.tokenize(j.at("text").get<std::string>()))}});
  }));

  srv.Post("/v1/detokenize", guarded([&model](const httplib::Request& req, httplib::Response& res) {
    auto ids = read_tokens(json::parse(req.body), model);
    reply(res, 200, json{{"text", model.detokenize(ids)}});
  }));

  srv.Post("/v1/next_token_logprobs", guarded([&model](const httplib::Request& req, httplib::Response& res) {
    auto j = json::parse(req.body);
    auto ids = read_tokens(j, model);
    auto top_k = j.at("top_k").get<long long>();
    if (top_k < 1) throw DomainError("top_k must be positive");

    auto dist = model.next_distribution(ids);
    // Zero-probability tokens have no finite logprob and are never sent.
    std::vector<std::pair<std::int32_t, double>> ranked;
    for (std::size_t i = 0; i < dist.size(); ++i)
      if (dist.probs()[i] > 0.0) ranked.emplace_back(static_cast<std::int32_t>(i), dist.probs()[i]);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > static_cast<std::size_t>(top_k)) ranked.resize(static_cast<std::size_t>(top_k));

    json logprobs = json::array();
    for (const auto& [id, p] : ranked) logprobs.push_back(json::array({id, std::log(p)}));
    reply(res, 200, json{{"vocab_size", dist.size()}, {"logprobs", std::move(logprobs)}});
  }));

  if (port == 0) {
    port_ = srv.bind_to_any_port(host_);
  } else {
    port_ = srv.bind_to_port(host_, port) ? port : -1;
  }
  if (port_ < 0) throw BackendError("stub server cannot bind " + host_ + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

StubServer::~StubServer() { stop(); }

void StubServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void StubServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cfd
