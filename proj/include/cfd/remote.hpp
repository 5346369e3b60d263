#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cfd/lm_provider.hpp"

namespace httplib {
class Server;
}

namespace cfd {

// Wire protocol (HTTP/1.1, JSON):
//   POST /v1/tokenize            {"text": str}                  -> {"tokens": [int...]}
//   POST /v1/next_token_logprobs {"tokens": [int...], "top_k": n} -> {"vocab_size": int,
//                                                                   "logprobs": [[id, lp]...]}
// Optional extensions, used when the server offers them:
//   GET  /v1/info                -> {"vocab_size", "bos_id", "eos_id", "unk_id"}
//   POST /v1/detokenize          {"tokens": [int...]}           -> {"text": str}
struct RemoteConfig {
  std::string base_url;
  int top_k = 50;
  std::chrono::milliseconds timeout{30'000};
  // Required when the server has no /v1/info endpoint.
  std::optional<TokenId> eos_id;
};

// Base URL from CFD_REMOTE_URL, if set and non-empty.
std::optional<std::string> remote_url_from_env();

// Convert a top-k log-probability list into a full distribution: returned ids
// get exp(lp), the residual mass 1 - sum is spread evenly over the rest (a
// residual below NextTokenDistribution::kSumTolerance counts as zero).
// Throws BackendError on malformed input.
NextTokenDistribution distribution_from_logprobs(
    std::size_t vocab_size, const std::vector<std::pair<TokenId, double>>& logprobs);

// Client for a remote backend. Each call opens its own connection, so the
// object is safe to share between threads.
class RemoteLm final : public LanguageModel {
 public:
  // Contacts the server once to learn the vocabulary size and eos id.
  // Throws BackendError if it cannot be reached.
  explicit RemoteLm(RemoteConfig config);

  std::size_t vocab_size() const override { return vocab_size_; }
  TokenId eos_id() const override { return eos_id_; }
  TokenSeq tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  NextTokenDistribution next_distribution(std::span<const TokenId> prefix) const override;
  std::string model_id() const override { return "remote:" + config_.base_url; }

  // Raw top-k answer, before residual spreading.
  std::vector<std::pair<TokenId, double>> top_logprobs(std::span<const TokenId> prefix,
                                                       int top_k) const;

  const RemoteConfig& config() const noexcept { return config_; }

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response post(const std::string& path, const std::string& body) const;
  Response get(const std::string& path) const;

  RemoteConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::size_t vocab_size_ = 0;
  TokenId eos_id_{};
  std::optional<TokenId> bos_id_;
  mutable std::atomic<bool> has_detokenize_{true};
};

// Serves a TableLm over the wire protocol on a background thread. Used by
// the conformance tests and by the cfd_stub_server tool.
class StubServer {
 public:
  // port 0 binds an ephemeral port.
  StubServer(std::shared_ptr<const TableLm> lm, std::string host = "127.0.0.1", int port = 0);
  ~StubServer();

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  int port() const noexcept { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }
  // Blocks until the listener exits.
  void wait();
  void stop();

 private:
  std::shared_ptr<const TableLm> lm_;
  std::string host_;
  int port_ = 0;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace cfd
