#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cfd/dialogue.hpp"
#include "cfd/lm_provider.hpp"
#include "cfd/remote.hpp"

#ifndef CFD_FIXTURE_DIR
#error "CFD_FIXTURE_DIR must be defined"
#endif

namespace cfd::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CFD_FIXTURE_DIR) / name; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Alternating user/system turns, starting with the user.
inline DialogueHistory history(std::initializer_list<const char*> turns) {
  std::vector<Utterance> u;
  bool user = true;
  for (const char* t : turns) {
    u.emplace_back(user ? Speaker::User : Speaker::System, t);
    user = !user;
  }
  return DialogueHistory(std::move(u));
}

inline KnowledgePiece text_piece(std::string id, std::string text) { return KnowledgePiece(std::move(id), std::move(text)); }

inline NextTokenDistribution dist(std::vector<double> p) { return NextTokenDistribution(std::move(p)); }

inline RemoteConfig remote_config(std::string url, int top_k,
                                  std::chrono::milliseconds timeout = std::chrono::milliseconds(30'000)) {
  RemoteConfig c;
  c.base_url = std::move(url);
  c.top_k = top_k;
  c.timeout = timeout;
  return c;
}

// A scratch file removed on destruction.
class TempFile {
 public:
  explicit TempFile(const std::string& content, const std::string& suffix = ".txt") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cfd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + suffix);
    std::ofstream(path_, std::ios::binary) << content;
  }
  ~TempFile() { std::filesystem::remove(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Reference metrics, written from the definitions and kept deliberately naive.

namespace oracle {

inline std::vector<std::string> toks(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) {
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(w);
  }
  return out;
}

inline double unigram_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::vector<std::string> pool = ref;
  int common = 0;
  for (const auto& w : hyp) {
    auto it = std::find(pool.begin(), pool.end(), w);
    if (it != pool.end()) {
      ++common;
      pool.erase(it);
    }
  }
  if (common == 0) return 0.0;
  double p = double(common) / double(hyp.size());
  double r = double(common) / double(ref.size());
  return 2 * p * r / (p + r);
}

// Reference bag is the per-word maximum count across the knowledge texts.
inline double knowledge_f1(const std::string& response, const std::vector<std::string>& texts) {
  std::map<std::string, int> best;
  for (const auto& t : texts) {
    std::map<std::string, int> c;
    for (const auto& w : toks(t)) ++c[w];
    for (const auto& [w, n] : c) best[w] = std::max(best[w], n);
  }
  std::vector<std::string> ref;
  for (const auto& [w, n] : best)
    for (int i = 0; i < n; ++i) ref.push_back(w);
  return unigram_f1(toks(response), ref);
}

inline double distinct(const std::vector<std::string>& responses, int n) {
  std::set<std::vector<std::string>> uniq;
  std::size_t total = 0;
  for (const auto& r : responses) {
    auto t = toks(r);
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      uniq.insert(std::vector<std::string>(t.begin() + i, t.begin() + i + n));
      ++total;
    }
  }
  return total ? double(uniq.size()) / double(total) : 0.0;
}

inline double generic_rate(const std::vector<std::string>& responses, const std::vector<std::string>& phrases,
                           std::size_t min_tokens) {
  if (responses.empty()) return 0.0;
  int hits = 0;
  for (const auto& r : responses) {
    auto t = toks(r);
    bool generic = t.size() < min_tokens;
    for (const auto& p : phrases) {
      auto pt = toks(p);
      if (pt.empty() || pt.size() > t.size()) continue;
      for (std::size_t i = 0; i + pt.size() <= t.size(); ++i)
        if (std::equal(pt.begin(), pt.end(), t.begin() + i)) generic = true;
    }
    hits += generic ? 1 : 0;
  }
  return double(hits) / double(responses.size());
}

}  // namespace oracle
}  // namespace cfd::test
