#include <doctest.h>

#include <random>

#include "cfd/error.hpp"
#include "support.hpp"

using namespace cfd;
using nlohmann::json;

namespace {

Vocabulary small_vocab() { return Vocabulary({"<bos>", "<eos>", "<unk>", "paris", "is", "rome"}); }

TableLm lm_from(const char* text) { return table_lm_from_json(json::parse(text)); }

}  // namespace

TEST_SUITE("lm_provider") {
  TEST_CASE("tokenize and detokenize") {
    auto v = small_vocab();
    CHECK(tokenize("Paris is", v) == TokenSeq{TokenId{3}, TokenId{4}});
    CHECK(tokenize("", v).empty());
    CHECK(tokenize("zzz", v) == TokenSeq{v.unk_id()});
    CHECK(detokenize(TokenSeq{TokenId{3}, TokenId{4}}, v) == "paris is");
    CHECK(detokenize(TokenSeq{}, v).empty());
    CHECK(detokenize(TokenSeq{v.bos_id(), TokenId{3}, v.eos_id()}, v) == "paris");
  }

  TEST_CASE("vocabulary invariants") {
    CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "<unk>"}), InvariantError);
    CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "a", "b"}), InvariantError);
    CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "<unk>", "a", "A"}), InvariantError);
    auto v = small_vocab();
    CHECK_THROWS_AS(v.surface(TokenId{6}), DomainError);
    CHECK_THROWS_AS(v.surface(TokenId{-1}), DomainError);
  }

  TEST_CASE("distribution validation") {
    CHECK_NOTHROW(NextTokenDistribution({0.25, 0.75}));
    CHECK_THROWS_AS(NextTokenDistribution({0.5, 0.3}), InvariantError);
    CHECK_THROWS_AS(NextTokenDistribution({1.2, -0.2}), InvariantError);
    CHECK_THROWS_AS(NextTokenDistribution({std::nan(""), 1.0}), InvariantError);
    CHECK_THROWS_AS(NextTokenDistribution({}), InvariantError);
    auto u = NextTokenDistribution::uniform(4);
    for (double p : u.probs()) CHECK(p == 0.25);
  }

  TEST_CASE("rule lookup by longest suffix") {
    auto lm = lm_from(R"({"vocab":["<bos>","<eos>","<unk>","capital","of","france","paris","rome","a","b","c"],
      "order": 3,
      "rules": [
        {"context":["capital","of","france"], "dist":{"paris":0.9,"rome":0.1}},
        {"context":["b","c"], "dist":{"a":1.0}},
        {"context":["c"], "dist":{"b":1.0}}
      ]})");
    auto p = lm.next_distribution(lm.tokenize("what is the capital of france"));
    CHECK(p[TokenId{6}] == 0.9);
    CHECK(p[TokenId{7}] == 0.1);

    // No rule matches: uniform.
    auto u = lm.next_distribution(lm.tokenize("paris rome"));
    for (double x : u.probs()) CHECK(x == doctest::Approx(1.0 / 11).epsilon(1e-15));

    // [a,b,c] has no rule; [b,c] beats [c].
    auto s = lm.next_distribution(lm.tokenize("a b c"));
    CHECK(s[TokenId{8}] == 1.0);
  }

  TEST_CASE("empty-context rule is the last resort before uniform") {
    auto lm = lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x","y"],"order":1,
      "rules":[{"context":[],"dist":{"x":1.0}},{"context":["x"],"dist":{"y":1.0}}]})");
    CHECK(lm.next_distribution(lm.tokenize("y"))[TokenId{3}] == 1.0);
    CHECK(lm.next_distribution(TokenSeq{})[TokenId{3}] == 1.0);
    CHECK(lm.next_distribution(lm.tokenize("x"))[TokenId{4}] == 1.0);
  }

  TEST_CASE("spec errors") {
    CHECK_THROWS_AS(lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x"],"order":1,
      "rules":[{"context":["x"],"dist":{"x":0.8}}]})"),
                    InvariantError);
    try {
      lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x"],"order":1,
        "rules":[{"context":["x"],"dist":{"x":1.0}},{"context":["x"],"dist":{"<eos>":1.0}}]})");
      FAIL("expected duplicate key error");
    } catch (const InvariantError& e) {
      CHECK(std::string(e.what()).find("duplicate rule key [\"x\"]") != std::string::npos);
    }
    CHECK_THROWS_AS(lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x"],"order":1,
      "rules":[{"context":["x","x"],"dist":{"x":1.0}}]})"),
                    InvariantError);
    CHECK_THROWS_AS(lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x"],"order":1,
      "rules":[{"context":["q"],"dist":{"x":1.0}}]})"),
                    InvariantError);
    CHECK_THROWS_AS(lm_from(R"({"vocab":["<bos>","<eos>","<unk>","x"]})"), ParseError);
  }

  TEST_CASE("load_table_lm") {
    auto lm = load_table_lm(cfd::test::fixture("tiny_lm.json"));
    CHECK(lm.vocab_size() == 10);
    CHECK(lm.model_id() == "table:tiny_lm.json");
    CHECK(lm.eos_id() == TokenId{1});

    cfd::test::TempFile bad("{\"vocab\": [\n  \"a\",,\n]}", ".json");
    try {
      load_table_lm(bad.path());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(bad.str()) != std::string::npos);
    }
    CHECK_THROWS_AS(load_table_lm("/nonexistent/spec.json"), Error);
  }

  TEST_CASE("prefix tokens outside the vocabulary") {
    auto lm = load_table_lm(cfd::test::fixture("tiny_lm.json"));
    TokenSeq bad{TokenId{99}};
    CHECK_THROWS_AS(lm.next_distribution(bad), DomainError);
  }

  TEST_CASE("every returned distribution is normalized") {
    auto lm = load_table_lm(cfd::test::fixture("corpus_lm.json"));
    std::mt19937 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      TokenSeq prefix;
      auto len = rng() % 12;
      for (std::size_t i = 0; i < len; ++i)
        prefix.push_back(TokenId{static_cast<int32_t>(rng() % lm.vocab_size())});
      auto d = lm.next_distribution(prefix);
      double s = 0;
      for (double p : d.probs()) {
        CHECK(p >= 0.0);
        s += p;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}
