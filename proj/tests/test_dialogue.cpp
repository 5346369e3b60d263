#include <doctest.h>

#include <random>

#include "cfd/error.hpp"
#include "support.hpp"

using namespace cfd;
using cfd::test::history;

TEST_SUITE("dialogue_model") {
  TEST_CASE("query_of returns the last user turn") {
    auto h = history({"hi", "hello", "who directed Inception?"});
    CHECK(query_of(h).text() == "who directed Inception?");
    CHECK(query_of(h).speaker() == Speaker::User);
    CHECK(query_of(history({"hi"})).text() == "hi");
  }

  TEST_CASE("history ending on a system turn is malformed") {
    CHECK_THROWS_AS(history({"a", "b"}), MalformedHistoryError);
    CHECK_THROWS_AS(DialogueHistory(std::vector<Utterance>{}), MalformedHistoryError);
  }

  TEST_CASE("blank utterances are rejected") {
    CHECK_THROWS_AS(Utterance(Speaker::User, ""), MalformedHistoryError);
    CHECK_THROWS_AS(Utterance(Speaker::User, " \t\n"), MalformedHistoryError);
  }

  TEST_CASE("null_history under both modes") {
    auto h = history({"hi", "hello", "capital of France?"});
    auto q = null_history(h, NullMode::QueryOnly);
    REQUIRE(q.size() == 1);
    CHECK(q.turns()[0].text() == "capital of France?");
    CHECK_FALSE(q.is_null());

    auto single = history({"q"});
    CHECK(null_history(single, NullMode::QueryOnly).turns()[0].text() == "q");

    auto e = null_history(history({"a", "b", "c"}), NullMode::Empty);
    CHECK(e.is_null());
    CHECK(e.size() == 0);
  }

  TEST_CASE("null_history is idempotent") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Utterance> turns;
      int n = 1 + 2 * static_cast<int>(rng() % 4);
      for (int i = 0; i < n; ++i)
        turns.emplace_back(i % 2 ? Speaker::System : Speaker::User, "t" + std::to_string(rng() % 100));
      DialogueHistory h(turns);
      for (auto mode : {NullMode::QueryOnly, NullMode::Empty}) {
        auto once = null_history(h, mode);
        auto twice = null_history(once, mode);
        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(once.turns()[i].text() == twice.turns()[i].text());
      }
    }
  }

  TEST_CASE("null mode names") {
    CHECK(null_mode_from_string("query_only") == NullMode::QueryOnly);
    CHECK(null_mode_from_string("empty") == NullMode::Empty);
    CHECK(to_string(NullMode::Empty) == "empty");
    CHECK_THROWS_AS(null_mode_from_string("none"), DomainError);
  }

  TEST_CASE("render_knowledge") {
    CHECK(render_knowledge(KnowledgePiece("k", "Inception was directed by Nolan")) ==
          "Inception was directed by Nolan");
    CHECK(render_knowledge(KnowledgePiece("k", KnowledgeTriple{"Inception", "director", "Nolan"})) ==
          "Inception director Nolan");
    CHECK(render_knowledge(KnowledgePiece("k", KnowledgeTriple{"a", "b", "c"})) == "a b c");
  }

  TEST_CASE("knowledge pieces need an id and visible text") {
    CHECK_THROWS_AS(KnowledgePiece("", "text"), InvariantError);
    CHECK_THROWS_AS(KnowledgePiece("k", "  "), InvariantError);
  }

  TEST_CASE("duplicate knowledge ids are named") {
    std::vector<KnowledgePiece> p{KnowledgePiece("k1", "a"), KnowledgePiece("k1", "b")};
    try {
      KnowledgePool pool(p);
      FAIL("expected InvariantError");
    } catch (const InvariantError& e) {
      CHECK(std::string(e.what()).find("k1") != std::string::npos);
    }
  }

  TEST_CASE("example JSON round trip") {
    DialogueExample ex{"e1", history({"hi", "hello", "q ?"}),
                       KnowledgePool({KnowledgePiece("a", "some text"),
                                      KnowledgePiece("b", KnowledgeTriple{"x", "y", "z"})}),
                       std::string("gold")};
    auto j = to_json(ex);
    auto back = example_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.gold_response == std::optional<std::string>("gold"));
    CHECK(back.pool.size() == 2);
  }

  TEST_CASE("example JSON errors") {
    using nlohmann::json;
    CHECK_THROWS_AS(example_from_json(json{{"example_id", "x"}}), ParseError);
    CHECK_THROWS_AS(example_from_json(json::parse(R"({"example_id":"x","turns":[{"speaker":"bot","text":"a"}]})")),
                    ParseError);
    CHECK_THROWS_AS(
        example_from_json(json::parse(R"({"example_id":"x","turns":[{"speaker":"user","text":"a"},
                                          {"speaker":"system","text":"b"}]})")),
        MalformedHistoryError);
    auto ok = example_from_json(json::parse(R"({"example_id":"x","turns":[{"speaker":"user","text":"a"}]})"));
    CHECK(ok.pool.empty());
  }
}
