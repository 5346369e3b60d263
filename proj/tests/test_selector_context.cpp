#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cfd/context_builder.hpp"
#include "cfd/error.hpp"
#include "cfd/knowledge_selector.hpp"
#include "support.hpp"

using namespace cfd;
using cfd::test::history;
using cfd::test::text_piece;

TEST_SUITE("knowledge_selector") {
  TEST_CASE("single-piece pool reduces to plain cosine") {
    KnowledgePool pool({text_piece("k", "france capital paris")});
    double s = score_piece(history({"capital of france"}), pool.pieces()[0], pool);
    // 2 shared terms, both vectors of norm sqrt(3).
    CHECK(s == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("disjoint and identical texts") {
    KnowledgePool pool({text_piece("k", "quantum chromodynamics")});
    CHECK(score_piece(history({"hello"}), pool.pieces()[0], pool) == 0.0);
    KnowledgePool same({text_piece("k", "the cat sat"), text_piece("j", "a dog ran")});
    CHECK(score_piece(history({"The cat sat"}), same.pieces()[0], same) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("selection order and ties") {
    KnowledgePool pool({text_piece("k2", "weather today"), text_piece("k1", "paris is the capital of france")});
    auto r = select_knowledge(history({"capital of france"}), pool, 1);
    CHECK(r.selected_ids() == std::vector<std::string>{"k1"});

    KnowledgePool tie({text_piece("b", "red apple"), text_piece("a", "red apple")});
    auto t = select_knowledge(history({"red"}), tie, 1);
    CHECK(t.selected_ids() == std::vector<std::string>{"a"});

    CHECK(select_knowledge(history({"x"}), KnowledgePool{}, 3).selected.empty());
    CHECK_THROWS_AS(select_knowledge(history({"x"}), pool, 0), DomainError);
  }

  TEST_CASE("null history selects nothing") {
    KnowledgePool pool({text_piece("k", "a b")});
    auto e = null_history(history({"a", "b", "a"}), NullMode::Empty);
    CHECK(select_knowledge(e, pool, 2).selected.empty());
  }

  TEST_CASE("full history widens the query") {
    KnowledgePool pool({text_piece("k1", "jazz music"), text_piece("k2", "tell more")});
    auto h = history({"i love jazz music", "me too", "tell me more"});
    CHECK(select_knowledge(h, pool, 1).selected_ids()[0] == "k2");
    SelectorOptions full{true};
    CHECK(select_knowledge(h, pool, 1, full).ranked[0].score > 0.0);
  }

  TEST_CASE("selection is invariant under pool permutation") {
    std::mt19937 rng(3);
    const char* words[] = {"red", "green", "blue", "cat", "dog", "sun", "moon", "tree"};
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<KnowledgePiece> pieces;
      for (int i = 0; i < 6; ++i) {
        std::string t;
        for (int w = 0; w < 3; ++w) t += std::string(words[rng() % 8]) + " ";
        pieces.push_back(text_piece("p" + std::to_string(i), t));
      }
      auto h = history({"red cat moon"});
      auto base = select_knowledge(h, KnowledgePool(pieces), 3);
      for (int perm = 0; perm < 5; ++perm) {
        std::shuffle(pieces.begin(), pieces.end(), rng);
        auto r = select_knowledge(h, KnowledgePool(pieces), 3);
        CHECK(r.selected_ids() == base.selected_ids());
      }
      for (const auto& sp : base.ranked) {
        CHECK(sp.score >= 0.0);
        CHECK(sp.score <= 1.0);
      }
    }
  }
}

namespace {

TableLm words_lm() {
  // Vocabulary covering every word of the examples below.
  return table_lm_from_json(nlohmann::json::parse(R"({"vocab":["<bos>","<eos>","<unk>",
    "knowledge:","dialogue:","response:","user:","system:",";","france","capital","paris","hi","hello","of","?",
    "k1","k2","text","other"],
    "order":1,"rules":[]})"));
}

std::string words_of(const TokenSeq& t, const LanguageModel& lm) {
  std::string s;
  for (auto id : t) s += (s.empty() ? "" : " ") + lm.token_text(id);
  return s;
}

}  // namespace

TEST_SUITE("context_builder") {
  const auto tmpl = PromptTemplate::default_template();
  const auto h = history({"hi", "hello", "capital of france ?"});
  const std::vector<KnowledgePiece> k{text_piece("k", "france capital paris")};

  TEST_CASE("factual context") {
    auto lm = words_lm();
    auto c = build_factual(h, k, tmpl, lm);
    CHECK(words_of(c.tokens, lm) ==
          "knowledge: france capital paris dialogue: user: hi system: hello user: capital of france ? response:");
    CHECK(c.provenance == Provenance::Factual);
    CHECK(c.selected_knowledge_ids == std::vector<std::string>{"k"});

    auto empty = build_factual(h, {}, tmpl, lm);
    CHECK(words_of(empty.tokens, lm) ==
          "knowledge: dialogue: user: hi system: hello user: capital of france ? response:");
    auto single = build_factual(history({"hi"}), k, tmpl, lm);
    CHECK(words_of(single.tokens, lm) == "knowledge: france capital paris dialogue: user: hi response:");
  }

  TEST_CASE("counterfactual context") {
    auto lm = words_lm();
    auto q = build_counterfactual(h, k, tmpl, lm, NullMode::QueryOnly);
    CHECK(words_of(q.tokens, lm) == "knowledge: france capital paris dialogue: user: capital of france ? response:");
    CHECK(q.provenance == Provenance::Counterfactual);
    auto e = build_counterfactual(h, k, tmpl, lm, NullMode::Empty);
    CHECK(words_of(e.tokens, lm) == "knowledge: france capital paris dialogue: response:");
    auto none = build_counterfactual(h, {}, tmpl, lm, NullMode::QueryOnly);
    CHECK(words_of(none.tokens, lm) == "knowledge: dialogue: user: capital of france ? response:");
  }

  TEST_CASE("null context") {
    auto lm = words_lm();
    KnowledgePool pool({text_piece("k1", "france capital paris"), text_piece("k2", "hello")});
    auto e = build_null(h, pool, 1, tmpl, lm, NullMode::Empty);
    CHECK(words_of(e.tokens, lm) == "knowledge: dialogue: response:");
    CHECK(e.provenance == Provenance::Null);
    auto q = build_null(h, pool, 1, tmpl, lm, NullMode::QueryOnly);
    CHECK(words_of(q.tokens, lm) == "knowledge: france capital paris dialogue: user: capital of france ? response:");
    CHECK(q.selected_knowledge_ids == std::vector<std::string>{"k1"});
    auto bare = build_null(h, KnowledgePool{}, 1, tmpl, lm, NullMode::QueryOnly);
    CHECK(words_of(bare.tokens, lm) == "knowledge: dialogue: user: capital of france ? response:");
  }

  TEST_CASE("factual and counterfactual share everything but the history") {
    auto lm = words_lm();
    auto f = build_factual(h, k, tmpl, lm);
    auto c = build_counterfactual(h, k, tmpl, lm, NullMode::QueryOnly);
    // Common tail: the query and response cue.
    auto tail = lm.tokenize("user: capital of france ? response:");
    CHECK(std::equal(tail.rbegin(), tail.rend(), f.tokens.rbegin()));
    CHECK(std::equal(tail.rbegin(), tail.rend(), c.tokens.rbegin()));
    CHECK(f.selected_knowledge_ids == c.selected_knowledge_ids);
  }

  TEST_CASE("template placeholders are filled once") {
    // Knowledge text that looks like a placeholder stays literal.
    std::vector<KnowledgePiece> tricky{text_piece("k", "{QUERY} {HISTORY}")};
    auto text = tmpl.instantiate(h, tricky);
    CHECK(text.find("{QUERY} {HISTORY}") != std::string::npos);
    CHECK_THROWS_AS(PromptTemplate("no query here", "user:", "system:", " ; "), InvariantError);
    CHECK_THROWS_AS(PromptTemplate("{QUERY} {QUERY}", "user:", "system:", " ; "), InvariantError);
  }

  TEST_CASE("template JSON round trip") {
    PromptTemplate t("K {KNOWLEDGE} | {HISTORY} | {QUERY} =>", "U", "S", " / ");
    auto back = template_from_json(to_json(t));
    CHECK(to_json(back) == to_json(t));
    auto d = template_from_json(nlohmann::json::object());
    CHECK(to_json(d) == to_json(PromptTemplate::default_template()));
  }

  TEST_CASE("context budget drops old turns first") {
    auto lm = words_lm();
    auto long_h = history({"hi", "hello", "hi", "hello", "capital of france ?"});
    auto full = build_factual(long_h, k, tmpl, lm);
    for (std::size_t cap : {full.tokens.size(), full.tokens.size() - 1, std::size_t(12), std::size_t(5)}) {
      auto c = build_factual(long_h, k, tmpl, lm, ContextOptions{cap});
      CHECK(c.tokens.size() <= cap);
      // The end of the prompt always survives.
      CHECK(lm.token_text(c.tokens.back()) == "response:");
    }
    // One token over: the oldest turn goes, nothing else.
    auto c = build_factual(long_h, k, tmpl, lm, ContextOptions{full.tokens.size() - 1});
    CHECK(words_of(c.tokens, lm) ==
          "knowledge: france capital paris dialogue: system: hello user: hi system: hello user: capital of france ? "
          "response:");
  }
}
