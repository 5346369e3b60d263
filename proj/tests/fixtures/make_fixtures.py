#!/usr/bin/env python3
"""Regenerate the test fixtures in this directory.

Outputs (all deterministic for a fixed seed):
  hallucination_lm.json        table LM for the 10-example hallucination suite
  hallucination.jsonl          the suite itself
  hallucination_manifest.json  grounded/spurious tokens per example
  corpus_lm.json               table LM for the random corpus
  corpus.jsonl                 50 random examples
  tiny_lm.json                 small LM used by unit tests

Every corpus probability survives exp(log(p)) unchanged, and so does 1/|V|
for the corpus vocabulary, so the remote backend can be compared with the
table backend by exact equality.
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
RESERVED = ["<bos>", "<eos>", "<unk>"]
TEMPLATE_WORDS = ["knowledge:", "dialogue:", "response:", "user:", "system:", ";"]


def round_trips(p):
    return math.exp(math.log(p)) == p


def words(text):
    return text.lower().split()


def context_tokens(turns, knowledge, null_query_only=False):
    """Token sequence of the default prompt template."""
    kn = " ; ".join(knowledge)
    fmt = lambda t: ("user: " if t["speaker"] == "user" else "system: ") + t["text"]
    if null_query_only:
        prior, query = [], turns[-1]
    else:
        prior, query = turns[:-1], turns[-1]
    hist = " ".join(fmt(t) for t in prior)
    return words(f"knowledge: {kn} dialogue: {hist} {fmt(query)} response:")


def step1_keys(turns):
    """Shortest suffixes that tell the factual and counterfactual contexts apart."""
    n = len(words(turns[-1]["text"])) + 3
    f = context_tokens(turns, ["x"])[-n:]
    cf = context_tokens(turns, ["x"], null_query_only=True)[-n:]
    assert f != cf, (f, cf)
    return f, cf


def write_json(name, obj):
    (HERE / name).write_text(json.dumps(obj, indent=1) + "\n")


def write_jsonl(name, rows):
    (HERE / name).write_text("".join(json.dumps(r) + "\n" for r in rows))


# ---------------------------------------------------------------------------
# Hallucination suite

# Each case: prior user turn, prior system turn, query, knowledge text,
# grounded token, spurious token, factual step-1 dist, counterfactual step-1
# dist, and the continuation after each first token.
HALLU = [
    ("i love old towers", "hello", "where is the tower", "the tower stands in rome",
     "rome", "paris", {"paris": 0.55, "rome": 0.45}, {"paris": 0.90, "rome": 0.05, "<eos>": 0.05}),
    ("tell me about whales", "sure", "what do whales eat", "whales eat krill and small fish",
     "krill", "bread", {"bread": 0.6, "krill": 0.4}, {"bread": 0.9, "krill": 0.1}),
    ("i read a novel", "nice", "who wrote it", "the novel was written by austen",
     "austen", "dickens", {"dickens": 0.55, "austen": 0.45}, {"dickens": 0.8, "austen": 0.2}),
    ("i like rivers", "cool", "which river is longest", "the nile is the longest river",
     "nile", "amazon", {"amazon": 0.51, "nile": 0.49}, {"amazon": 0.7, "nile": 0.3}),
    ("planets are fun", "agreed", "which planet is largest", "jupiter is the largest planet",
     "jupiter", "saturn", {"saturn": 0.6, "jupiter": 0.4}, {"saturn": 0.95, "jupiter": 0.05}),
    ("i play chess", "great", "who is the champion", "the chess champion is carlsen",
     "carlsen", "kasparov", {"kasparov": 0.55, "carlsen": 0.45}, {"kasparov": 0.9, "carlsen": 0.1}),
    ("my cat sleeps a lot", "cats do", "how long do cats sleep", "cats sleep about sixteen hours a day",
     "sixteen", "eight", {"eight": 0.52, "sixteen": 0.48}, {"eight": 0.85, "sixteen": 0.15}),
    # Greedy already grounded; counterfactual decoding must keep it.
    ("i drink tea", "me too", "where is tea from", "tea comes from china",
     "china", "india", {"china": 0.7, "india": 0.3}, {"china": 0.4, "india": 0.6}),
    ("i like bridges", "so do i", "how old is the bridge", "the bridge is ninety years old",
     "ninety", "forty", {"ninety": 0.8, "forty": 0.2}, {"ninety": 0.5, "forty": 0.5}),
    ("volcanoes scare me", "understandable", "which volcano erupted", "the volcano etna erupted",
     "etna", "vesuvius", {"etna": 0.9, "vesuvius": 0.1}, {"etna": 0.45, "vesuvius": 0.55}),
]


def hallucination_suite():
    vocab = list(RESERVED) + list(TEMPLATE_WORDS)
    seen = set(vocab)

    def add(ws):
        for w in ws:
            if w not in seen:
                seen.add(w)
                vocab.append(w)

    rows, rules, manifest = [], [], {}
    for n, (u, s, q, kn, good, bad, pf, pcf) in enumerate(HALLU, start=1):
        eid = f"h{n:02d}"
        turns = [{"speaker": "user", "text": u}, {"speaker": "system", "text": s},
                 {"speaker": "user", "text": q}]
        knowledge = [{"id": f"{eid}-k1", "text": kn}]
        rows.append({"example_id": eid, "turns": turns, "knowledge": knowledge})
        for t in (u, s, q, kn, good, bad):
            add(words(t))
        kf, kcf = step1_keys(turns)
        rules.append({"context": kf, "dist": pf})
        rules.append({"context": kcf, "dist": pcf})
        # Both first tokens end the response.
        for w in (good, bad):
            rules.append({"context": ["response:", w], "dist": {"<eos>": 1.0}})
        manifest[eid] = {"grounded": [good], "spurious": [bad]}

    order = max(len(r["context"]) for r in rules)
    write_json("hallucination_lm.json", {"vocab": vocab, "order": order, "rules": rules})
    write_jsonl("hallucination.jsonl", rows)
    write_json("hallucination_manifest.json", manifest)


# ---------------------------------------------------------------------------
# Random corpus

GRID = [c for c in range(1, 100) if round_trips(c / 100)]


def random_dist(rng, support, allow_eos=True):
    """Probabilities c/100 on a random subset of `support`, each value exact."""
    if not allow_eos:
        support = [w for w in support if w != "<eos>"]
    k = rng.randint(2, min(5, len(support)))
    chosen = rng.sample(support, k)
    while True:
        cuts = sorted(rng.sample(range(1, 100), k - 1))
        parts = [b - a for a, b in zip([0] + cuts, cuts + [100])]
        if all(c in GRID for c in parts):
            break
    return {w: c / 100 for w, c in zip(chosen, parts)}


def corpus(seed=20240611, count=50):
    rng = random.Random(seed)
    content = [f"w{i:03d}" for i in range(60)]
    vocab = list(RESERVED) + list(TEMPLATE_WORDS) + content
    # Pad to a size whose uniform probability survives exp(log(.)).
    v = len(vocab)
    while not round_trips(1 / v):
        v += 1
    vocab += [f"pad{i}" for i in range(v - len(vocab))]
    assert round_trips(1 / len(vocab))

    out_words = content[:20] + ["<eos>"]
    rules, keys, rows = [], set(), []

    def rule(ctx, dist):
        key = tuple(ctx)
        if key in keys:
            return
        keys.add(key)
        rules.append({"context": list(ctx), "dist": dist})

    # Word bigrams shared by every example.
    for w in content[:20]:
        rule([w], random_dist(rng, out_words))
    # Keys reaching the knowledge segment, so effects with an empty null
    # history have a nonzero indirect part.
    rule(["dialogue:", "response:"], random_dist(rng, out_words))
    rule(["knowledge:", "dialogue:", "response:"], random_dist(rng, out_words))

    for n in range(count):
        eid = f"c{n:03d}"
        text = lambda lo, hi: " ".join(rng.choice(content) for _ in range(rng.randint(lo, hi)))
        turns = []
        for t in range(rng.choice([1, 3, 3, 5])):
            turns.append({"speaker": "user" if t % 2 == 0 else "system", "text": text(1, 4)})
        pool = [{"id": f"{eid}-k{j}", "text": text(2, 6)} for j in range(rng.randint(0, 4))]
        if rng.random() < 0.3 and pool:
            a, b, c = rng.sample(content, 3)
            pool.append({"id": f"{eid}-t", "subject": a, "relation": b, "object": c})
        rows.append({"example_id": eid, "turns": turns, "knowledge": pool})
        if len(turns) > 1:
            kf, kcf = step1_keys(turns)
            rule(kf, random_dist(rng, out_words, allow_eos=False))
            if rng.random() < 0.8:
                rule(kcf, random_dist(rng, out_words))
        # Second-step keys that straddle the context and the first token.
        if rng.random() < 0.5:
            rule(["response:", rng.choice(content[:20])], random_dist(rng, out_words))

    order = max(len(r["context"]) for r in rules)
    write_json("corpus_lm.json", {"vocab": vocab, "order": order, "rules": rules})
    write_jsonl("corpus.jsonl", rows)


# ---------------------------------------------------------------------------
# Tiny LM for unit tests

def tiny():
    vocab = list(RESERVED) + ["paris", "rome", "is", "the", "capital", "user:", "response:"]
    rules = [
        {"context": [], "dist": {"the": 0.5, "is": 0.5}},
        {"context": ["response:"], "dist": {"paris": 0.7, "rome": 0.3}},
        {"context": ["paris"], "dist": {"<eos>": 1.0}},
        {"context": ["rome"], "dist": {"is": 0.6, "<eos>": 0.4}},
        {"context": ["capital", "paris"], "dist": {"is": 1.0}},
    ]
    write_json("tiny_lm.json", {"vocab": vocab, "order": 2, "rules": rules})


if __name__ == "__main__":
    hallucination_suite()
    corpus()
    tiny()
