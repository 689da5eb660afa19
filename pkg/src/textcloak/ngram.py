"""Bigram language model with add-k smoothing, used to rank replacement
candidates by how well they fit between their neighboring words."""

from __future__ import annotations

import json
import math
from collections import Counter

BOUNDARY = "</s>"


class NgramModel:
    """Bigram/unigram counts over a tokenized corpus.

    ``context[x]`` counts only bigrams whose target is a real vocabulary
    token, so that P(. | x) is a proper distribution over the vocabulary.
    Bigrams into the boundary marker are still stored and smoothed, which
    lets the marker act as an ordinary context on both sides.
    """

    def __init__(self, k_smooth: float = 0.1):
        if k_smooth <= 0:
            raise ValueError("k_smooth must be > 0")
        self.k_smooth = k_smooth
        self.bigram: Counter = Counter()
        self.context: Counter = Counter()
        self.vocab: set[str] = set()

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def prob(self, ctx: str, tok: str) -> float:
        k = self.k_smooth
        return (self.bigram[(ctx, tok)] + k) / (self.context[ctx] + k * self.vocab_size)


def fit(docs, k_smooth: float = 0.1) -> NgramModel:
    """Count adjacent token pairs with a boundary marker on both ends.

    ``docs`` may be TokenizedDocuments or plain token lists.
    """
    model = NgramModel(k_smooth)
    n_seqs = 0
    for doc in docs:
        tokens = doc.tokens if hasattr(doc, "tokens") else list(doc)
        if not tokens:
            continue
        n_seqs += 1
        model.vocab.update(tokens)
        seq = [BOUNDARY] + tokens + [BOUNDARY]
        for a, b in zip(seq, seq[1:]):
            model.bigram[(a, b)] += 1
            if b != BOUNDARY:
                model.context[a] += 1
    if n_seqs == 0:
        raise ValueError("empty corpus")
    return model


def context_score(model: NgramModel, prev: str, cand: str, nxt: str) -> float:
    """log P(cand | prev) + log P(nxt | cand); higher fits the context better."""
    return math.log(model.prob(prev, cand)) + math.log(model.prob(cand, nxt))


def save(model: NgramModel, path: str) -> None:
    payload = {
        "format_version": 1,
        "k_smooth": model.k_smooth,
        "vocab": sorted(model.vocab),
        "bigram": [[a, b, c] for (a, b), c in sorted(model.bigram.items())],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load(path: str) -> NgramModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise ValueError(f"unsupported ngram file version in {path}")
    model = NgramModel(payload["k_smooth"])
    model.vocab = set(payload["vocab"])
    for a, b, c in payload["bigram"]:
        model.bigram[(a, b)] = c
        if b != BOUNDARY:
            model.context[a] += c
    return model
