"""Synthetic planted-keyword benchmarks.

Fully controlled attack scenarios used by the test suite and the bench
subcommand. Each document carries one strong keyword and one weaker style
word that both point at its label along a single embedding axis; everything
else is an inert filler. The keyword has an in-threshold neighbor of the
opposite class, so a one-word substitution is always a valid escape route,
and filler substitutions provably change nothing.

``keyword_model`` builds a bag-of-embeddings classifier with hand-set
weights whose confidence depends only on the signal axis; it gives exact
control over gradient magnitudes, which keeps importance-guided search
measurably ahead of uniform sampling.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from . import ngram
from .classifier import BoeMlp
from .corpus import (
    DatasetSplit,
    RawRecord,
    TokenizedDocument,
    Vocabulary,
    build_vocab,
    split as split_corpus,
    tokenize_corpus,
)
from .embeddings import EmbeddingTable

LABELS = ("north", "south")
KEYWORDS = {"north": "bagel", "south": "queso"}
STYLE_WORDS = {"north": "maple", "south": "cactus"}

FILLERS = (
    "the", "and", "was", "are", "with", "this", "that", "have", "been", "from",
    "they", "were", "when", "will", "just", "very", "time", "day", "week", "year",
    "back", "here", "there", "what",
)


def make_table(
    kw_scale: float = 0.24,
    style_scale: float = 0.12,
    dim: int = 8,
    filler_mag: float = 0.7,
    jitter: float = 0.01,
    seed: int = 0,
    fillers: tuple[str, ...] = FILLERS,
) -> EmbeddingTable:
    """Keywords/style words sit on axis 0; fillers cluster far away on axis 1.

    With the default threshold 0.5, a keyword's neighbors are exactly the
    other three signal words (opposite keyword at 2*kw_scale) while fillers
    stay out of reach at sqrt(kw_scale^2 + filler_mag^2).
    """
    rng = np.random.default_rng(seed)
    vectors: dict[str, np.ndarray] = {}

    def on_axis0(value: float) -> np.ndarray:
        v = np.zeros(dim)
        v[0] = value
        return v

    vectors[KEYWORDS["north"]] = on_axis0(kw_scale)
    vectors[KEYWORDS["south"]] = on_axis0(-kw_scale)
    vectors[STYLE_WORDS["north"]] = on_axis0(style_scale)
    vectors[STYLE_WORDS["south"]] = on_axis0(-style_scale)
    for filler in fillers:
        v = np.zeros(dim)
        v[1] = filler_mag
        v[2:] = rng.normal(0.0, jitter, size=dim - 2)
        vectors[filler] = v
    return EmbeddingTable(vectors, dim)


def make_records(
    n_docs: int = 500,
    doc_len: int = 12,
    seed: int = 0,
    fillers: tuple[str, ...] = FILLERS,
) -> list[RawRecord]:
    """Balanced two-class corpus: per doc one keyword, one style word, fillers."""
    if doc_len < 3:
        raise ValueError("doc_len must be >= 3")
    rng = random.Random(seed)
    records = []
    for i in range(n_docs):
        label = LABELS[i % 2]
        tokens = [KEYWORDS[label], STYLE_WORDS[label]]
        tokens += rng.choices(fillers, k=doc_len - 2)
        rng.shuffle(tokens)
        records.append(RawRecord(label, " ".join(tokens)))
    return records


@dataclass
class PlantedSetup:
    records: list[RawRecord]
    docs: list[TokenizedDocument]
    label_names: list[str]
    vocab: Vocabulary
    split: DatasetSplit
    table: EmbeddingTable  # candidate-search space (neighbor threshold applies here)
    clf_table: EmbeddingTable  # classifier input space
    lm: ngram.NgramModel


def make_setup(
    n_docs: int = 500,
    doc_len: int = 12,
    kw_scale: float = 0.24,
    style_scale: float = 0.12,
    seed: int = 0,
    train_ratio: float = 0.8,
    clf_kw_scale: float | None = None,
    clf_style_scale: float | None = None,
) -> PlantedSetup:
    """Planted corpus plus embedding tables and a context model.

    By default one table serves candidate search and the classifier. Passing
    ``clf_kw_scale``/``clf_style_scale`` builds a second table for the
    classifier with a larger signal, mirroring the two-space setup where
    candidates come from a distance-curated space and the model reads a
    generic one.
    """
    records = make_records(n_docs, doc_len, seed)
    docs, label_names = tokenize_corpus(records)
    vocab = build_vocab(docs, min_count=1, label_names=label_names)
    data_split = split_corpus(docs, train_ratio, seed)
    table = make_table(kw_scale, style_scale, seed=seed)
    if clf_kw_scale is None:
        clf_table = table
    else:
        clf_table = make_table(
            clf_kw_scale,
            clf_style_scale if clf_style_scale is not None else clf_kw_scale / 2,
            seed=seed,
        )
    lm = ngram.fit(data_split.train)
    return PlantedSetup(records, docs, label_names, vocab, data_split, table, clf_table, lm)


def keyword_model(
    table: EmbeddingTable,
    doc_len: int,
    confidence: float = 0.88,
    tanh_point: float = 0.6,
    keyword: str = KEYWORDS["north"],
    style: str = STYLE_WORDS["north"],
) -> BoeMlp:
    """Bag-of-embeddings model with hand-set weights.

    The two hidden units read +/- the signal axis, scaled so a clean document
    lands at ``tanh_point`` (away from saturation, keeping input gradients
    large), and the output weight is chosen so clean documents score
    ``confidence`` for their true class.
    """
    if not 0.5 < confidence < 1:
        raise ValueError("confidence must be in (0.5, 1)")
    kw_scale = float(table.vector(keyword)[0])
    style_scale = float(table.vector(style)[0])
    t_clean = (kw_scale + style_scale) / doc_len
    alpha = tanh_point / t_clean
    beta = math.log(confidence / (1.0 - confidence)) / (2.0 * math.tanh(tanh_point))
    model = BoeMlp(table, n_classes=2, hidden=2)
    w1 = np.zeros((table.dim, 2))
    w1[0, 0] = alpha
    w1[0, 1] = -alpha
    model.params["W1"] = w1
    model.params["b1"] = np.zeros(2)
    model.params["W2"] = np.array([[beta, 0.0], [0.0, beta]])
    model.params["b2"] = np.zeros(2)
    return model


TINY_KEYWORDS = {"north": "qa", "south": "qb"}
TINY_STYLE = {"north": "qc", "south": "qd"}
TINY_FILLERS = ("fa", "fb", "fc", "fd")


def make_tiny_table(kw_scale: float = 0.02, style_scale: float = 0.01, seed: int = 0) -> EmbeddingTable:
    """Signal geometry of make_table with two-character tokens only.

    Two-character words admit no visual edits, so candidate pools contain at
    most the three semantic neighbors on the signal axis; that keeps every
    document small enough for exhaustive verification.
    """
    rng = np.random.default_rng(seed)
    dim = 4
    vectors: dict[str, np.ndarray] = {}
    for name, value in (
        (TINY_KEYWORDS["north"], kw_scale),
        (TINY_KEYWORDS["south"], -kw_scale),
        (TINY_STYLE["north"], style_scale),
        (TINY_STYLE["south"], -style_scale),
    ):
        v = np.zeros(dim)
        v[0] = value
        vectors[name] = v
    for filler in TINY_FILLERS:
        v = np.zeros(dim)
        v[1] = 2.0
        v[2:] = rng.normal(0.0, 0.005, size=dim - 2)
        vectors[filler] = v
    return EmbeddingTable(vectors, dim)


@dataclass
class TinySetup:
    docs: list[TokenizedDocument]
    table: EmbeddingTable
    model: BoeMlp
    lm: ngram.NgramModel


def make_tiny_instances(n_instances: int = 100, seed: int = 0) -> TinySetup:
    """Mix of 4-5 token documents; some escape with one edit, some cannot.

    Label ids follow sorted label names (north=0, south=1). Every document is
    correctly classified by the constructed model.
    """
    rng = random.Random(seed)
    table = make_tiny_table(seed=seed)
    docs = []
    for i in range(n_instances):
        label = LABELS[i % 2]
        kw, style = TINY_KEYWORDS[label], TINY_STYLE[label]
        shape = rng.choice(("single", "single", "single", "double", "fillers"))
        if shape == "single":
            tokens = [kw, style] + rng.choices(TINY_FILLERS, k=rng.choice((2, 3)))
        elif shape == "double":
            tokens = [kw, kw, style] + rng.choices(TINY_FILLERS, k=rng.choice((1, 2)))
        else:
            # all-filler docs sit exactly on the boundary; ties resolve to
            # class 0, so they are only correctly classified for label north
            label = "north"
            tokens = list(rng.choices(TINY_FILLERS, k=rng.choice((4, 5))))
        rng.shuffle(tokens)
        docs.append(
            TokenizedDocument(tokens, LABELS.index(label), origin_id=f"tiny{i:04d}")
        )
    model = keyword_model(
        table,
        doc_len=4,
        confidence=0.85,
        keyword=TINY_KEYWORDS["north"],
        style=TINY_STYLE["north"],
    )
    lm = ngram.fit([d.tokens for d in docs])
    return TinySetup(docs, table, model, lm)


def write_corpus_tsv(records: list[RawRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{rec.label}\t{rec.text}\n")
