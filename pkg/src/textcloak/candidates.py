"""Replacement-candidate construction and the single-word perturbation step.

For a chosen word the pool combines two candidate kinds:

* semantic - in-vocabulary words within Euclidean distance ``eta`` in the
  candidate embedding space;
* visual - character-level edits (add/remove/swap/substitute plus a small
  number-for-letter map) that usually push the word out of the vocabulary.

Except for the number-substitution map, visual edits only touch interior
characters, so the first and last characters always survive. The multi
character slang entries (e.g. ``straight -> str8``) are the one sanctioned
exception and may rewrite a suffix.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .corpus import TokenizedDocument
from .embeddings import EmbeddingTable
from .ngram import BOUNDARY, NgramModel, context_score

DEFAULT_POOL_SIZE = 8
DEFAULT_ETA = 0.5
RESAMPLE_LIMIT = 10

LEET_MAP = {"l": "1", "o": "0", "z": "2", "straight": "str8"}

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
_ADD_POOL = _ALPHABET + " "


@dataclass(frozen=True)
class WordCandidate:
    surface: str
    kind: str  # "semantic" or "visual"
    provenance: str  # transform name, or the neighbor distance


@dataclass
class CandidatePool:
    """Reported candidate set for one position, capped at ``pool_size``."""

    position: int
    original: str
    candidates: list[WordCandidate] = field(default_factory=list)


def load_leet_map(path: str) -> dict[str, str]:
    """Read a ``character-or-substring -> replacement`` JSON map."""
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    if not all(isinstance(k, str) and isinstance(v, str) and k for k, v in mapping.items()):
        raise ValueError(f"invalid leet map in {path}")
    return mapping


def semantic_candidates(
    word: str, table: EmbeddingTable, eta: float = DEFAULT_ETA, max_n: int = DEFAULT_POOL_SIZE
) -> list[WordCandidate]:
    """Nearest in-vocabulary neighbors within eta, ascending by distance."""
    return [
        WordCandidate(tok, "semantic", f"d={dist:.4f}")
        for tok, dist in table.nearest_neighbors(word, eta, max_n)
    ]


def _leet_candidate(word: str, leet_map: dict[str, str]) -> str | None:
    # Substring entries first (longest wins, leftmost occurrence); they may
    # rewrite a suffix. Single-character entries only touch interior
    # characters and apply at the last eligible occurrence.
    for key in sorted((k for k in leet_map if len(k) > 1), key=len, reverse=True):
        at = word.find(key)
        if at != -1:
            return word[:at] + leet_map[key] + word[at + len(key) :]
    singles = {k: v for k, v in leet_map.items() if len(k) == 1}
    for i in range(len(word) - 2, 0, -1):
        if word[i] in singles:
            return word[:i] + singles[word[i]] + word[i + 1 :]
    return None


def visual_candidates(
    word: str, rng: random.Random, leet_map: dict[str, str] | None = None
) -> list[WordCandidate]:
    """At most one candidate per character transform, deduplicated.

    The four random transforms need at least one interior character
    (len >= 3, and len >= 4 for the adjacent swap); the number-substitution
    map applies whenever one of its keys occurs in an eligible spot.
    """
    leet_map = LEET_MAP if leet_map is None else leet_map
    n = len(word)
    raw: list[tuple[str, str]] = []
    if n >= 3:
        pos = rng.randrange(1, n)
        raw.append((word[:pos] + rng.choice(_ADD_POOL) + word[pos:], "add_char"))
        pos = rng.randrange(1, n - 1)
        raw.append((word[:pos] + word[pos + 1 :], "remove_char"))
        if n >= 4:
            pos = rng.randrange(1, n - 2)
            swapped = word[:pos] + word[pos + 1] + word[pos] + word[pos + 2 :]
            raw.append((swapped, "swap_adjacent"))
        pos = rng.randrange(1, n - 1)
        replacement = rng.choice(_ALPHABET.replace(word[pos], ""))
        raw.append((word[:pos] + replacement + word[pos + 1 :], "substitute_char"))
    leet = _leet_candidate(word, leet_map)
    if leet is not None:
        raw.append((leet, "leet"))

    out: list[WordCandidate] = []
    seen = {word}
    for surface, provenance in raw:
        if surface not in seen:
            seen.add(surface)
            out.append(WordCandidate(surface, "visual", provenance))
    return out


def full_pool(
    word: str,
    table: EmbeddingTable,
    rng: random.Random,
    eta: float = DEFAULT_ETA,
    pool_size: int = DEFAULT_POOL_SIZE,
    leet_map: dict[str, str] | None = None,
) -> list[WordCandidate]:
    """Unfiltered candidate set: up to pool_size semantic plus all visual."""
    out = semantic_candidates(word, table, eta, pool_size)
    seen = {c.surface for c in out} | {word}
    for cand in visual_candidates(word, rng, leet_map):
        if cand.surface not in seen:
            seen.add(cand.surface)
            out.append(cand)
    return out


def _context(doc: TokenizedDocument, pos: int) -> tuple[str, str]:
    prev = doc.tokens[pos - 1] if pos > 0 else BOUNDARY
    nxt = doc.tokens[pos + 1] if pos + 1 < len(doc) else BOUNDARY
    return prev, nxt


def filter_semantic(
    sem: list[WordCandidate],
    doc: TokenizedDocument,
    pos: int,
    lm: NgramModel,
    pool_size: int,
) -> list[WordCandidate]:
    """Keep the pool_size//2 semantic candidates that best fit the context.

    Visual candidates are never subject to this filter.
    """
    keep = pool_size // 2
    if len(sem) <= keep:
        return list(sem)
    prev, nxt = _context(doc, pos)
    scored = [(context_score(lm, prev, c.surface, nxt), i) for i, c in enumerate(sem)]
    # Stable on ties: prefer the closer neighbor (its original list order).
    ranked = sorted(range(len(sem)), key=lambda i: (-scored[i][0], i))
    chosen = sorted(ranked[:keep])
    return [sem[i] for i in chosen]


def build_pool(
    doc: TokenizedDocument,
    pos: int,
    table: EmbeddingTable,
    lm: NgramModel,
    rng: random.Random,
    eta: float = DEFAULT_ETA,
    pool_size: int = DEFAULT_POOL_SIZE,
    leet_map: dict[str, str] | None = None,
) -> CandidatePool:
    """Context-filtered pool for reporting, capped at pool_size entries.

    When the filtered semantic survivors plus the visual candidates exceed
    the cap, the semantic survivors with the worst context scores are
    dropped first.
    """
    word = doc.tokens[pos]
    sem = filter_semantic(
        semantic_candidates(word, table, eta, pool_size), doc, pos, lm, pool_size
    )
    vis = _append_unseen([], {c.surface for c in sem} | {word}, visual_candidates(word, rng, leet_map))
    overflow = len(sem) + len(vis) - pool_size
    if overflow > 0:
        prev, nxt = _context(doc, pos)
        ranked = sorted(
            range(len(sem)),
            key=lambda i: (-context_score(lm, prev, sem[i].surface, nxt), i),
        )
        keep = sorted(ranked[: max(0, len(sem) - overflow)])
        sem = [sem[i] for i in keep]
    return CandidatePool(pos, word, (sem + vis)[:pool_size])


def _append_unseen(
    out: list[WordCandidate], seen: set[str], extra: list[WordCandidate]
) -> list[WordCandidate]:
    for cand in extra:
        if cand.surface not in seen:
            seen.add(cand.surface)
            out.append(cand)
    return out


def _masked_probs(doc: TokenizedDocument, select_probs) -> list[float]:
    probs = [0.0 if doc.perturbed_mask[i] else float(p) for i, p in enumerate(select_probs)]
    total = sum(probs)
    if total <= 0:
        return []
    return [p / total for p in probs]


def perturbation_subroutine(
    doc: TokenizedDocument,
    target: int,
    model,
    select_probs,
    lm: NgramModel,
    rng: random.Random,
    table: EmbeddingTable | None = None,
    eta: float = DEFAULT_ETA,
    pool_size: int = DEFAULT_POOL_SIZE,
    leet_map: dict[str, str] | None = None,
    max_retries: int = RESAMPLE_LIMIT,
) -> tuple[TokenizedDocument, bool]:
    """Perturb one word of ``doc`` toward higher confidence for ``target``.

    Samples a position from ``select_probs`` (visually perturbed positions
    are masked out and the rest renormalized), builds the candidate pool for
    the current word there, context-filters the semantic half, and applies
    the substitution that maximizes the model's confidence in ``target``.
    Positions that yield an empty pool are resampled up to ``max_retries``
    times; if nothing is substitutable the input is returned unchanged with
    a False flag.
    """
    table = model.table if table is None else table
    probs = _masked_probs(doc, select_probs)
    if not probs:
        return doc, False
    positions = list(range(len(doc)))
    for _ in range(max_retries):
        pos = rng.choices(positions, weights=probs)[0]
        word = doc.tokens[pos]
        sem = semantic_candidates(word, table, eta, pool_size)
        vis = visual_candidates(word, rng, leet_map)
        if not sem and not vis:
            continue
        survivors = filter_semantic(sem, doc, pos, lm, pool_size)
        pool = _append_unseen(list(survivors), {c.surface for c in survivors} | {word}, vis)
        if not pool:
            continue
        best, best_score = None, -1.0
        for cand in pool:
            score = float(model.scores(doc.replace(pos, cand.surface))[target])
            if score > best_score:
                best, best_score = cand, score
        return doc.replace(pos, best.surface, mark_visual=best.kind == "visual"), True
    return doc, False
