"""Word-importance scoring and the perturbation-search strategies.

``adv4sg`` is the importance-guided population search: word selection
probabilities come from gradient saliency times perturbation variance, the
elite member survives each generation, and parents are sampled proportional
to their confidence in the target class. ``genetic_random`` is the same
machinery with uniform word selection; ``greedy`` chains single perturbation
steps on one running document.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .candidates import (
    DEFAULT_ETA,
    DEFAULT_POOL_SIZE,
    full_pool,
    perturbation_subroutine,
)
from .classifier import misclassified, predicted_label
from .corpus import TokenizedDocument
from .embeddings import EmbeddingTable
from .ngram import NgramModel

STRATEGIES = ("adv4sg", "genetic_random", "greedy")


@dataclass
class AttackConfig:
    population_size: int = 40
    max_iterations: int = 10
    epsilon_rate: float = 0.25
    eta: float = DEFAULT_ETA
    pool_size: int = DEFAULT_POOL_SIZE
    seed: int = 0
    strategy: str = "adv4sg"

    def validate(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.epsilon_rate <= 1:
            raise ValueError("epsilon_rate must be in (0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; pick one of {STRATEGIES}")

    def epsilon_for(self, n_tokens: int) -> int:
        """Edit budget for a document: a fraction of its length, at least 1."""
        return max(1, math.floor(self.epsilon_rate * n_tokens))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class ImportanceProfile:
    """Per-position saliency, variance, their product, and selection probs."""

    saliency: np.ndarray
    variance: np.ndarray
    importance: np.ndarray
    selection_probs: np.ndarray


@dataclass
class AttackOutcome:
    success: bool
    original: TokenizedDocument
    adversarial: TokenizedDocument | None
    positions: list[int]
    word_diff: int
    generations: int
    scores: np.ndarray
    ms: float
    epsilon: int
    fitness_trace: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "origin_id": self.original.origin_id,
            "success": self.success,
            "original": self.original.text,
            "adversarial": self.adversarial.text if self.adversarial is not None else None,
            "positions": self.positions,
            "word_diff": self.word_diff,
            "generations": self.generations,
            "scores": [float(s) for s in self.scores],
            "ms": self.ms,
        }


def masked_softmax(values, mask) -> np.ndarray:
    """Softmax over positions whose mask is False; masked entries get 0."""
    r = np.asarray(values, dtype=np.float64)
    active = ~np.asarray(mask, dtype=bool)
    probs = np.zeros(len(r))
    if active.any():
        e = np.exp(r[active] - r[active].max())
        probs[active] = e / e.sum()
    return probs


def word_importance(
    model,
    doc: TokenizedDocument,
    y: int,
    table: EmbeddingTable | None = None,
    rng: random.Random | None = None,
    eta: float = DEFAULT_ETA,
    pool_size: int = DEFAULT_POOL_SIZE,
    leet_map: dict[str, str] | None = None,
) -> ImportanceProfile:
    """Score positions by gradient saliency times best-candidate confidence drop.

    The variance term maximizes the drop in the true-class confidence over
    the unfiltered candidate pool; positions with no candidates score 0.
    Selection probabilities are the softmax of the products, with visually
    perturbed positions forced to probability 0.
    """
    table = model.table if table is None else table
    rng = random.Random(0) if rng is None else rng
    saliency = np.linalg.norm(model.input_gradients(doc, y), axis=1)
    base = float(model.scores(doc)[y])
    variance = np.zeros(len(doc))
    for i in range(len(doc)):
        pool = full_pool(doc.tokens[i], table, rng, eta, pool_size, leet_map)
        if pool:
            variance[i] = max(
                base - float(model.scores(doc.replace(i, c.surface))[y]) for c in pool
            )
    importance = saliency * variance
    return ImportanceProfile(
        saliency, variance, importance, masked_softmax(importance, doc.perturbed_mask)
    )


def choose_target(model, doc: TokenizedDocument, y: int) -> int:
    """Pick the obfuscation target: the top non-true class of the prediction."""
    if model.n_classes < 2:
        raise ValueError("need >=2 classes to choose a target")
    scores = model.scores(doc)
    top = predicted_label(scores)
    if top != y:
        return top
    for c in np.argsort(-scores, kind="stable"):
        if int(c) != y:
            return int(c)
    raise AssertionError("unreachable")


def crossover(p1: TokenizedDocument, p2: TokenizedDocument, rng: random.Random) -> TokenizedDocument:
    """Child document copying each position from either parent with prob 1/2."""
    if len(p1) != len(p2):
        raise ValueError("crossover requires equal token counts")
    tokens, mask = [], []
    for i in range(len(p1)):
        src = p1 if rng.random() < 0.5 else p2
        tokens.append(src.tokens[i])
        mask.append(src.perturbed_mask[i])
    return TokenizedDocument(tokens, p1.label_id, p1.origin_id, mask)


def word_diff(a: TokenizedDocument, b: TokenizedDocument) -> int:
    """Number of positions whose surfaces differ."""
    if len(a) != len(b):
        raise ValueError("word_diff requires equal token counts")
    return sum(1 for ta, tb in zip(a.tokens, b.tokens) if ta != tb)


def _success(original, adv, generations, scores, eps, t0, trace) -> AttackOutcome:
    positions = [i for i, (a, b) in enumerate(zip(original.tokens, adv.tokens)) if a != b]
    return AttackOutcome(
        True,
        original,
        adv,
        positions,
        len(positions),
        generations,
        scores,
        (time.perf_counter() - t0) * 1000.0,
        eps,
        trace,
    )


def _failure(original, generations, scores, eps, t0, trace) -> AttackOutcome:
    return AttackOutcome(
        False,
        original,
        None,
        [],
        0,
        generations,
        scores,
        (time.perf_counter() - t0) * 1000.0,
        eps,
        trace,
    )


def _population_attack(
    doc, y, model, lm, cfg, table, leet_map, uniform_selection: bool
) -> AttackOutcome:
    cfg.validate()
    table = model.table if table is None else table
    t0 = time.perf_counter()
    rng = random.Random(cfg.seed)
    base_scores = model.scores(doc)
    eps = cfg.epsilon_for(len(doc))
    if misclassified(base_scores, y):
        return _success(doc, doc.copy(), 0, base_scores, eps, t0, [])

    if uniform_selection:
        select_probs = masked_softmax(np.zeros(len(doc)), doc.perturbed_mask)
    else:
        profile = word_importance(model, doc, y, table, rng, cfg.eta, cfg.pool_size, leet_map)
        select_probs = profile.selection_probs
    target = choose_target(model, doc, y)

    def mutate(d: TokenizedDocument) -> TokenizedDocument:
        return perturbation_subroutine(
            d, target, model, select_probs, lm, rng, table, cfg.eta, cfg.pool_size, leet_map
        )[0]

    population = [mutate(doc) for _ in range(cfg.population_size)]
    trace: list[float] = []
    for t in range(1, cfg.max_iterations + 1):
        member_scores = [model.scores(member) for member in population]
        fitness = np.array([s[target] for s in member_scores])
        elite_idx = int(np.argmax(fitness))
        elite = population[elite_idx]
        elite_scores = member_scores[elite_idx]
        trace.append(float(fitness[elite_idx]))
        if word_diff(elite, doc) >= eps:
            return _failure(doc, t, elite_scores, eps, t0, trace)
        if misclassified(elite_scores, y):
            return _success(doc, elite, t, elite_scores, eps, t0, trace)
        if t == cfg.max_iterations:
            return _failure(doc, t, elite_scores, eps, t0, trace)
        total = float(fitness.sum())
        weights = (fitness / total).tolist() if total > 0 else None
        next_population = [elite]
        for _ in range(cfg.population_size - 1):
            parents = rng.choices(population, weights=weights, k=2)
            next_population.append(mutate(crossover(parents[0], parents[1], rng)))
        population = next_population
    raise AssertionError("unreachable")


def adv4sg(
    doc: TokenizedDocument,
    y: int,
    model,
    lm: NgramModel,
    cfg: AttackConfig,
    table: EmbeddingTable | None = None,
    leet_map: dict[str, str] | None = None,
) -> AttackOutcome:
    """Importance-guided population attack on one document."""
    return _population_attack(doc, y, model, lm, cfg, table, leet_map, uniform_selection=False)


def genetic_random(
    doc: TokenizedDocument,
    y: int,
    model,
    lm: NgramModel,
    cfg: AttackConfig,
    table: EmbeddingTable | None = None,
    leet_map: dict[str, str] | None = None,
) -> AttackOutcome:
    """Population attack with uniform word selection over unmasked positions."""
    return _population_attack(doc, y, model, lm, cfg, table, leet_map, uniform_selection=True)


def greedy_attack(
    doc: TokenizedDocument,
    y: int,
    model,
    lm: NgramModel,
    cfg: AttackConfig,
    table: EmbeddingTable | None = None,
    leet_map: dict[str, str] | None = None,
) -> AttackOutcome:
    """Chain single perturbation steps on one running document.

    Spends at most population_size * max_iterations subroutine calls so its
    compute budget is comparable to the population strategies; the reported
    ``generations`` is the number of calls made.
    """
    cfg.validate()
    table = model.table if table is None else table
    t0 = time.perf_counter()
    rng = random.Random(cfg.seed)
    base_scores = model.scores(doc)
    eps = cfg.epsilon_for(len(doc))
    if misclassified(base_scores, y):
        return _success(doc, doc.copy(), 0, base_scores, eps, t0, [])
    profile = word_importance(model, doc, y, table, rng, cfg.eta, cfg.pool_size, leet_map)
    target = choose_target(model, doc, y)
    budget = cfg.population_size * cfg.max_iterations
    current = doc
    trace: list[float] = []
    calls = 0
    for calls in range(1, budget + 1):
        current, changed = perturbation_subroutine(
            current,
            target,
            model,
            profile.selection_probs,
            lm,
            rng,
            table,
            cfg.eta,
            cfg.pool_size,
            leet_map,
        )
        if not changed:
            break
        scores = model.scores(current)
        trace.append(float(scores[target]))
        if word_diff(current, doc) >= eps:
            return _failure(doc, calls, scores, eps, t0, trace)
        if misclassified(scores, y):
            return _success(doc, current, calls, scores, eps, t0, trace)
    return _failure(doc, calls, model.scores(current), eps, t0, trace)


_STRATEGY_FNS = {
    "adv4sg": adv4sg,
    "genetic_random": genetic_random,
    "greedy": greedy_attack,
}


def run_attack(
    doc: TokenizedDocument,
    y: int,
    model,
    lm: NgramModel,
    cfg: AttackConfig,
    table: EmbeddingTable | None = None,
    leet_map: dict[str, str] | None = None,
) -> AttackOutcome:
    """Dispatch to the strategy named in the config."""
    cfg.validate()
    return _STRATEGY_FNS[cfg.strategy](doc, y, model, lm, cfg, table, leet_map)
