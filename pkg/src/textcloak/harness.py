"""Batch attack runner, metric computation, and cross-model transfer tables."""

from __future__ import annotations

import csv
import hashlib
import json
import random
import statistics
from dataclasses import dataclass, field, replace

from .classifier import margin, predicted_label
from .corpus import TokenizedDocument
from .embeddings import EmbeddingTable
from .ngram import NgramModel
from .optimizer import AttackConfig, AttackOutcome, run_attack

CSV_HEADER = ["origin_id", "label", "success", "word_diff", "m", "ptb_rate", "generations", "ms"]

REPORT_VERSION = 1


@dataclass
class InstanceRow:
    origin_id: str
    label: int
    success: bool
    word_diff: int
    m: int
    ptb_rate: float
    generations: int
    ms: float


@dataclass
class MetricsReport:
    clean_accuracy: float
    post_attack_accuracy: float
    success_rate: float
    median_ptb_rate: float
    mean_ptb_rate: float
    mean_generations: float
    mean_ms: float
    n_test: int
    n_correct: int
    n_attacked: int
    n_successful: int
    no_docs_attacked: bool
    config: dict
    rows: list[InstanceRow] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "clean_accuracy": self.clean_accuracy,
            "post_attack_accuracy": self.post_attack_accuracy,
            "success_rate": self.success_rate,
            "median_ptb_rate": self.median_ptb_rate,
            "mean_ptb_rate": self.mean_ptb_rate,
            "mean_generations": self.mean_generations,
            "mean_ms": self.mean_ms,
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "n_attacked": self.n_attacked,
            "n_successful": self.n_successful,
            "no_docs_attacked": self.no_docs_attacked,
            "config": self.config,
            "notes": self.notes,
            "rows": [vars(r) for r in self.rows],
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    def write_csv(self, path: str) -> None:
        """Per-instance CSV. The ms column is a deterministic placeholder (0)
        so identical runs produce byte-identical files; measured wall times
        are reported in the JSON rows."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.origin_id,
                        r.label,
                        int(r.success),
                        r.word_diff,
                        r.m,
                        repr(r.ptb_rate),
                        r.generations,
                        0,
                    ]
                )


def doc_seed(base_seed: int, origin_id: str) -> int:
    """Stable per-document rng seed; independent of worker scheduling."""
    digest = hashlib.sha256(f"{base_seed}:{origin_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _validate_success(model, outcome: AttackOutcome, label: int) -> None:
    # Every reported success must hold up under recomputation.
    if not outcome.success:
        return
    adv = outcome.adversarial
    if adv is None:
        raise RuntimeError("success outcome without adversarial text")
    if len(adv) != len(outcome.original):
        raise RuntimeError("adversarial text changed the token count")
    if outcome.word_diff >= outcome.epsilon:
        raise RuntimeError("adversarial text exceeds the edit budget")
    if margin(model, adv, label) >= 0:
        raise RuntimeError("adversarial text is not misclassified on revalidation")


def attack_docs(
    model,
    docs: list[TokenizedDocument],
    cfg: AttackConfig,
    lm: NgramModel,
    table: EmbeddingTable | None = None,
    leet_map: dict[str, str] | None = None,
) -> list[AttackOutcome]:
    """Attack each doc under its own (seed, origin_id)-derived rng stream."""
    outcomes = []
    for doc in docs:
        doc_cfg = replace(cfg, seed=doc_seed(cfg.seed, doc.origin_id))
        outcome = run_attack(doc, doc.label_id, model, lm, doc_cfg, table, leet_map)
        _validate_success(model, outcome, doc.label_id)
        outcomes.append(outcome)
    return outcomes


def select_attack_set(
    correct: list[TokenizedDocument], cfg: AttackConfig, sample_fraction: float
) -> list[TokenizedDocument]:
    """Deterministic random sample of the correctly classified documents."""
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must be in (0, 1]")
    if sample_fraction >= 1 or not correct:
        return list(correct)
    k = max(1, round(sample_fraction * len(correct)))
    picked = sorted(random.Random(cfg.seed).sample(range(len(correct)), k))
    return [correct[i] for i in picked]


def run_attack_batch(
    model,
    docs: list[TokenizedDocument],
    cfg: AttackConfig,
    lm: NgramModel,
    table: EmbeddingTable | None = None,
    sample_fraction: float = 0.5,
    leet_map: dict[str, str] | None = None,
) -> MetricsReport:
    """Attack a random sample of the correctly classified docs and summarize.

    Perturbation-rate and generation statistics are computed over successful
    attacks only (recorded in the report notes); post-attack accuracy counts
    a doc correct when it was classified correctly and either not attacked or
    attacked without success.
    """
    if not docs:
        raise ValueError("empty evaluation set")
    cfg.validate()
    correct = [d for d in docs if predicted_label(model.scores(d)) == d.label_id]
    attack_set = select_attack_set(correct, cfg, sample_fraction)
    outcomes = attack_docs(model, attack_set, cfg, lm, table, leet_map)

    rows = []
    for doc, outcome in zip(attack_set, outcomes):
        rows.append(
            InstanceRow(
                origin_id=doc.origin_id,
                label=doc.label_id,
                success=outcome.success,
                word_diff=outcome.word_diff,
                m=len(doc),
                ptb_rate=outcome.word_diff / len(doc),
                generations=outcome.generations,
                ms=outcome.ms,
            )
        )

    n_success = sum(1 for r in rows if r.success)
    success_ptb_rates = [r.ptb_rate for r in rows if r.success]
    report = MetricsReport(
        clean_accuracy=len(correct) / len(docs),
        post_attack_accuracy=(len(correct) - n_success) / len(docs),
        success_rate=n_success / len(rows) if rows else 0.0,
        median_ptb_rate=statistics.median(success_ptb_rates) if success_ptb_rates else 0.0,
        mean_ptb_rate=statistics.fmean(success_ptb_rates) if success_ptb_rates else 0.0,
        mean_generations=(
            statistics.fmean(r.generations for r in rows if r.success) if n_success else 0.0
        ),
        mean_ms=statistics.fmean(r.ms for r in rows) if rows else 0.0,
        n_test=len(docs),
        n_correct=len(correct),
        n_attacked=len(rows),
        n_successful=n_success,
        no_docs_attacked=not rows,
        config={**cfg.to_dict(), "sample_fraction": sample_fraction},
        rows=rows,
        notes={
            "ptb_rates_over": "successes",
            "mean_generations_over": "successes",
            "csv_ms_column": "deterministic placeholder; measured ms in JSON rows",
        },
    )
    return report


def success_cdf(report_or_rows, eps_values: list[int]) -> list[tuple[int, float]]:
    """Fraction of attacked docs that succeed within each edit budget."""
    rows = getattr(report_or_rows, "rows", report_or_rows)
    n = len(rows)
    out = []
    for eps in eps_values:
        if n == 0:
            out.append((eps, 0.0))
        else:
            hits = sum(1 for r in rows if r.success and r.word_diff <= eps)
            out.append((eps, hits / n))
    return out


@dataclass
class TransferMatrix:
    model_names: list[str]
    matrix: list[list[float]]
    n_crafted: list[int]

    def to_json_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "model_names": self.model_names,
            "matrix": self.matrix,
            "n_crafted": self.n_crafted,
        }


def transfer_matrix(
    named_models: list[tuple[str, object]],
    docs: list[TokenizedDocument],
    cfg: AttackConfig,
    lm: NgramModel,
    table: EmbeddingTable | None = None,
    sample_fraction: float = 0.5,
    leet_map: dict[str, str] | None = None,
) -> TransferMatrix:
    """Cell (i, j): fraction of texts successfully crafted against model i
    that model j misclassifies (argmax differs from the true label)."""
    if len(named_models) < 2:
        raise ValueError("transfer evaluation needs at least 2 models")
    cfg.validate()
    names = [name for name, _ in named_models]
    matrix: list[list[float]] = []
    crafted_counts: list[int] = []
    for _, source in named_models:
        correct = [d for d in docs if predicted_label(source.scores(d)) == d.label_id]
        attack_set = select_attack_set(correct, cfg, sample_fraction)
        outcomes = attack_docs(source, attack_set, cfg, lm, table, leet_map)
        crafted = [
            (doc.label_id, outcome.adversarial)
            for doc, outcome in zip(attack_set, outcomes)
            if outcome.success
        ]
        crafted_counts.append(len(crafted))
        row = []
        for _, target in named_models:
            if not crafted:
                row.append(0.0)
                continue
            fooled = sum(
                1 for label, adv in crafted if predicted_label(target.scores(adv)) != label
            )
            row.append(fooled / len(crafted))
        matrix.append(row)
    return TransferMatrix(names, matrix, crafted_counts)


def bench_strategies(
    model,
    docs: list[TokenizedDocument],
    strategies: list[str],
    cfg: AttackConfig,
    lm: NgramModel,
    table: EmbeddingTable | None = None,
    sample_fraction: float = 0.5,
    leet_map: dict[str, str] | None = None,
) -> dict[str, MetricsReport]:
    """Run several strategies over the same docs and seeds (paired design)."""
    reports = {}
    for strategy in strategies:
        strat_cfg = replace(cfg, strategy=strategy)
        reports[strategy] = run_attack_batch(
            model, docs, strat_cfg, lm, table, sample_fraction, leet_map
        )
    return reports
