"""Attribute-inference surrogate classifiers.

Two small differentiable models over frozen word embeddings, with
hand-written forward/backward passes:

* ``BoeMlp`` - mean of token embeddings -> tanh hidden layer -> softmax.
* ``TextCnn`` - width-3 convolution over the embedding sequence -> tanh ->
  mean pooling -> softmax.

Both expose per-class confidence scores and analytic gradients of a class
confidence with respect to each input embedding vector, which the attack
uses for word-saliency scoring.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import DatasetSplit, TokenizedDocument, Vocabulary
from .embeddings import EmbeddingTable


class TrainingDivergedError(Exception):
    """Raised when the loss becomes non-finite during training."""


class CheckpointError(Exception):
    """Raised when a model file cannot be loaded against the current setup."""


@dataclass
class TrainConfig:
    epochs: int = 40
    lr: float = 0.5
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-5

    def validate(self) -> None:
        if self.epochs < 1 or self.lr <= 0 or self.batch_size < 1 or self.l2 < 0:
            raise ValueError("epochs, lr, batch_size must be positive and l2 >= 0")


@dataclass
class TrainReport:
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    @property
    def final_test_acc(self) -> float:
        return self.test_acc[-1] if self.test_acc else 0.0


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def encode(doc: TokenizedDocument, table: EmbeddingTable) -> np.ndarray:
    """One embedding row per token; out-of-table tokens map to the zero vector."""
    if len(doc) == 0:
        raise ValueError("cannot encode an empty document")
    return np.stack([table.vector_or_zero(tok) for tok in doc.tokens])


def predicted_label(scores: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class id.
    return int(np.argmax(scores))


class BoeMlp:
    """Bag-of-embeddings MLP: mean embedding -> tanh(hidden) -> softmax."""

    arch = "boe"

    def __init__(self, table: EmbeddingTable, n_classes: int, hidden: int = 64, seed: int = 0):
        self.table = table
        self.n_classes = n_classes
        self.hidden = hidden
        self.init_params(np.random.default_rng(seed))

    def fresh(self) -> "BoeMlp":
        return BoeMlp(self.table, self.n_classes, self.hidden)

    def init_params(self, rng: np.random.Generator) -> None:
        k, h, c = self.table.dim, self.hidden, self.n_classes
        self.params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, h)),
            "b1": np.zeros(h),
            "W2": rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, c)),
            "b2": np.zeros(c),
        }

    def _forward_mean(self, x: np.ndarray):
        p = self.params
        pre = x @ p["W1"] + p["b1"]
        a = np.tanh(pre)
        z = a @ p["W2"] + p["b2"]
        return a, softmax(z)

    def scores(self, doc: TokenizedDocument) -> np.ndarray:
        return self.scores_from_embeddings(encode(doc, self.table))

    def scores_from_embeddings(self, emb: np.ndarray) -> np.ndarray:
        """Class confidences for a raw (tokens x dim) embedding matrix."""
        return self._forward_mean(emb.mean(axis=0))[1]

    def batch_scores(self, means: np.ndarray) -> np.ndarray:
        return self._forward_mean(means)[1]

    def input_gradients(self, doc: TokenizedDocument, y: int) -> np.ndarray:
        """d scores[y] / d embedding_i for every position i, shape (m, k)."""
        p = self.params
        emb = encode(doc, self.table)
        m = emb.shape[0]
        a, probs = self._forward_mean(emb.mean(axis=0))
        g_z = probs[y] * (np.eye(self.n_classes)[y] - probs)
        g_a = p["W2"] @ g_z
        g_pre = (1.0 - a * a) * g_a
        g_x = p["W1"] @ g_pre
        return np.tile(g_x / m, (m, 1))

    def loss_and_grads(self, means: np.ndarray, labels: np.ndarray, l2: float):
        p = self.params
        b = means.shape[0]
        pre = means @ p["W1"] + p["b1"]
        a = np.tanh(pre)
        z = a @ p["W2"] + p["b2"]
        probs = softmax(z)
        eps = 1e-12
        loss = -np.mean(np.log(probs[np.arange(b), labels] + eps))
        loss += 0.5 * l2 * (np.sum(p["W1"] ** 2) + np.sum(p["W2"] ** 2))
        d_z = probs.copy()
        d_z[np.arange(b), labels] -= 1.0
        d_z /= b
        d_a = d_z @ p["W2"].T
        d_pre = d_a * (1.0 - a * a)
        grads = {
            "W2": a.T @ d_z + l2 * p["W2"],
            "b2": d_z.sum(axis=0),
            "W1": means.T @ d_pre + l2 * p["W1"],
            "b1": d_pre.sum(axis=0),
        }
        return loss, grads


class TextCnn:
    """Width-3 convolution over the embedding sequence with mean pooling.

    Short documents are handled by zero-padding one row on each side, so the
    convolution output always has one position per token.
    """

    arch = "cnn"
    width = 3

    def __init__(self, table: EmbeddingTable, n_classes: int, filters: int = 32, seed: int = 0):
        self.table = table
        self.n_classes = n_classes
        self.filters = filters
        self.init_params(np.random.default_rng(seed))

    def fresh(self) -> "TextCnn":
        return TextCnn(self.table, self.n_classes, self.filters)

    def init_params(self, rng: np.random.Generator) -> None:
        k, f, c = self.table.dim, self.filters, self.n_classes
        self.params = {
            "K": rng.normal(0.0, 1.0 / np.sqrt(self.width * k), size=(self.width, k, f)),
            "bk": np.zeros(f),
            "W": rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, c)),
            "b": np.zeros(c),
        }

    def _forward(self, emb: np.ndarray):
        p = self.params
        m = emb.shape[0]
        padded = np.vstack([np.zeros((1, emb.shape[1])), emb, np.zeros((1, emb.shape[1]))])
        z = np.empty((m, self.filters))
        z[:] = p["bk"]
        for j in range(self.width):
            z += padded[j : j + m] @ p["K"][j]
        a = np.tanh(z)
        pooled = a.mean(axis=0)
        probs = softmax(pooled @ p["W"] + p["b"])
        return padded, a, pooled, probs

    def scores(self, doc: TokenizedDocument) -> np.ndarray:
        return self.scores_from_embeddings(encode(doc, self.table))

    def scores_from_embeddings(self, emb: np.ndarray) -> np.ndarray:
        """Class confidences for a raw (tokens x dim) embedding matrix."""
        return self._forward(emb)[3]

    def input_gradients(self, doc: TokenizedDocument, y: int) -> np.ndarray:
        p = self.params
        emb = encode(doc, self.table)
        m = emb.shape[0]
        _, a, _, probs = self._forward(emb)
        g_z = probs[y] * (np.eye(self.n_classes)[y] - probs)
        g_pooled = p["W"] @ g_z
        g_a = np.tile(g_pooled / m, (m, 1))
        g_conv = g_a * (1.0 - a * a)
        g_padded = np.zeros((m + 2, emb.shape[1]))
        for j in range(self.width):
            g_padded[j : j + m] += g_conv @ p["K"][j].T
        return g_padded[1 : m + 1]

    def loss_and_grads(self, docs: list[TokenizedDocument], labels: np.ndarray, l2: float):
        p = self.params
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        total = 0.0
        b = len(docs)
        eps = 1e-12
        for doc, y in zip(docs, labels):
            emb = encode(doc, self.table)
            m = emb.shape[0]
            padded, a, pooled, probs = self._forward(emb)
            total += -np.log(probs[y] + eps)
            d_z = probs.copy()
            d_z[y] -= 1.0
            grads["W"] += np.outer(pooled, d_z)
            grads["b"] += d_z
            g_pooled = p["W"] @ d_z
            g_conv = (np.tile(g_pooled / m, (m, 1))) * (1.0 - a * a)
            grads["bk"] += g_conv.sum(axis=0)
            for j in range(self.width):
                grads["K"][j] += padded[j : j + m].T @ g_conv
        for name in grads:
            grads[name] /= b
        grads["K"] += l2 * p["K"]
        grads["W"] += l2 * p["W"]
        loss = total / b + 0.5 * l2 * (np.sum(p["K"] ** 2) + np.sum(p["W"] ** 2))
        return loss, grads


def predict(model, doc: TokenizedDocument) -> np.ndarray:
    """Softmax-normalized per-class confidence scores."""
    return model.scores(doc)


def margin_from_scores(scores: np.ndarray, y: int) -> float:
    others = np.delete(scores, y)
    return float(scores[y] - others.max())


def margin(model, doc: TokenizedDocument, y: int) -> float:
    """Confidence of y minus the best other class; strictly negative counts as
    misclassified (an exact tie does not)."""
    return margin_from_scores(model.scores(doc), y)


def misclassified(scores: np.ndarray, y: int) -> bool:
    return margin_from_scores(scores, y) < 0.0


def input_gradients(model, doc: TokenizedDocument, y: int) -> np.ndarray:
    return model.input_gradients(doc, y)


def accuracy(model, docs: list[TokenizedDocument]) -> float:
    if not docs:
        return 0.0
    hits = sum(1 for d in docs if predicted_label(model.scores(d)) == d.label_id)
    return hits / len(docs)


def _boe_accuracy(model: BoeMlp, means: np.ndarray, labels: np.ndarray) -> float:
    probs = model.batch_scores(means)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def train(model, split: DatasetSplit, cfg: TrainConfig) -> TrainReport:
    """Mini-batch SGD on cross-entropy; cfg.seed fixes init and batch order."""
    cfg.validate()
    if not split.train:
        raise ValueError("empty training split")
    if len({d.label_id for d in split.train}) < 2:
        raise ValueError("need >=2 classes")
    rng = np.random.default_rng(cfg.seed)
    model.init_params(rng)
    labels = np.array([d.label_id for d in split.train])
    test_labels = np.array([d.label_id for d in split.test]) if split.test else None
    report = TrainReport()

    is_boe = isinstance(model, BoeMlp)
    if is_boe:
        means = np.stack([encode(d, model.table).mean(axis=0) for d in split.train])
        test_means = (
            np.stack([encode(d, model.table).mean(axis=0) for d in split.test])
            if split.test
            else None
        )

    n = len(split.train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if is_boe:
                loss, grads = model.loss_and_grads(means[idx], labels[idx], cfg.l2)
            else:
                loss, grads = model.loss_and_grads(
                    [split.train[i] for i in idx], labels[idx], cfg.l2
                )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            for name, g in grads.items():
                model.params[name] -= cfg.lr * g
            epoch_loss += loss
            n_batches += 1
        report.loss.append(epoch_loss / max(1, n_batches))
        if is_boe:
            report.train_acc.append(_boe_accuracy(model, means, labels))
            if test_means is not None:
                report.test_acc.append(_boe_accuracy(model, test_means, test_labels))
        else:
            report.train_acc.append(accuracy(model, split.train))
            if split.test:
                report.test_acc.append(accuracy(model, split.test))
    return report


@dataclass
class AdvTrainReport:
    n_sampled: int
    n_successful: int
    augmented_size: int
    train_report: TrainReport


def adversarial_retrain(
    model,
    split: DatasetSplit,
    attack,
    cfg: TrainConfig,
    fraction: float = 0.5,
    seed: int | None = None,
):
    """Retrain from scratch on the training set plus adversarial versions of a
    random fraction of its correctly classified documents (labels kept).

    ``attack`` is a callable doc -> outcome with ``success`` and
    ``adversarial`` attributes.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    correct = [d for d in split.train if predicted_label(model.scores(d)) == d.label_id]
    rng = random.Random(cfg.seed if seed is None else seed)
    n_sample = round(fraction * len(correct))
    sampled = rng.sample(correct, n_sample) if n_sample else []
    adversarial_docs = []
    for doc in sampled:
        outcome = attack(doc)
        if outcome.success and outcome.adversarial is not None:
            adversarial_docs.append(outcome.adversarial)
    augmented = list(split.train) + adversarial_docs
    retrained = model.fresh()
    train_report = train(retrained, DatasetSplit(augmented, split.test, split.seed), cfg)
    report = AdvTrainReport(len(sampled), len(adversarial_docs), len(augmented), train_report)
    return retrained, report


CHECKPOINT_VERSION = 1


def save_model(
    model,
    path: str,
    vocab: Vocabulary,
    embeddings_path: str | None = None,
    cand_embeddings_path: str | None = None,
) -> None:
    """Write a JSON checkpoint: shapes, parameters, and the vocabulary hash."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "n_classes": model.n_classes,
        "dim": model.table.dim,
        "vocab_hash": vocab.vocab_hash(),
        "label_names": sorted(vocab.label_to_id, key=vocab.label_to_id.get),
        "embeddings_path": embeddings_path,
        "cand_embeddings_path": cand_embeddings_path,
        "params": {name: arr.tolist() for name, arr in model.params.items()},
    }
    if model.arch == "boe":
        meta["hidden"] = model.hidden
    else:
        meta["filters"] = model.filters
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh)


def load_model(path: str, table: EmbeddingTable, expected_vocab_hash: str | None = None):
    """Load a checkpoint; refuses vocab-hash or embedding-dimension mismatches."""
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version in {path}")
    if meta["dim"] != table.dim:
        raise CheckpointError(
            f"embedding dimension mismatch: checkpoint {meta['dim']}, table {table.dim}"
        )
    if expected_vocab_hash is not None and meta["vocab_hash"] != expected_vocab_hash:
        raise CheckpointError("vocabulary hash mismatch; refusing to load")
    if meta["arch"] == "boe":
        model = BoeMlp(table, meta["n_classes"], hidden=meta["hidden"])
    elif meta["arch"] == "cnn":
        model = TextCnn(table, meta["n_classes"], filters=meta["filters"])
    else:
        raise CheckpointError(f"unknown architecture {meta['arch']!r}")
    for name, values in meta["params"].items():
        model.params[name] = np.array(values, dtype=np.float64)
    return model, meta
