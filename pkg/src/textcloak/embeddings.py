"""Word-vector tables with distance-thresholded nearest-neighbor search."""

from __future__ import annotations

import numpy as np

from .corpus import UNK_TOKEN


class EmbeddingParseError(Exception):
    """Raised when an embedding file cannot be parsed consistently."""


class EmbeddingTable:
    """Immutable token -> vector map over one fixed dimension.

    The unknown token always maps to the zero vector; out-of-table lookups in
    :meth:`vector_or_zero` fall back to it. Neighbor queries use exact
    Euclidean linear scan with a small per-query cache.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dim: int, skipped: int = 0):
        self.dim = dim
        self.skipped = skipped
        self._tokens = [t for t in vectors if t != UNK_TOKEN]
        self._row = {t: i for i, t in enumerate(self._tokens)}
        if self._tokens:
            self._matrix = np.asarray([vectors[t] for t in self._tokens], dtype=np.float64)
        else:
            self._matrix = np.zeros((0, dim), dtype=np.float64)
        self._zero = np.zeros(dim, dtype=np.float64)
        self._neighbor_cache: dict[tuple[str, float, int], list[tuple[str, float]]] = {}

    def __contains__(self, token: str) -> bool:
        return token == UNK_TOKEN or token in self._row

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def vector(self, token: str) -> np.ndarray:
        if token == UNK_TOKEN:
            return self._zero
        try:
            return self._matrix[self._row[token]]
        except KeyError:
            raise KeyError(f"{token!r} not in embedding table") from None

    def vector_or_zero(self, token: str) -> np.ndarray:
        if token in self._row:
            return self._matrix[self._row[token]]
        return self._zero

    def distance(self, a: str, b: str) -> float:
        """Euclidean distance between two in-table tokens (unknown token allowed)."""
        return float(np.linalg.norm(self.vector(a) - self.vector(b)))

    def nearest_neighbors(self, token: str, eta: float, limit: int) -> list[tuple[str, float]]:
        """In-table tokens with 0 < distance <= eta, ascending, ties lexicographic.

        The query token and the unknown token are excluded; querying an
        out-of-table token yields an empty list.
        """
        if limit < 1:
            raise ValueError("limit must be >= 1")
        if token not in self._row or len(self._tokens) == 0:
            return []
        key = (token, float(eta), int(limit))
        cached = self._neighbor_cache.get(key)
        if cached is not None:
            return list(cached)
        dists = np.linalg.norm(self._matrix - self._matrix[self._row[token]], axis=1)
        hits = [
            (self._tokens[i], float(d))
            for i, d in enumerate(dists)
            if 0.0 < d <= eta and self._tokens[i] != token
        ]
        hits.sort(key=lambda td: (td[1], td[0]))
        result = hits[:limit]
        self._neighbor_cache[key] = result
        return list(result)


def load_embeddings(path: str) -> EmbeddingTable:
    """Parse a plain-text vector file: one ``token v1 .. vk`` row per line.

    The dimension is inferred from the first line; a row with a different
    field count is fatal, a row with a non-numeric value is skipped (counted
    in ``table.skipped``), and duplicate tokens keep their first occurrence.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise EmbeddingParseError(f"{path}:{lineno}: no vector components")
            if len(parts) - 1 != dim:
                raise EmbeddingParseError(
                    f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}"
                )
            token = parts[0]
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError:
                skipped += 1
                continue
            if token not in vectors:
                vectors[token] = vec
    if dim is None:
        raise EmbeddingParseError(f"{path}: empty embedding file")
    return EmbeddingTable(vectors, dim, skipped=skipped)


def save_embeddings(table: EmbeddingTable, path: str, precision: int = 6) -> None:
    """Write the table back out in the plain-text format of load_embeddings."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in table.tokens:
            vals = " ".join(f"{v:.{precision}f}" for v in table.vector(tok))
            fh.write(f"{tok} {vals}\n")
