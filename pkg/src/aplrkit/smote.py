"""Minority oversampling by interpolation between nearest minority neighbours."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import EncodedMatrix, Labels
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 42
    target_ratio: float = 1.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be at least 1")
        if not 0 < self.target_ratio <= 1:
            raise ConfigError("target_ratio must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SmoteResult:
    x: EncodedMatrix
    y: Labels
    # one row per synthetic sample: (row of a, row of b) in the input matrix, and u
    pairs: np.ndarray
    u: np.ndarray


def nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows, Euclidean, ties to lower index."""
    d2 = cdist(points, points, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def oversample_with_provenance(x: EncodedMatrix, y: Labels, cfg: SmoteConfig = SmoteConfig()) -> SmoteResult:
    if y.kind != "binary":
        raise DataError("SMOTE expects binary labels")
    if x.n_rows != len(y):
        raise DataError("matrix and labels differ in length")
    counts = {c: int(np.sum(y.y == c)) for c in (0.0, 1.0)}
    minority = min(counts, key=lambda c: (counts[c], c))
    majority = 1.0 - minority
    goal = int(round(cfg.target_ratio * counts[majority]))
    need = goal - counts[minority]
    empty = np.empty((0, 2), dtype=int)
    if need <= 0:
        return SmoteResult(x, y, empty, np.empty(0))
    min_rows = np.flatnonzero(y.y == minority)
    if len(min_rows) <= cfg.k_neighbors:
        raise DataError(
            f"minority class has {len(min_rows)} rows; SMOTE with k={cfg.k_neighbors} needs more"
        )

    pts = x.values[min_rows]
    neigh = nearest_neighbors(pts, cfg.k_neighbors)
    rng = np.random.default_rng(cfg.seed)
    seeds = np.arange(need) % len(min_rows)
    picks = rng.integers(0, cfg.k_neighbors, size=need)
    u = rng.random(need)
    a = seeds
    b = neigh[seeds, picks]
    synth = pts[a] + u[:, None] * (pts[b] - pts[a])

    weights = None
    if x.weights is not None:
        weights = np.concatenate([x.weights, np.ones(need)])
    out_x = EncodedMatrix(np.vstack([x.values, synth]), x.column_names, weights)
    out_y = Labels(np.concatenate([y.y, np.full(need, minority)]), "binary")
    pairs = np.column_stack([min_rows[a], min_rows[b]])
    return SmoteResult(out_x, out_y, pairs, u)


def oversample(x: EncodedMatrix, y: Labels, cfg: SmoteConfig = SmoteConfig()) -> tuple[EncodedMatrix, Labels]:
    """Append synthetic minority rows until ``minority = round(ratio * majority)``.

    Seeds are taken round-robin over the minority rows; each synthetic row is
    ``a + u * (b - a)`` with ``b`` drawn from the ``k`` nearest minority
    neighbours of ``a`` and ``u ~ U[0, 1)``. Original rows come first, unchanged.
    """
    res = oversample_with_provenance(x, y, cfg)
    return res.x, res.y
