"""Classification metrics, rank AUC and cross-validated grid search."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .boost import Booster, Hyperparams, worker_count
from .dataset import EncodedMatrix, Labels, stratified_fold_ids
from .errors import ConfigError, DataError
from .seeds import derive_seed
from .smote import SmoteConfig, oversample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    positive_label: float = 1.0
    auc: float | None = None
    # metrics whose denominator was zero (reported as 0)
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "positive_label": self.positive_label,
            "undefined": list(self.undefined),
        }


def _ratio(num: float, den: float, name: str, undefined: list) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def classification_metrics(y_true, y_pred, positive_label: float = 1.0, auc: float | None = None) -> MetricsReport:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise DataError(f"length mismatch: {y_true.shape[0]} labels vs {y_pred.shape[0]} predictions")
    pos_t = y_true == positive_label
    pos_p = y_pred == positive_label
    tp = int(np.sum(pos_t & pos_p))
    fp = int(np.sum(~pos_t & pos_p))
    fn = int(np.sum(pos_t & ~pos_p))
    tn = int(np.sum(~pos_t & ~pos_p))
    undefined: list[str] = []
    accuracy = _ratio(tp + tn, len(y_true), "accuracy", undefined)
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    return MetricsReport(accuracy, precision, recall, f1, tp, fp, tn, fn, float(positive_label), auc, tuple(undefined))


def auc(scores, y_true, positive_label: float = 1.0) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(y_true) == positive_label
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both positive and negative examples")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


TUNABLE = ("max_interaction_level", "min_observations_in_split", "learning_rate", "boosting_steps")


@dataclass(frozen=True)
class TuneGrid:
    params: dict
    folds: int = 5
    metric: str = "loss"

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ConfigError("tuning grid must be nonempty")
        bad = [k for k in self.params if k not in TUNABLE]
        if bad:
            raise ConfigError(f"untunable hyperparameters: {', '.join(bad)}")
        if self.folds < 2:
            raise ConfigError("grid search needs at least 2 folds")
        if self.metric not in ("loss", "accuracy"):
            raise ConfigError("selection metric must be 'loss' or 'accuracy'")

    def cells(self) -> list[dict]:
        keys = list(self.params)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.params[k] for k in keys))]

    @classmethod
    def from_dict(cls, doc: dict) -> "TuneGrid":
        return cls(dict(doc["grid"]), int(doc.get("folds", 5)), doc.get("metric", "loss"))

    def to_dict(self) -> dict:
        return {"grid": {k: list(v) for k, v in self.params.items()}, "folds": self.folds, "metric": self.metric}


PAPER_GRID = TuneGrid({"max_interaction_level": [0, 1, 2, 100], "min_observations_in_split": [20, 100, 500]})


@dataclass(frozen=True)
class CellResult:
    params: dict
    best_steps: int
    loss_mean: float
    loss_std: float
    accuracy_mean: float | None
    accuracy_std: float | None
    fold_losses: tuple[float, ...] = field(default=())


def kfold_grid_search(
    x: EncodedMatrix,
    y: Labels,
    grid: TuneGrid,
    hp_base: Hyperparams = Hyperparams(),
    seed: int = 42,
    smote: SmoteConfig | None = None,
) -> tuple[Hyperparams, list[CellResult]]:
    """Pick the grid cell with the lowest mean validation loss over stratified folds.

    Every fold is boosted for the full ``hp_base.boosting_steps`` with the
    held-out loss recorded after each step; a cell is scored at the step count
    minimising its fold-averaged loss. SMOTE, when given, is applied to the
    training part of each fold only. Ties prefer fewer interactions, then a
    larger ``min_observations_in_split``.
    """
    if x.n_rows != len(y):
        raise DataError("matrix and labels differ in length")
    if x.n_rows < grid.folds:
        raise DataError("fewer rows than folds")
    classification = y.kind != "real"
    if classification:
        if y.kind != "binary":
            raise DataError("grid search supports binary classification or regression")
        counts = np.unique(y.y, return_counts=True)[1]
        if len(counts) < 2 or counts.min() < grid.folds:
            raise DataError("every fold needs both classes; a class has fewer members than folds")
        fold_ids = stratified_fold_ids(y.y, grid.folds, derive_seed(seed, "tune/folds"))
    else:
        rng = np.random.default_rng(derive_seed(seed, "tune/folds"))
        fold_ids = np.empty(x.n_rows, dtype=int)
        fold_ids[rng.permutation(x.n_rows)] = np.arange(x.n_rows) % grid.folds

    fold_data = []
    for f in range(grid.folds):
        tr, va = np.flatnonzero(fold_ids != f), np.flatnonzero(fold_ids == f)
        xt, yt = x.take(tr), y.take(tr)
        if smote is not None:
            xt, yt = oversample(xt, yt, replace(smote, seed=derive_seed(seed, f"tune/smote/{f}")))
        fold_data.append((xt, yt, x.take(va), y.take(va)))

    cells = grid.cells()
    task = "logit" if classification else "regression"

    def run(job):
        c, f = job
        hp = replace(hp_base, **cells[c], early_stop="off")
        xt, yt, xv, yv = fold_data[f]
        b = Booster(xt.values, yt.y, hp, task, xt.weights, (xv.values, yv.y, xv.weights))
        st = b.run(hp.boosting_steps)
        return np.array(st.validation_trace), np.array(st.validation_accuracy) if classification else None

    jobs = list(itertools.product(range(len(cells)), range(grid.folds)))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        outputs = list(pool.map(run, jobs))

    results = []
    for c, cell in enumerate(cells):
        losses = np.array([outputs[c * grid.folds + f][0] for f in range(grid.folds)])
        mean_curve = losses.mean(axis=0)
        if classification and grid.metric == "accuracy":
            accs = np.array([outputs[c * grid.folds + f][1] for f in range(grid.folds)])
            m = int(np.argmax(accs.mean(axis=0)))
        else:
            m = int(np.argmin(mean_curve))
        acc_mean = acc_std = None
        if classification:
            accs = np.array([outputs[c * grid.folds + f][1][m] for f in range(grid.folds)])
            acc_mean, acc_std = float(accs.mean()), float(accs.std())
        results.append(
            CellResult(dict(cell), m, float(mean_curve[m]), float(losses[:, m].std()), acc_mean, acc_std, tuple(losses[:, m]))
        )
        logger.info("cell %s: loss %.5f at %d steps", cell, mean_curve[m], m)

    def rank(r: CellResult):
        score = -r.accuracy_mean if grid.metric == "accuracy" and classification else r.loss_mean
        return (
            score,
            r.params.get("max_interaction_level", hp_base.max_interaction_level),
            -r.params.get("min_observations_in_split", hp_base.min_observations_in_split),
        )

    best = min(results, key=rank)
    return replace(hp_base, **best.params), results
