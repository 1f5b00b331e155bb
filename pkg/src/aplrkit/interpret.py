"""Term tables, global importance, local contributions and shape curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .basis import Term, eval_term, parse_expression
from .boost import AplrModel, Submodel
from .dataset import EncodedMatrix
from .errors import DataError


@dataclass(frozen=True)
class TermRow:
    interaction_level: int | None
    expression: str
    coefficient: float


@dataclass(frozen=True)
class TermTable:
    label: float | None
    rows: tuple[TermRow, ...]

    @property
    def intercept(self) -> float:
        return self.rows[0].coefficient

    def parse(self, feature_names) -> list[Term]:
        """Rebuild the terms from their rendered expressions."""
        return [
            parse_expression(r.expression, feature_names).with_coefficient(r.coefficient) for r in self.rows[1:]
        ]


def term_table(model: AplrModel, label=None) -> TermTable:
    sm = model.submodel(label)
    rows = [TermRow(None, "Intercept", sm.intercept)]
    rows += [TermRow(t.interaction_level, t.render(model.feature_names), t.coefficient) for t in sm.terms]
    return TermTable(sm.label, tuple(rows))


def feature_contributions(sm: Submodel, values: np.ndarray, n_features: int) -> np.ndarray:
    """``(n, p)`` summed contributions of the terms whose main predictor is each feature."""
    out = np.zeros((values.shape[0], n_features))
    for t in sm.terms:
        out[:, t.predictor] += t.coefficient * eval_term(t, values)
    return out


@dataclass(frozen=True)
class GlobalImportance:
    features: tuple[str, ...]
    importance: np.ndarray

    def ranked(self) -> list[tuple[str, float]]:
        order = np.argsort(-self.importance, kind="stable")
        return [(self.features[j], float(self.importance[j])) for j in order]

    def __getitem__(self, feature: str) -> float:
        return float(self.importance[self.features.index(feature)])


def global_importance(model: AplrModel, train_x) -> GlobalImportance:
    """Population std of each feature's contribution over the training rows, averaged over submodels."""
    values = model.design(train_x)
    if values.shape[0] == 0:
        raise DataError("global importance needs at least one training row")
    p = len(model.feature_names)
    per_class = [feature_contributions(sm, values, p).std(axis=0) for sm in model.submodels]
    return GlobalImportance(model.feature_names, np.mean(per_class, axis=0))


@dataclass(frozen=True)
class LocalExplanation:
    row_id: int | None
    label: float | None
    predicted: float
    probability: float | None
    intercept: float
    logit: float
    features: tuple[str, ...]
    values: np.ndarray
    contributions: np.ndarray

    def ranked(self) -> list[tuple[str, float, float]]:
        """(feature, value, contribution) by decreasing absolute contribution."""
        order = np.argsort(-np.abs(self.contributions), kind="stable")
        return [(self.features[j], float(self.values[j]), float(self.contributions[j])) for j in order]

    def __getitem__(self, feature: str) -> float:
        return float(self.contributions[self.features.index(feature)])


def local_contributions(model: AplrModel, x_row, label=None, row_id: int | None = None) -> LocalExplanation:
    """Per-feature additive decomposition of one row's score.

    Defaults to the submodel of the predicted class.
    """
    if isinstance(x_row, EncodedMatrix):
        if x_row.n_rows != 1:
            raise DataError("local_contributions explains exactly one row")
    values = model.design(x_row)
    if values.shape[0] != 1:
        raise DataError("local_contributions explains exactly one row")
    predicted = float(model.predict(values)[0])
    if label is None and model.task == "classification":
        label = predicted
    sm = model.submodel(label)
    contrib = feature_contributions(sm, values, len(model.feature_names))[0]
    logit = float(sm.logit(values)[0])
    proba = float(expit(logit)) if model.task == "classification" else None
    return LocalExplanation(row_id, sm.label, predicted, proba, sm.intercept, logit, model.feature_names, values[0], contrib)


@dataclass(frozen=True)
class ShapeCurve:
    feature: str
    grid: np.ndarray
    effect: np.ndarray
    # rendered gated term -> its effect along the grid while the gate is open (zero when closed)
    gated: dict


def shape_curve(model: AplrModel, feature: str, grid, label=None) -> ShapeCurve:
    if feature not in model.feature_names:
        raise KeyError(f"unknown feature {feature!r}")
    j = model.feature_names.index(feature)
    grid = np.asarray(grid, dtype=float)
    if model.feature_ranges:
        lo, hi = model.feature_ranges[j]
        if grid.min() < lo or grid.max() > hi:
            raise ValueError(f"grid leaves the training range [{lo}, {hi}] of {feature}")
    sm = model.submodel(label)
    effect = np.zeros_like(grid)
    gated: dict[str, np.ndarray] = {}
    for t in sm.terms:
        if t.predictor != j:
            continue
        part = t.coefficient * t.base(grid)
        if t.parent is None:
            effect += part
        else:
            key = t.render(model.feature_names)
            gated[key] = gated.get(key, 0) + part
    return ShapeCurve(feature, grid, effect, gated)
