"""Piecewise-linear basis functions and indicator-gated interaction terms."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

KINDS = ("linear", "hinge_pos", "hinge_neg")
MAX_SPLIT_CANDIDATES = 100


@dataclass(frozen=True, order=True)
class BasisFunction:
    predictor: int
    kind: str = "linear"
    split: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "linear" and self.split != 0.0:
            object.__setattr__(self, "split", 0.0)

    @property
    def sort_key(self) -> tuple:
        return (self.predictor, KINDS.index(self.kind), self.split)

    def __call__(self, column: np.ndarray) -> np.ndarray:
        column = np.asarray(column, dtype=float)
        if self.kind == "linear":
            return column.copy()
        shifted = column - self.split
        if self.kind == "hinge_pos":
            return np.maximum(shifted, 0.0)
        return np.minimum(shifted, 0.0)

    def render(self, names: Sequence[str]) -> str:
        name = names[self.predictor]
        if self.kind == "linear":
            return name
        fn = "max" if self.kind == "hinge_pos" else "min"
        s = _fmt_split(self.split)
        return f"{fn}({name}{'+' + s[1:] if s.startswith('-') else '-' + s},0)"


@dataclass(frozen=True, eq=False)
class Term:
    """A basis function times ``I(parent(x) != 0)`` for each ancestor in the gate chain.

    Gating on the parent's value already includes the parent's own gates, so a
    term at interaction level ``k`` stores a single parent of level ``k - 1``.
    """

    base: BasisFunction
    parent: "Term | None" = None
    coefficient: float = 0.0

    @property
    def predictor(self) -> int:
        return self.base.predictor

    @property
    def interaction_level(self) -> int:
        return 0 if self.parent is None else self.parent.interaction_level + 1

    @property
    def gates(self) -> list["Term"]:
        chain, p = [], self.parent
        while p is not None:
            chain.append(p)
            p = p.parent
        return chain

    @property
    def key(self) -> tuple:
        """Structural identity, ignoring coefficients."""
        return (self.base, None if self.parent is None else self.parent.key)

    def same_as(self, other: "Term") -> bool:
        return self.key == other.key

    def with_coefficient(self, coefficient: float) -> "Term":
        return replace(self, coefficient=float(coefficient))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return eval_term(self, values)

    def render(self, names: Sequence[str]) -> str:
        expr = self.base.render(names)
        if self.parent is not None:
            expr += f" * I({self.parent.render(names)}!=0)"
        return expr

    def to_dict(self, names: Sequence[str]) -> dict:
        return {
            "predictor_name": names[self.predictor],
            "kind": self.base.kind,
            "split": self.base.split,
            "gate_chain": None if self.parent is None else self.parent.to_dict(names),
            "coefficient": self.coefficient,
        }

    @classmethod
    def from_dict(cls, doc: dict, names: Sequence[str]) -> "Term":
        try:
            j = list(names).index(doc["predictor_name"])
        except ValueError:
            raise ValueError(f"unknown predictor {doc['predictor_name']!r}") from None
        parent = None if doc.get("gate_chain") is None else cls.from_dict(doc["gate_chain"], names)
        return cls(BasisFunction(j, doc["kind"], float(doc["split"])), parent, float(doc.get("coefficient", 0.0)))


def _fmt_split(s: float) -> str:
    text = repr(float(s))
    if text.endswith(".0"):
        text = text[:-2]
    return "0" if text == "-0" else text


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


def eval_term(t: Term, x) -> np.ndarray:
    """Value of ``t`` on every row of ``x``; the coefficient is not applied."""
    values = _values(x)
    if not 0 <= t.predictor < values.shape[1]:
        raise IndexError(f"predictor index {t.predictor} out of bounds for {values.shape[1]} columns")
    out = t.base(values[:, t.predictor])
    if t.parent is not None:
        out = out * (eval_term(t.parent, values) != 0)
    return out


def candidate_splits(column, min_obs: int) -> list[float]:
    """Observed values ``v`` with at least ``min_obs`` rows strictly above and below.

    Columns with more than 100 distinct values are thinned to 100 empirical
    quantiles first.
    """
    column = np.sort(np.asarray(column, dtype=float))
    n = column.shape[0]
    values = np.unique(column)
    if values.shape[0] < 2 or n < 2 * min_obs:
        return []
    if values.shape[0] > MAX_SPLIT_CANDIDATES:
        values = np.unique(np.quantile(column, np.linspace(0, 1, MAX_SPLIT_CANDIDATES), method="inverted_cdf"))
    below = np.searchsorted(column, values, side="left")
    above = n - np.searchsorted(column, values, side="right")
    keep = (below >= min_obs) & (above >= min_obs)
    return [float(v) for v in values[keep]]


def column_bases(values: np.ndarray, min_obs: int) -> list[BasisFunction]:
    """All ungated bases, ordered by predictor, kind, split."""
    out = []
    for j in range(values.shape[1]):
        col = values[:, j]
        if np.ptp(col) == 0:
            continue
        splits = candidate_splits(col, min_obs)
        out.append(BasisFunction(j, "linear"))
        out.extend(BasisFunction(j, "hinge_pos", s) for s in splits)
        out.extend(BasisFunction(j, "hinge_neg", s) for s in splits)
    return out


@dataclass(frozen=True)
class CandidateSet:
    terms: tuple[Term, ...]
    min_observations_in_split: int

    def __len__(self) -> int:
        return len(self.terms)


def enumerate_candidates(x, model_terms: Sequence[Term], hp) -> CandidateSet:
    """Every admissible candidate for the next boosting step.

    Ungated: each column's linear term (non-constant columns only) and both
    hinges at every admissible split. Gated: each of those bases under every
    model term whose interaction level is below ``hp.max_interaction_level``,
    kept when the gated product is nonzero on at least
    ``hp.min_observations_in_split`` rows. Existing model terms reappear.
    Order is (predictor, kind, split, gate position) with ungated first.
    """
    values = _values(x)
    min_obs = hp.min_observations_in_split
    parents = [t for t in model_terms if t.interaction_level < hp.max_interaction_level]
    gate_masks = [eval_term(p, values) != 0 for p in parents]
    terms = []
    for base in column_bases(values, min_obs):
        col = base(values[:, base.predictor])
        nz = col != 0
        if base.kind == "linear" or nz.sum() >= min_obs:
            terms.append(Term(base))
        for p, mask in zip(parents, gate_masks):
            if np.count_nonzero(nz & mask) >= min_obs:
                terms.append(Term(base, p))
    return CandidateSet(tuple(terms), min_obs)


class BasisBank:
    """Dense evaluation of a fixed list of bases on one design matrix."""

    def __init__(self, values: np.ndarray, bases: Sequence[BasisFunction]):
        self.bases = list(bases)
        self.index = {b: k for k, b in enumerate(self.bases)}
        self.matrix = self.evaluate(values)
        self.nonzero = (self.matrix != 0).astype(float)
        self.squared = self.matrix**2

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        out = np.empty((values.shape[0], len(self.bases)))
        for k, b in enumerate(self.bases):
            out[:, k] = b(values[:, b.predictor])
        return out


def parse_expression(expr: str, names: Sequence[str]) -> Term:
    """Inverse of :meth:`Term.render`; returns a term with zero coefficient."""
    expr = expr.strip()
    depth = 0
    for i, ch in enumerate(expr):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and expr.startswith(" * I(", i):
            inner = expr[i + 5 :]
            if not inner.endswith("!=0)"):
                raise ValueError(f"malformed gate in {expr!r}")
            parent = parse_expression(inner[:-4], names)
            return Term(_parse_base(expr[:i], names), parent)
    return Term(_parse_base(expr, names))


def _parse_base(text: str, names: Sequence[str]) -> BasisFunction:
    text = text.strip()
    names = list(names)
    for fn, kind in (("max(", "hinge_pos"), ("min(", "hinge_neg")):
        if text.startswith(fn) and text.endswith(",0)") and text[4:-3] not in names:
            body = text[4:-3]
            for i, ch in enumerate(body):
                if ch not in "+-" or i == 0 or body[:i] not in names:
                    continue
                try:
                    split = float(body[i + 1 :])
                except ValueError:
                    continue
                return BasisFunction(names.index(body[:i]), kind, -split if ch == "+" else split)
            raise ValueError(f"cannot parse hinge {text!r}")
    if text not in names:
        raise ValueError(f"unknown feature {text!r}")
    return BasisFunction(names.index(text), "linear")
