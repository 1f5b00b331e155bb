"""Componentwise gradient boosting over piecewise-linear terms."""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .basis import BasisBank, BasisFunction, Term, column_bases, eval_term
from .dataset import EncodedMatrix, Labels, stratified_fold_ids
from .errors import ConfigError, DataError, NumericError
from .seeds import derive_seed

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
_EARLY_STOP = re.compile(r"^internal_cv\((\d+)\)$")


def worker_count() -> int:
    env = os.environ.get("APLR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"APLR_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Hyperparams:
    boosting_steps: int = 3000
    learning_rate: float = 0.5
    max_interaction_level: int = 1
    min_observations_in_split: int = 20
    seed: int = 42
    early_stop: str = "internal_cv(5)"

    def __post_init__(self):
        if self.boosting_steps < 0:
            raise ConfigError("boosting_steps must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.max_interaction_level < 0:
            raise ConfigError("max_interaction_level must be non-negative")
        if self.min_observations_in_split < 1:
            raise ConfigError("min_observations_in_split must be positive")
        if self.early_stop != "off":
            m = _EARLY_STOP.match(self.early_stop)
            if m is None or int(m.group(1)) < 2:
                raise ConfigError(f"early_stop must be 'off' or 'internal_cv(k)' with k >= 2, got {self.early_stop!r}")

    @property
    def cv_folds(self) -> int | None:
        m = _EARLY_STOP.match(self.early_stop)
        return int(m.group(1)) if m else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "Hyperparams":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown hyperparameters: {', '.join(sorted(unknown))}")
        return cls(**doc)


def negative_gradient(task: str, y, f) -> np.ndarray:
    """``y - f`` for squared error, ``y - sigmoid(f)`` for the binomial logit loss."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.shape != f.shape:
        raise ValueError("target and predictions differ in shape")
    if task == "regression":
        return y - f
    if task in ("classification", "logit"):
        return y - expit(f)
    raise ValueError(f"unknown task {task!r}")


def estimate_coefficient(f_vals, w, u, v: float) -> float:
    """Shrunken weighted least-squares coefficient of ``u`` on ``f`` over rows where ``f != 0``."""
    f_vals = np.asarray(f_vals, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.ones_like(f_vals) if w is None else np.asarray(w, dtype=float)
    nz = f_vals != 0
    if not nz.any():
        raise NumericError("coefficient undefined for an all-zero basis function")
    f, w, u = f_vals[nz], w[nz], u[nz]
    return float(v * np.sum(f * w * u) / np.sum(f * f * w))


def _loss(task: str, y: np.ndarray, f: np.ndarray, w: np.ndarray) -> float:
    if task == "regression":
        r = y - f
        return float(np.sum(w * r * r) / np.sum(w))
    return float(np.sum(w * (np.logaddexp(0.0, f) - y * f)) / np.sum(w))


@dataclass
class FitState:
    m: int
    intercept: float
    predictions: np.ndarray
    residuals: np.ndarray
    # (base index, gate column) per model term, in insertion order
    terms: list[tuple[int, int]] = field(default_factory=list)
    coefficients: list[float] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)
    validation_trace: list[float] = field(default_factory=list)
    validation_accuracy: list[float] = field(default_factory=list)


class Booster:
    """One additive submodel fitted to a single target vector.

    ``task`` is ``"regression"`` (squared error) or ``"logit"`` (binomial
    negative log-likelihood on a 0/1 target). Candidates are always scored by
    weighted squared error against the current negative gradient.
    """

    def __init__(
        self,
        values: np.ndarray,
        target: np.ndarray,
        hp: Hyperparams,
        task: str = "regression",
        weights: np.ndarray | None = None,
        validation: tuple[np.ndarray, np.ndarray, np.ndarray | None] | None = None,
        bases: Sequence[BasisFunction] | None = None,
    ):
        self.values = values
        self.target = np.asarray(target, dtype=float)
        self.hp = hp
        self.task = task
        n = values.shape[0]
        self.w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        if bases is None:
            bases = column_bases(values, hp.min_observations_in_split)
        self.bank = BasisBank(values, bases)
        self.min_obs = hp.min_observations_in_split
        self._linear = np.array([b.kind == "linear" for b in self.bank.bases], dtype=bool)

        # Gate g = 0 is "ungated"; gate g > 0 is I(model term gate_terms[g] != 0).
        # Gates with identical row patterns give identical candidates, and ties
        # go to the earliest gate, so only the first gate of each pattern is
        # scored. Gates open on fewer than min_obs rows admit nothing and are dropped.
        self.gate_terms: list[int | None] = [None]
        self.gate_patterns: dict[bytes, int] = {}
        self.pattern_gate: list[int] = []
        self.patterns = np.empty((n, 0))
        self.b_den = np.empty((len(self.bank.bases), 0))
        # 1 / sum(f^2 w) for admissible candidates, 0 elsewhere
        self.inv_den = np.empty((len(self.bank.bases), 0))
        self._add_gate(np.ones(n, dtype=bool), 0)

        self.term_index: dict[tuple[int, int], int] = {}
        self.levels: list[int] = []

        mean = float(np.sum(self.w * self.target) / np.sum(self.w))
        if task == "regression":
            intercept = mean
        else:
            p = min(max(mean, 1e-6), 1 - 1e-6)
            intercept = float(np.log(p / (1 - p)))
        f = np.full(n, intercept)
        self.state = FitState(0, intercept, f, negative_gradient(task, self.target, f))
        self.state.loss_trace.append(_loss(task, self.target, f, self.w))

        self.val = None
        if validation is not None:
            vx, vy, vw = validation
            vw = np.ones(vx.shape[0]) if vw is None else np.asarray(vw, dtype=float)
            self.val = (self.bank.evaluate(vx), np.asarray(vy, dtype=float), vw, np.full(vx.shape[0], intercept), [np.ones(vx.shape[0])])
            self._record_validation()

    def _add_gate(self, mask: np.ndarray, g: int) -> None:
        key = np.packbits(mask).tobytes()
        if key in self.gate_patterns or (g > 0 and mask.sum() < self.min_obs):
            return
        gate = mask.astype(float)
        den = self.bank.squared.T @ (self.w * gate)
        cnt = self.bank.nonzero.T @ gate
        ok = den > 0
        if g == 0:
            ok &= self._linear | (cnt >= self.min_obs)
        else:
            ok &= cnt >= self.min_obs
        self.gate_patterns[key] = len(self.pattern_gate)
        self.pattern_gate.append(g)
        self.patterns = np.column_stack([self.patterns, gate])
        self.b_den = np.column_stack([self.b_den, den])
        inv = np.zeros_like(den)
        inv[ok] = 1.0 / den[ok]
        self.inv_den = np.column_stack([self.inv_den, inv])

    def step(self) -> FitState:
        s = self.state
        v = self.hp.learning_rate
        s.m += 1
        u = negative_gradient(self.task, self.target, s.predictions)
        delta = v * float(np.sum(self.w * u) / np.sum(self.w))
        s.intercept += delta
        s.predictions = s.predictions + delta
        u = negative_gradient(self.task, self.target, s.predictions)

        num = self.bank.matrix.T @ ((self.w * u)[:, None] * self.patterns)
        # loss reduction of candidate f is (2v - v^2) * (sum f w u)^2 / sum f^2 w
        score = num * num
        score *= self.inv_den
        best = int(np.argmax(score))
        k, c = divmod(best, score.shape[1])
        g = self.pattern_gate[c]
        beta = 0.0
        if score[k, c] <= 0:
            logger.debug("step %d: no admissible candidate improves the fit; intercept-only step", s.m)
            tv = None
        else:
            beta = v * num[k, c] / self.b_den[k, c]
            tv = self.bank.matrix[:, k] * self.patterns[:, c]
            key = (k, g)
            if key in self.term_index:
                s.coefficients[self.term_index[key]] += beta
            else:
                self._append_term(key, tv, beta)
            s.predictions = s.predictions + beta * tv
        s.residuals = negative_gradient(self.task, self.target, s.predictions)
        s.loss_trace.append(_loss(self.task, self.target, s.predictions, self.w))

        if self.val is not None:
            vb, vy, vw, vf, vgates = self.val
            vf += delta
            if tv is not None:
                vf += beta * vb[:, k] * vgates[g]
            self._record_validation()
        return s

    def _record_validation(self) -> None:
        _, vy, vw, vf, _ = self.val
        self.state.validation_trace.append(_loss(self.task, vy, vf, vw))
        if self.task == "logit":
            self.state.validation_accuracy.append(float(np.sum(vw * ((vf > 0) == (vy == 1))) / np.sum(vw)))

    def _append_term(self, key: tuple[int, int], tv: np.ndarray, beta: float) -> None:
        s = self.state
        k, g = key
        pos = len(s.terms)
        self.term_index[key] = pos
        s.terms.append(key)
        s.coefficients.append(beta)
        level = 0 if g == 0 else self.levels[self.gate_terms[g]] + 1
        self.levels.append(level)
        if level < self.hp.max_interaction_level:
            self.gate_terms.append(pos)
            self._add_gate(tv != 0, len(self.gate_terms) - 1)
            if self.val is not None:
                vb, _, _, _, vgates = self.val
                vgates.append(vb[:, k] * vgates[g] != 0)

    def run(self, steps: int) -> FitState:
        for _ in range(steps):
            self.step()
        return self.state

    def terms(self) -> list[Term]:
        """Model terms with parents linked, in insertion order."""
        s = self.state
        out: list[Term] = []
        for (k, g), coef in zip(s.terms, s.coefficients):
            parent = None if g == 0 else out[self.gate_terms[g]]
            out.append(Term(self.bank.bases[k], parent, float(coef)))
        return out


def boost_step(booster: Booster) -> FitState:
    """Advance a booster by one componentwise step and return its state.

    The step needs the evaluated basis matrix and the gate patterns of the
    current terms, which live on the :class:`Booster`, so it is passed whole
    rather than as (state, matrix, hyperparameters).
    """
    return booster.step()


@dataclass(frozen=True, eq=False)
class Submodel:
    label: float | None
    intercept: float
    terms: tuple[Term, ...]
    steps: int = 0

    def logit(self, values: np.ndarray) -> np.ndarray:
        out = np.full(values.shape[0], self.intercept)
        for t in self.terms:
            out = out + t.coefficient * eval_term(t, values)
        return out

    def negated(self, label: float | None) -> "Submodel":
        flipped: list[Term] = []
        index = {id(t): i for i, t in enumerate(self.terms)}
        for t in self.terms:
            parent = None if t.parent is None else flipped[index[id(t.parent)]]
            flipped.append(Term(t.base, parent, -t.coefficient))
        return Submodel(label, -self.intercept, tuple(flipped), self.steps)


@dataclass(frozen=True, eq=False)
class AplrModel:
    task: str
    classes: tuple[float, ...]
    submodels: tuple[Submodel, ...]
    feature_names: tuple[str, ...]
    hyperparams: Hyperparams
    n_train: int = 0
    feature_ranges: tuple[tuple[float, float], ...] = ()

    def design(self, x) -> np.ndarray:
        if isinstance(x, EncodedMatrix):
            return x.align(self.feature_names).values
        values = np.asarray(x, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape[1] != len(self.feature_names):
            raise DataError(f"expected {len(self.feature_names)} columns, got {values.shape[1]}")
        return values

    def submodel(self, label=None) -> Submodel:
        if label is None:
            return self.submodels[-1]
        for sm in self.submodels:
            if sm.label == float(label):
                return sm
        raise KeyError(f"no submodel for class {label!r}")

    def predict_logits(self, x) -> np.ndarray:
        """``(n, n_submodels)`` raw additive scores."""
        values = self.design(x)
        return np.column_stack([sm.logit(values) for sm in self.submodels])

    def predict_proba(self, x) -> np.ndarray:
        if self.task != "classification":
            raise ValueError("probabilities are only defined for classification")
        return expit(self.predict_logits(x))

    def predict(self, x) -> np.ndarray:
        if self.task == "regression":
            return self.predict_logits(x)[:, 0]
        proba = self.predict_proba(x)
        return np.asarray(self.classes)[np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        names = self.feature_names

        def dump_sm(sm: Submodel) -> dict:
            index = {id(t): i for i, t in enumerate(sm.terms)}
            terms = []
            for t in sm.terms:
                d = t.to_dict(names)
                d["parent_index"] = None if t.parent is None else index[id(t.parent)]
                terms.append(d)
            return {"label": sm.label, "intercept": sm.intercept, "steps": sm.steps, "terms": terms}

        return {
            "version": MODEL_VERSION,
            "task": self.task,
            "hyperparams": self.hyperparams.to_dict(),
            "classes": list(self.classes),
            "submodels": [dump_sm(sm) for sm in self.submodels],
            "feature_names": list(names),
            "feature_ranges": [list(r) for r in self.feature_ranges],
            "n_train": self.n_train,
            "seed": self.hyperparams.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AplrModel":
        if doc.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {doc.get('version')!r}")
        names = tuple(doc["feature_names"])
        subs = []
        for sd in doc["submodels"]:
            terms: list[Term] = []
            for td in sd["terms"]:
                parent = None if td.get("parent_index") is None else terms[td["parent_index"]]
                loose = Term.from_dict({**td, "gate_chain": None}, names)
                term = Term(loose.base, parent, loose.coefficient)
                if td.get("gate_chain") is not None and not term.same_as(Term.from_dict(td, names)):
                    raise DataError("gate_chain disagrees with parent_index in model file")
                terms.append(term)
            subs.append(Submodel(sd["label"], float(sd["intercept"]), tuple(terms), int(sd.get("steps", 0))))
        return cls(
            task=doc["task"],
            classes=tuple(float(c) for c in doc["classes"]),
            submodels=tuple(subs),
            feature_names=names,
            hyperparams=Hyperparams.from_dict(doc["hyperparams"]),
            n_train=int(doc.get("n_train", 0)),
            feature_ranges=tuple(tuple(r) for r in doc.get("feature_ranges", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AplrModel":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read model {path}: {exc}") from exc
        return cls.from_dict(doc)


def _kfold_ids(n: int, k: int, seed: int, strata: np.ndarray | None) -> np.ndarray:
    if strata is not None:
        return stratified_fold_ids(strata, k, seed)
    rng = np.random.default_rng(seed)
    ids = np.empty(n, dtype=int)
    ids[rng.permutation(n)] = np.arange(n) % k
    return ids


def validation_curve(values, target, w, hp: Hyperparams, task: str, fold_ids: np.ndarray) -> np.ndarray:
    """``(k, M + 1)`` validation losses after each step, one row per held-out fold."""
    k = int(fold_ids.max()) + 1

    def run(f: int) -> list[float]:
        tr, va = fold_ids != f, fold_ids == f
        vw = None if w is None else w[va]
        b = Booster(values[tr], target[tr], hp, task, None if w is None else w[tr], (values[va], target[va], vw))
        return b.run(hp.boosting_steps).validation_trace

    with ThreadPoolExecutor(max_workers=min(k, worker_count())) as pool:
        traces = list(pool.map(run, range(k)))
    return np.array(traces)


def _fit_submodel(values, target, w, hp: Hyperparams, task: str, strata, label) -> Submodel:
    steps = hp.boosting_steps
    folds = hp.cv_folds
    if folds is not None and steps > 0:
        ids = _kfold_ids(values.shape[0], folds, derive_seed(hp.seed, "early_stop"), strata)
        curve = validation_curve(values, target, w, hp, task, ids).mean(axis=0)
        steps = int(np.argmin(curve))
        logger.info("internal %d-fold CV selected %d of %d steps", folds, steps, hp.boosting_steps)
    booster = Booster(values, target, hp, task, w)
    state = booster.run(steps)
    return Submodel(label, float(state.intercept), tuple(booster.terms()), steps)


def fit(x: EncodedMatrix, y: Labels, hp: Hyperparams = Hyperparams()) -> AplrModel:
    """Fit a regression model (real labels) or per-class logit models (binary/multiclass)."""
    if x.n_rows != len(y):
        raise DataError("matrix and labels differ in length")
    if x.n_rows == 0:
        raise DataError("cannot fit on an empty matrix")
    values, w = x.values, x.weights
    ranges = tuple((float(lo), float(hi)) for lo, hi in zip(values.min(axis=0), values.max(axis=0)))
    common = dict(feature_names=x.column_names, hyperparams=hp, n_train=x.n_rows, feature_ranges=ranges)

    if y.kind == "real":
        sm = _fit_submodel(values, y.y, w, hp, "regression", None, None)
        return AplrModel("regression", (), (sm,), **common)

    classes, counts = np.unique(y.y, return_counts=True)
    if len(classes) < 2:
        raise DataError("classification needs at least two classes")
    folds = hp.cv_folds
    if folds is not None and hp.boosting_steps > 0 and counts.min() < folds:
        raise DataError(f"class {classes[np.argmin(counts)]:g} has fewer members than the {folds} CV folds")
    if len(classes) == 2:
        pos = _fit_submodel(values, (y.y == classes[1]).astype(float), w, hp, "logit", y.y, float(classes[1]))
        subs = (pos.negated(float(classes[0])), pos)
    else:
        subs = tuple(
            _fit_submodel(values, (y.y == c).astype(float), w, hp, "logit", y.y, float(c)) for c in classes
        )
    return AplrModel("classification", tuple(float(c) for c in classes), subs, **common)


def predict(model: AplrModel, x) -> dict:
    """Raw scores plus, for classification, probabilities and labels."""
    logits = model.predict_logits(x)
    if model.task == "regression":
        return {"prediction": logits[:, 0]}
    proba = expit(logits)
    return {
        "logits": logits,
        "probabilities": proba,
        "prediction": np.asarray(model.classes)[np.argmax(proba, axis=1)],
    }
