"""Survey ingestion, predictor encoding, target construction and splitting."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ConfigError

logger = logging.getLogger(__name__)

LIKERT5 = {
    "strongly disagree": -2,
    "disagree": -1,
    "neutral": 0,
    "agree": 1,
    "strongly agree": 2,
}
YES_NO = {"yes": 1, "no": 0}
RULE_KINDS = ("likert5", "yes_no", "one_of_n", "already_numeric", "ignore")


@dataclass(frozen=True)
class RawSurveyTable:
    column_names: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names in survey header")
        width = len(self.column_names)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(f"ragged row {i + 1}: {len(row)} cells under {width} headers")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            j = self.column_names.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not in survey header") from None
        return [row[j] for row in self.rows]


@dataclass(frozen=True)
class ColumnRule:
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigError(f"unknown encoding rule {self.kind!r}")
        if self.kind == "one_of_n" and not self.categories:
            raise ConfigError("one_of_n rule needs its category list")
        if len(set(self.categories)) != len(self.categories):
            raise ConfigError("duplicate categories in one_of_n rule")


@dataclass(frozen=True)
class EncodingSchema:
    """Per-column encoding rules.

    Columns not listed in ``columns`` fall back to ``default``; with
    ``default=None`` every header column must be listed explicitly.
    """

    columns: Mapping[str, ColumnRule] = field(default_factory=dict)
    default: ColumnRule | None = ColumnRule("likert5")

    def rule_for(self, name: str) -> ColumnRule:
        if name in self.columns:
            return self.columns[name]
        if self.default is None:
            raise ConfigError(f"no encoding rule for column {name!r}")
        return self.default

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EncodingSchema":
        def parse(spec) -> ColumnRule:
            if isinstance(spec, str):
                return ColumnRule(spec)
            return ColumnRule(spec["rule"], tuple(spec.get("categories", ())))

        default = doc.get("default", "likert5")
        return cls(
            columns={k: parse(v) for k, v in doc.get("columns", {}).items()},
            default=None if default is None else parse(default),
        )

    def to_dict(self) -> dict:
        def dump(rule: ColumnRule):
            if rule.kind == "one_of_n":
                return {"rule": rule.kind, "categories": list(rule.categories)}
            return rule.kind

        return {
            "default": None if self.default is None else dump(self.default),
            "columns": {k: dump(v) for k, v in self.columns.items()},
        }


DEFAULT_COMPONENTS = (
    ("m_suitable", "positive"),
    ("m_comfortable", "positive"),
    ("m_feedback", "negative"),
    ("m_valuable", "positive"),
    ("m_sameMethod", "positive"),
    ("m_taskPerformance", "positive"),
    ("emo_miss", "negative"),
)


@dataclass(frozen=True)
class TargetSpec:
    components: tuple[tuple[str, str], ...] = DEFAULT_COMPONENTS
    threshold: int = 4
    name: str = "satisfied"

    def __post_init__(self):
        for col, polarity in self.components:
            if polarity not in ("positive", "negative"):
                raise ConfigError(f"component {col!r}: polarity must be positive or negative")
        k = len(self.components)
        if not -k <= self.threshold <= k:
            raise ConfigError(f"threshold {self.threshold} outside [-{k}, {k}]")

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.components)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TargetSpec":
        comps = doc.get("components")
        return cls(
            components=DEFAULT_COMPONENTS if comps is None else tuple((c, p) for c, p in comps),
            threshold=int(doc.get("threshold", 4)),
            name=doc.get("name", "satisfied"),
        )

    def to_dict(self) -> dict:
        return {
            "components": [list(c) for c in self.components],
            "threshold": self.threshold,
            "name": self.name,
        }


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    weights: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("design matrix must be two-dimensional")
        if values.shape[1] != len(self.column_names):
            raise DataError(f"{values.shape[1]} columns but {len(self.column_names)} names")
        if not np.all(np.isfinite(values)):
            raise DataError("design matrix contains missing or non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (values.shape[0],):
                raise DataError("weights must have one entry per row")
            if not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise DataError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def take(self, idx) -> "EncodedMatrix":
        idx = np.asarray(idx, dtype=int)
        w = None if self.weights is None else self.weights[idx]
        return EncodedMatrix(self.values[idx], self.column_names, w)

    def align(self, names: Sequence[str]) -> "EncodedMatrix":
        """Reorder columns to ``names``; extra columns are dropped."""
        missing = [n for n in names if n not in self.column_names]
        if missing:
            raise DataError(f"missing columns: {', '.join(missing)}")
        if tuple(names) == self.column_names:
            return self
        order = [self.column_names.index(n) for n in names]
        return EncodedMatrix(self.values[:, order], tuple(names), self.weights)


@dataclass(frozen=True, eq=False)
class Labels:
    y: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        if self.kind not in ("binary", "multiclass", "real"):
            raise DataError(f"unknown label kind {self.kind!r}")
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise DataError("labels must be a finite one-dimensional array")
        if self.kind == "binary" and not np.all((y == 0) | (y == 1)):
            raise DataError("binary labels must be 0 or 1")
        if self.kind == "multiclass" and not np.all(y == np.round(y)):
            raise DataError("multiclass labels must be integers")
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, idx) -> "Labels":
        return Labels(self.y[np.asarray(idx, dtype=int)], self.kind)


def load_survey(path, schema: EncodingSchema | None = None) -> RawSurveyTable:
    """Read a comma-separated survey export with a header row."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file, header row required") from None
            rows = [tuple(cell.strip() for cell in row) for row in reader if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    table = RawSurveyTable(tuple(header), tuple(rows))
    if schema is not None:
        absent = [c for c in schema.columns if c not in table.column_names]
        if absent:
            raise DataError(f"schema columns absent from header: {', '.join(absent)}")
    logger.info("loaded %d rows x %d columns from %s", table.n_rows, len(header), path)
    return table


def _cell_error(row: int, column: str, value: str, what: str) -> DataError:
    return DataError(f"row {row + 1}, column {column!r}: unrecognized {what} response {value!r}")


def encode_column(name: str, cells: Sequence[str], rule: ColumnRule) -> tuple[list[str], np.ndarray]:
    n = len(cells)
    for i, cell in enumerate(cells):
        if cell == "":
            raise DataError(f"row {i + 1}, column {name!r}: missing value")
    if rule.kind in ("likert5", "yes_no"):
        vocab = LIKERT5 if rule.kind == "likert5" else YES_NO
        out = np.empty((n, 1))
        for i, cell in enumerate(cells):
            try:
                out[i, 0] = vocab[cell.lower()]
            except KeyError:
                raise _cell_error(i, name, cell, rule.kind) from None
        return [name], out
    if rule.kind == "one_of_n":
        lookup = {c.lower(): k for k, c in enumerate(rule.categories)}
        out = np.zeros((n, len(rule.categories)))
        for i, cell in enumerate(cells):
            try:
                out[i, lookup[cell.lower()]] = 1.0
            except KeyError:
                raise _cell_error(i, name, cell, "one_of_n") from None
        return [f"{name}_{c}" for c in rule.categories], out
    if rule.kind == "already_numeric":
        out = np.empty((n, 1))
        for i, cell in enumerate(cells):
            try:
                out[i, 0] = float(cell)
            except ValueError:
                raise _cell_error(i, name, cell, "numeric") from None
            if not np.isfinite(out[i, 0]):
                raise _cell_error(i, name, cell, "numeric")
        return [name], out
    raise ConfigError(f"column {name!r} is ignored and cannot be encoded")


def encode_predictors(
    raw: RawSurveyTable,
    schema: EncodingSchema,
    exclude: Sequence[str] = (),
) -> EncodedMatrix:
    """Numeric design matrix from survey responses.

    Columns in ``exclude`` (typically the target components) and columns with
    the ``ignore`` rule are left out. One-of-N columns expand to one indicator
    per category, named ``<column>_<category>``, with no reference level dropped.
    """
    names: list[str] = []
    blocks: list[np.ndarray] = []
    for j, col in enumerate(raw.column_names):
        rule = schema.rule_for(col)
        if col in exclude or rule.kind == "ignore":
            continue
        cells = [row[j] for row in raw.rows]
        new_names, block = encode_column(col, cells, rule)
        names.extend(new_names)
        blocks.append(block)
    if len(set(names)) != len(names):
        raise DataError("encoded column names collide")
    values = np.hstack(blocks) if blocks else np.empty((raw.n_rows, 0))
    return EncodedMatrix(values, tuple(names))


def _component_score(cell: str, row: int, column: str) -> int:
    key = cell.strip().lower()
    if key in LIKERT5:
        level = LIKERT5[key]
    else:
        try:
            level = float(key)
        except ValueError:
            raise _cell_error(row, column, cell, "Likert") from None
        if level not in (-2, -1, 0, 1, 2):
            raise _cell_error(row, column, cell, "Likert")
    return int(np.sign(level))


def build_target(raw: RawSurveyTable, spec: TargetSpec = TargetSpec()) -> Labels:
    """Binary satisfaction label from the composite of Likert components.

    Each component contributes -1 (disagree), 0 (neutral) or +1 (agree), with
    negative-polarity components flipped. Components may be Likert phrases or
    pre-encoded integers in -2..2.
    """
    total = np.zeros(raw.n_rows, dtype=int)
    for col, polarity in spec.components:
        cells = raw.column(col)
        sign = 1 if polarity == "positive" else -1
        total += sign * np.array([_component_score(c, i, col) for i, c in enumerate(cells)], dtype=int)
    return Labels((total >= spec.threshold).astype(float), "binary")


def stratified_fold_ids(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Assign each row to one of ``k`` folds, class-balanced, seeded."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        # continue the round-robin across classes so fold sizes stay within one
        folds[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    return folds


def split_indices(y: Labels | np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train/test row indices of a stratified split."""
    y = y.y if isinstance(y, Labels) else np.asarray(y, dtype=float)
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    n = len(y)
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < 2):
        small = classes[counts < 2]
        raise DataError(f"class {small[0]:g} has fewer than 2 members; cannot stratify")
    n_test = n - int(np.floor(n * (1 - test_fraction) + 1e-9))
    # largest-remainder allocation of test rows across classes
    exact = counts * n_test / n
    alloc = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - alloc), kind="stable")[: n_test - alloc.sum()]:
        alloc[i] += 1
    alloc = np.clip(alloc, 1, counts - 1)
    rng = np.random.default_rng(seed)
    test = []
    for cls, k in zip(classes, alloc):
        idx = np.flatnonzero(y == cls)
        test.append(idx[rng.permutation(len(idx))[:k]])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    return train_idx, test_idx


def stratified_split(x: EncodedMatrix, y: Labels, test_fraction: float = 0.2, seed: int = 42):
    """Returns ``((x_train, y_train), (x_test, y_test))``."""
    if x.n_rows != len(y):
        raise DataError("matrix and labels differ in length")
    train_idx, test_idx = split_indices(y, test_fraction, seed)
    return (x.take(train_idx), y.take(train_idx)), (x.take(test_idx), y.take(test_idx))


def read_encoded_csv(path, target: str | None = "target", weight: str | None = "weight"):
    """Load a numeric CSV written by :func:`write_encoded_csv`.

    Returns ``(EncodedMatrix, Labels | None)``. The label column is optional.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row]
    except (OSError, StopIteration) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        data = np.array([[float(c) for c in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric or ragged content ({exc})") from exc
    feat = [j for j, h in enumerate(header) if h not in (target, weight)]
    w = data[:, header.index(weight)] if weight in header else None
    x = EncodedMatrix(data[:, feat], tuple(header[j] for j in feat), w)
    labels = None
    if target in header:
        yv = data[:, header.index(target)]
        if np.all((yv == 0) | (yv == 1)):
            kind = "binary"
        elif np.all(yv == np.round(yv)) and len(np.unique(yv)) <= 20:
            kind = "multiclass"
        else:
            kind = "real"
        labels = Labels(yv, kind)
    return x, labels


def write_encoded_csv(path, x: EncodedMatrix, y: Labels | None = None, target: str = "target") -> None:
    header = list(x.column_names)
    cols = [x.values]
    if x.weights is not None:
        header.append("weight")
        cols.append(x.weights[:, None])
    if y is not None:
        header.append(target)
        cols.append(y.y[:, None])
    data = np.hstack(cols)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))
