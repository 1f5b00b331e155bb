"""End-to-end experiment: encode, split, balance, tune, fit, evaluate, explain."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .boost import AplrModel, Hyperparams, fit
from .config import RunConfig
from .dataset import build_target, encode_predictors, load_survey, split_indices, write_encoded_csv
from .errors import AplrError, DataError
from .evaluation import CellResult, auc, classification_metrics, kfold_grid_search
from .interpret import global_importance, term_table
from .seeds import derive_seed
from .smote import oversample

logger = logging.getLogger(__name__)

ARTIFACTS = (
    "encoded.csv",
    "split.json",
    "train_balanced.csv",
    "best.json",
    "tune_cells.csv",
    "model.json",
    "metrics.json",
    "terms.csv",
    "importance.csv",
)


class StageError(AplrError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4 if isinstance(cause, ArithmeticError) else 3)


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_cells_csv(path: Path, cells: list[CellResult]) -> None:
    keys = sorted({k for c in cells for k in c.params})
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + ["best_steps", "loss_mean", "loss_std", "accuracy_mean", "accuracy_std"])
        for c in cells:
            w.writerow([c.params.get(k, "") for k in keys] + [c.best_steps, repr(c.loss_mean), repr(c.loss_std),
                       "" if c.accuracy_mean is None else repr(c.accuracy_mean),
                       "" if c.accuracy_std is None else repr(c.accuracy_std)])


def cells_to_json(cells: list[CellResult]) -> list[dict]:
    return [
        {
            "params": c.params,
            "best_steps": c.best_steps,
            "loss_mean": c.loss_mean,
            "loss_std": c.loss_std,
            "accuracy_mean": c.accuracy_mean,
            "accuracy_std": c.accuracy_std,
        }
        for c in cells
    ]


def write_terms_csv(path: Path, model: AplrModel, label=None) -> None:
    table = term_table(model, label)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interaction_level", "term", "coefficient"])
        for r in table.rows:
            w.writerow(["null" if r.interaction_level is None else r.interaction_level, r.expression, repr(r.coefficient)])


def write_importance_csv(path: Path, ranked) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance"])
        for name, value in ranked:
            w.writerow([name, repr(value)])


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(cfg: RunConfig, out_dir) -> Path:
    """Execute every stage and write the artifacts into a fresh ``out_dir``."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise DataError(f"run directory {out} already holds artifacts; runs are never overwritten")
    seeds = {name: derive_seed(cfg.seed, name) for name in ("split", "smote", "tune")}

    with _Stage("load"):
        if not cfg.data.is_file():
            raise DataError(f"input file {cfg.data} not found")
        raw = load_survey(cfg.data, cfg.encoding)
    with _Stage("encode"):
        x = encode_predictors(raw, cfg.encoding, exclude=cfg.target.columns)
    with _Stage("target"):
        y = build_target(raw, cfg.target)
    out.mkdir(parents=True, exist_ok=True)
    write_encoded_csv(out / "encoded.csv", x, y)

    with _Stage("split"):
        train_idx, test_idx = split_indices(y, cfg.test_fraction, seeds["split"])
        x_tr, y_tr, x_te, y_te = x.take(train_idx), y.take(train_idx), x.take(test_idx), y.take(test_idx)
    write_json(out / "split.json", {"seed": seeds["split"], "train": train_idx.tolist(), "test": test_idx.tolist()})

    with _Stage("smote"):
        smote_cfg = None if cfg.smote is None else replace(cfg.smote, seed=seeds["smote"])
        x_bal, y_bal = (x_tr, y_tr) if smote_cfg is None else oversample(x_tr, y_tr, smote_cfg)
    write_encoded_csv(out / "train_balanced.csv", x_bal, y_bal)

    hp = cfg.hyperparams
    cells: list[CellResult] = []
    with _Stage("tune"):
        if cfg.tune is not None:
            # SMOTE runs inside each training fold, so tuning sees the unbalanced split
            hp, cells = kfold_grid_search(x_tr, y_tr, cfg.tune, hp, seeds["tune"], smote_cfg)
    write_json(out / "best.json", {"hyperparams": hp.to_dict(), "cells": cells_to_json(cells)})
    write_cells_csv(out / "tune_cells.csv", cells)

    with _Stage("fit"):
        model = fit(x_bal, y_bal, hp)
    model.save(out / "model.json")

    with _Stage("evaluate"):
        proba = model.predict_proba(x_te)[:, -1]
        pred = model.predict(x_te)
        positive = model.classes[-1]
        score = auc(proba, y_te.y, positive)
        metrics = classification_metrics(y_te.y, pred, positive, score)
    write_json(out / "metrics.json", metrics.to_dict())

    with _Stage("explain"):
        write_terms_csv(out / "terms.csv", model)
        write_importance_csv(out / "importance.csv", global_importance(model, x_bal).ranked())

    manifest = {
        "config_hash": cfg.digest(),
        "data_sha256": sha256_file(cfg.data),
        "seed": cfg.seed,
        "stage_seeds": seeds,
        "versions": {
            "aplrkit": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "artifacts": {name: sha256_file(out / name) for name in ARTIFACTS},
        "sizes": {"n": x.n_rows, "train": int(len(train_idx)), "test": int(len(test_idx)), "balanced_train": x_bal.n_rows},
    }
    write_json(out / "manifest.json", manifest)
    logger.info("run written to %s", out)
    return out


def _read_csv(path: Path) -> list[list[str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def render_report(run_dir, top: int = 15) -> str:
    """Markdown summary of a finished run, built only from its artifacts."""
    run = Path(run_dir)
    for name in ("metrics.json", "terms.csv", "importance.csv"):
        if not (run / name).is_file():
            raise DataError(f"run directory {run} is missing artifact {name}")
    metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
    terms = _read_csv(run / "terms.csv")[1:]
    importance = _read_csv(run / "importance.csv")[1:]

    def num(v) -> str:
        return "n/a" if v is None else f"{float(v):.3f}"

    lines = ["# APLR run report", "", "## Test-set performance", ""]
    lines += ["| Accuracy | F1 | Precision | Recall | AUC |", "|---|---|---|---|---|"]
    lines.append("| " + " | ".join(num(metrics.get(k)) for k in ("accuracy", "f1", "precision", "recall", "auc")) + " |")
    c = metrics.get("confusion", {})
    lines += ["", f"Confusion counts: tp={c.get('tp')}, fp={c.get('fp')}, tn={c.get('tn')}, fn={c.get('fn')}", ""]

    lines += ["## Terms of the positive-class logit model", "", "| Interaction level | Term | Coefficient |", "|---|---|---|"]
    for level, expr, coef in terms:
        lines.append(f"| {level} | {expr} | {float(coef):.3f} |")

    lines += ["", f"## Global feature importance (top {top})", "", "| Feature | Importance |", "|---|---|"]
    for name, value in importance[:top]:
        lines.append(f"| {name} | {float(value):.3f} |")
    return "\n".join(lines) + "\n"


def load_best(path) -> Hyperparams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Hyperparams.from_dict(doc.get("hyperparams", doc))
