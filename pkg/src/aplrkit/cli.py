"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .boost import AplrModel, Hyperparams, fit, predict
from .config import RunConfig
from .dataset import (
    EncodingSchema,
    TargetSpec,
    build_target,
    encode_predictors,
    load_survey,
    read_encoded_csv,
    split_indices,
    write_encoded_csv,
)
from .errors import AplrError, ConfigError, DataError
from .evaluation import TuneGrid, auc, classification_metrics, kfold_grid_search
from .interpret import global_importance, local_contributions
from .pipeline import (
    cells_to_json,
    load_best,
    render_report,
    run_pipeline,
    write_cells_csv,
    write_importance_csv,
    write_json,
)
from .seeds import derive_seed
from .smote import SmoteConfig, oversample

logger = logging.getLogger("aplrkit")


def _load_labeled(path, target: str):
    x, y = read_encoded_csv(path, target)
    if y is None:
        raise DataError(f"{path} has no {target!r} column")
    return x, y


def cmd_encode(args) -> None:
    if args.config:
        cfg = RunConfig.load(args.config)
        schema, spec, data = cfg.encoding, cfg.target, Path(args.data) if args.data else cfg.data
    else:
        if not args.data:
            raise ConfigError("encode needs --data or --config")
        schema, spec, data = EncodingSchema(), TargetSpec(), Path(args.data)
    raw = load_survey(data, schema)
    x = encode_predictors(raw, schema, exclude=spec.columns)
    write_encoded_csv(args.out, x, build_target(raw, spec), args.target)


def cmd_split(args) -> None:
    x, y = _load_labeled(args.data, args.target)
    train, test = split_indices(y, args.test_fraction, derive_seed(args.seed, "split"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_encoded_csv(out / "train.csv", x.take(train), y.take(train), args.target)
    write_encoded_csv(out / "test.csv", x.take(test), y.take(test), args.target)
    write_json(out / "split.json", {"seed": derive_seed(args.seed, "split"), "train": train.tolist(), "test": test.tolist()})


def cmd_smote(args) -> None:
    x, y = _load_labeled(args.input, args.target)
    cfg = SmoteConfig(args.k, derive_seed(args.seed, "smote"), args.ratio)
    xb, yb = oversample(x, y, cfg)
    write_encoded_csv(args.out, xb, yb, args.target)


def _base_hyperparams(args) -> Hyperparams:
    hp = load_best(args.params) if getattr(args, "params", None) else Hyperparams()
    overrides = {}
    if args.steps is not None:
        overrides["boosting_steps"] = args.steps
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if getattr(args, "early_stop", None) is not None:
        overrides["early_stop"] = args.early_stop
    return replace(hp, seed=args.seed, **overrides)


def cmd_tune(args) -> None:
    x, y = _load_labeled(args.data, args.target)
    try:
        grid = TuneGrid.from_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read grid {args.grid}: {exc}") from exc
    smote = None if args.no_smote else SmoteConfig(args.k, derive_seed(args.seed, "smote"))
    hp, cells = kfold_grid_search(x, y, grid, _base_hyperparams(args), derive_seed(args.seed, "tune"), smote)
    write_json(Path(args.out), {"hyperparams": hp.to_dict(), "cells": cells_to_json(cells)})
    cells_path = Path(args.cells) if args.cells else Path(args.out).with_name(Path(args.out).stem + "_cells.csv")
    write_cells_csv(cells_path, cells)


def cmd_fit(args) -> None:
    x, y = _load_labeled(args.data, args.target)
    fit(x, y, _base_hyperparams(args)).save(args.out)


def cmd_predict(args) -> None:
    model = AplrModel.load(args.model)
    x, _ = read_encoded_csv(args.data, args.target)
    res = predict(model, x)
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if model.task == "regression":
            w.writerow(["prediction"])
            w.writerows([[repr(float(p))] for p in res["prediction"]])
        else:
            labels = [f"{c:g}" for c in model.classes]
            w.writerow(["prediction"] + [f"logit_{c}" for c in labels] + [f"proba_{c}" for c in labels])
            for p, lg, pr in zip(res["prediction"], res["logits"], res["probabilities"]):
                w.writerow([f"{p:g}"] + [repr(float(v)) for v in lg] + [repr(float(v)) for v in pr])


def cmd_evaluate(args) -> None:
    model = AplrModel.load(args.model)
    x, y = _load_labeled(args.data, args.target)
    if model.task != "classification" or len(model.classes) != 2:
        raise ConfigError("evaluate reports binary classification metrics")
    positive = model.classes[-1]
    score = auc(model.predict_proba(x)[:, -1], y.y, positive)
    report = classification_metrics(y.y, model.predict(x), positive, score)
    write_json(Path(args.out), report.to_dict())


def cmd_explain(args) -> None:
    model = AplrModel.load(args.model)
    if args.scope == "global":
        x, _ = read_encoded_csv(args.train, args.target)
        write_importance_csv(Path(args.out), global_importance(model, x).ranked())
        return
    x, _ = read_encoded_csv(args.data, args.target)
    if not 0 <= args.row < x.n_rows:
        raise DataError(f"row {args.row} outside 0..{x.n_rows - 1}")
    exp = local_contributions(model, x.take([args.row]), args.label, row_id=args.row)
    doc = {
        "row": args.row,
        "submodel_label": exp.label,
        "predicted": exp.predicted,
        "probability": exp.probability,
        "intercept": exp.intercept,
        "logit": exp.logit,
        "contributions": [{"feature": f, "value": v, "contribution": c} for f, v, c in exp.ranked()],
    }
    out = Path(args.out)
    write_json(out, doc)
    if args.csv:
        with Path(args.csv).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "value", "contribution"])
            w.writerows([[f, repr(v), repr(c)] for f, v, c in exp.ranked()])


def cmd_pipeline(args) -> None:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, hyperparams=replace(cfg.hyperparams, seed=args.seed))
    run_pipeline(cfg, args.out)
    print(Path(args.out) / "metrics.json")


def cmd_report(args) -> None:
    text = render_report(args.run_dir)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aplr", description="Automatic piecewise linear regression toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp, data_flag="--data"):
        sp.add_argument(data_flag, dest="input" if data_flag == "--in" else "data", required=True)
        sp.add_argument("--target", default="target", help="label column name in encoded CSVs")

    def hp_opts(sp):
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--steps", type=int, help="boosting steps (default 3000)")
        sp.add_argument("--learning-rate", type=float)

    sp = sub.add_parser("encode", help="encode a raw survey CSV and build the target")
    sp.add_argument("--config")
    sp.add_argument("--data")
    sp.add_argument("--target", default="target")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("split", help="stratified train/test split")
    data_opts(sp)
    sp.add_argument("--test-fraction", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("smote", help="balance a binary training set")
    data_opts(sp, "--in")
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--ratio", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_smote)

    sp = sub.add_parser("tune", help="k-fold grid search")
    data_opts(sp)
    hp_opts(sp)
    sp.add_argument("--grid", required=True)
    sp.add_argument("--k", type=int, default=5, help="SMOTE neighbours inside folds")
    sp.add_argument("--no-smote", action="store_true")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cells", help="per-cell CSV (default <out>_cells.csv)")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("fit", help="fit a model")
    data_opts(sp)
    hp_opts(sp)
    sp.add_argument("--params", help="best.json or a hyperparameter JSON object")
    sp.add_argument("--early-stop", help="'off' or 'internal_cv(k)'")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="score a CSV")
    sp.add_argument("--model", required=True)
    data_opts(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="test-set metrics")
    sp.add_argument("--model", required=True)
    data_opts(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("explain", help="global importance or local contributions")
    sp.add_argument("scope", choices=("global", "local"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--train")
    sp.add_argument("--data")
    sp.add_argument("--row", type=int)
    sp.add_argument("--class", dest="label", type=float, help="submodel to explain (default: predicted class)")
    sp.add_argument("--target", default="target")
    sp.add_argument("--csv", help="also write feature,value,contribution CSV (local)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("pipeline", help="run every stage from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True, help="fresh run directory")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("report", help="markdown report of a run directory")
    sp.add_argument("run_dir")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "explain":
        need = ("train",) if args.scope == "global" else ("data", "row")
        missing = [n for n in need if getattr(args, n) is None]
        if missing:
            parser.error(f"explain {args.scope} needs --{' --'.join(missing)}")
    try:
        args.func(args)
    except AplrError as exc:
        stage = getattr(exc, "stage", None)
        print(f"error{f' [{stage}]' if stage else ''}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
