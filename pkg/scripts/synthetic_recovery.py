"""Fit a known piecewise-linear regression target and report how well it is recovered.

The target is 2*max(x1-0.3,0) - 3*min(x2+0.2,0) + 0.5*x3 plus Gaussian noise
(sd 0.05) on 1000 uniform rows; the first half trains, the second half tests.
"""

import argparse
import time

import numpy as np

from aplrkit import EncodedMatrix, Hyperparams, Labels, fit, shape_curve, term_table


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--interaction-level", type=int, default=0)
    p.add_argument("--terms", type=int, default=10, help="number of terms to print")
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    values = rng.uniform(-1, 1, size=(args.rows, 3))
    y = 2 * np.maximum(values[:, 0] - 0.3, 0) - 3 * np.minimum(values[:, 1] + 0.2, 0) + 0.5 * values[:, 2]
    y = y + rng.normal(0, 0.05, args.rows)
    half = args.rows // 2
    names = ("x1", "x2", "x3")

    start = time.perf_counter()
    model = fit(EncodedMatrix(values[:half], names), Labels(y[:half], "real"),
                Hyperparams(max_interaction_level=args.interaction_level))
    elapsed = time.perf_counter() - start

    pred = model.predict(values[half:])
    yt = y[half:]
    r2 = 1 - np.sum((yt - pred) ** 2) / np.sum((yt - yt.mean()) ** 2)
    print(f"fit: {elapsed:.1f} s, {model.submodels[0].steps} steps selected, {len(model.submodels[0].terms)} terms")
    print(f"held-out R2: {r2:.4f}")
    for feature, knot, truth in (("x1", 0.3, (0.0, 2.0)), ("x2", -0.2, (-3.0, 0.0)), ("x3", None, (0.5, 0.5))):
        lo, hi = model.feature_ranges[names.index(feature)]
        knot = (lo + hi) / 2 if knot is None else knot
        slopes = [np.polyfit(g, shape_curve(model, feature, g).effect, 1)[0]
                  for g in (np.linspace(lo, knot, 25), np.linspace(knot, hi, 25))]
        print(f"{feature}: slopes {slopes[0]:+.3f} / {slopes[1]:+.3f} (true {truth[0]:+.1f} / {truth[1]:+.1f})")
    for row in term_table(model).rows[: args.terms + 1]:
        print(f"  {'null' if row.interaction_level is None else row.interaction_level:>4}  {row.expression:<28} {row.coefficient:+.4f}")


if __name__ == "__main__":
    main()
