import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aplrkit.basis import BasisFunction, Term, enumerate_candidates, eval_term
from aplrkit.boost import (
    AplrModel,
    Booster,
    Hyperparams,
    boost_step,
    estimate_coefficient,
    fit,
    negative_gradient,
    predict,
)
from aplrkit.dataset import EncodedMatrix, Labels
from aplrkit.errors import ConfigError, DataError, NumericError


def regression_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1, 1, size=(n, 3))
    y = 1.5 * np.maximum(values[:, 0] - 0.2, 0) - values[:, 1] + 0.3 * values[:, 2] * (values[:, 0] > 0)
    y = y + rng.normal(0, 0.05, n)
    return EncodedMatrix(values, ("a", "b", "c")), Labels(y, "real")


def test_negative_gradient_examples():
    np.testing.assert_allclose(negative_gradient("regression", [1.0, 2.0], [0.5, 3.0]), [0.5, -1.0])
    np.testing.assert_allclose(negative_gradient("classification", [1.0, 0.0], [0.0, 0.0]), [0.5, -0.5])
    with pytest.raises(ValueError):
        negative_gradient("poisson", [1.0], [0.0])


def test_estimate_coefficient_hand_example():
    assert estimate_coefficient([1, 2, 3], None, [2, 4, 6], 0.5) == pytest.approx(1.0, abs=1e-15)


def test_estimate_coefficient_ignores_zero_rows():
    # rows where f is zero carry no information about the slope
    assert estimate_coefficient([0, 1, 2], [1, 1, 1], [100.0, 1.0, 2.0], 1.0) == pytest.approx(1.0)


def test_estimate_coefficient_all_zero():
    with pytest.raises(NumericError):
        estimate_coefficient([0.0, 0.0], None, [1.0, 2.0], 0.5)


def test_estimate_coefficient_matches_weighted_lstsq():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        f = rng.normal(size=n)
        f[rng.random(n) < 0.3] = 0.0
        if not f.any():
            f[0] = 1.0
        w = rng.uniform(0.1, 3.0, n)
        u = rng.normal(size=n)
        v = rng.uniform(0.01, 1.0)
        nz = f != 0
        sw = np.sqrt(w[nz])
        beta = np.linalg.lstsq((f[nz] * sw)[:, None], u[nz] * sw, rcond=None)[0][0]
        assert abs(estimate_coefficient(f, w, u, v) - v * beta) <= 1e-12 * max(1.0, abs(v * beta))


def test_hyperparams_validation():
    with pytest.raises(ConfigError):
        Hyperparams(learning_rate=0)
    with pytest.raises(ConfigError):
        Hyperparams(early_stop="patience(5)")
    with pytest.raises(ConfigError):
        Hyperparams.from_dict({"depth": 3})
    assert Hyperparams(early_stop="internal_cv(7)").cv_folds == 7
    assert Hyperparams(early_stop="off").cv_folds is None


def test_constant_target_intercept_only():
    x = EncodedMatrix(np.random.default_rng(0).normal(size=(50, 2)), ("p", "q"))
    model = fit(x, Labels(np.full(50, 3.25), "real"), Hyperparams(boosting_steps=20, early_stop="off"))
    assert model.submodels[0].intercept == pytest.approx(3.25)
    assert model.submodels[0].terms == ()
    np.testing.assert_allclose(model.predict(x), 3.25)


def test_zero_steps_predicts_majority(likert_xy):
    x, y = likert_xy
    model = fit(x, y, Hyperparams(boosting_steps=0))
    majority = 1.0 if y.y.mean() > 0.5 else 0.0
    assert np.all(model.predict(x) == majority)
    assert all(sm.terms == () for sm in model.submodels)


def test_regression_loss_trace_monotone():
    x, y = regression_data()
    b = Booster(x.values, y.y, Hyperparams(boosting_steps=300, max_interaction_level=2, min_observations_in_split=10))
    trace = np.array(b.run(300).loss_trace)
    assert np.all(np.diff(trace) <= 1e-12)


def test_one_step_equals_least_squares_slope():
    rng = np.random.default_rng(11)
    xv = rng.normal(size=80)
    xv -= xv.mean()
    y = 0.7 * xv + rng.normal(0, 0.3, 80)
    y -= y.mean()
    hp = Hyperparams(boosting_steps=1, learning_rate=1.0, early_stop="off")
    b = Booster(xv[:, None], y, hp, bases=[BasisFunction(0, "linear")])
    b.step()
    slope = np.sum(xv * y) / np.sum(xv * xv)
    assert b.state.coefficients[0] == pytest.approx(slope, abs=1e-12)


def test_additive_target_recovered():
    x = np.tile(np.arange(-40, 41) / 40, 5)[:, None]
    y = 2 * np.maximum(x[:, 0], 0)
    model = fit(EncodedMatrix(x, ("x",)), Labels(y, "real"), Hyperparams(boosting_steps=3000, max_interaction_level=0, early_stop="off"))
    assert np.sqrt(np.mean((model.predict(x) - y) ** 2)) < 0.01


def test_exact_hinge_target_recovered():
    # zero is the only admissible split; x = max(x,0) + min(x,0), so the fit may
    # spread over those three bases while its slopes must be exactly 0 and 2
    x = np.repeat([-1.0, 0.0, 1.0], 40)[:, None]
    y = 2 * np.maximum(x[:, 0], 0)
    model = fit(EncodedMatrix(x, ("x",)), Labels(y, "real"), Hyperparams(max_interaction_level=0, early_stop="off"))
    assert np.max(np.abs(model.predict(x) - y)) < 1e-6
    sm = model.submodels[0]
    right = sum(t.coefficient for t in sm.terms if t.base.kind in ("linear", "hinge_pos"))
    left = sum(t.coefficient for t in sm.terms if t.base.kind in ("linear", "hinge_neg"))
    assert abs(right - 2) < 1e-6 and abs(left) < 1e-6
    assert all(t.base.split == 0 for t in sm.terms)


def test_step_on_constant_target():
    b = Booster(np.arange(30.0)[:, None], np.full(30, 4.0), Hyperparams(learning_rate=1.0))
    state = boost_step(b)
    assert state.m == 1 and state.intercept == 4.0
    np.testing.assert_array_equal(state.residuals, 0.0)
    assert state.terms == []


def test_tie_goes_to_lower_predictor():
    rng = np.random.default_rng(1)
    col = rng.normal(size=50)
    values = np.column_stack([col, col])
    b = Booster(values, 3 * col, Hyperparams(max_interaction_level=0))
    boost_step(b)
    (term,) = b.terms()
    assert term.predictor == 0 and term.base.kind == "linear"


def test_reselected_term_accumulates():
    x, y = regression_data()
    b = Booster(x.values, y.y, Hyperparams(max_interaction_level=1, min_observations_in_split=10))
    st_ = b.run(200)
    assert len(set(st_.terms)) == len(st_.terms)
    assert len(st_.terms) < 200


def test_interaction_level_respected():
    x, y = regression_data()
    for level in (0, 1, 2):
        b = Booster(x.values, y.y, Hyperparams(max_interaction_level=level, min_observations_in_split=10))
        b.run(150)
        assert max(t.interaction_level for t in b.terms()) <= level


def reference_fit(values, y, hp, steps):
    """Slow componentwise boosting built on enumerate_candidates, for cross-checking."""
    n = values.shape[0]
    w = np.ones(n)
    v = hp.learning_rate
    intercept = y.mean()
    f = np.full(n, intercept)
    terms: list[Term] = []
    for _ in range(steps):
        delta = v * np.mean(y - f)
        intercept += delta
        f = f + delta
        u = y - f
        best, best_score = None, 0.0
        for cand in enumerate_candidates(values, terms, hp).terms:
            col = eval_term(cand, values)
            den = np.sum(col * col * w)
            score = np.sum(col * w * u) ** 2 / den if den > 0 else 0.0
            if score > best_score:
                best, best_score, best_col = cand, score, col
        if best is None:
            continue
        beta = estimate_coefficient(best_col, w, u, v)
        f = f + beta * best_col
        for i, t in enumerate(terms):
            if t.same_as(best):
                terms[i] = t.with_coefficient(t.coefficient + beta)
                # gated children keep pointing at the old object; relink by key below
                break
        else:
            parent = None if best.parent is None else next(t for t in terms if t.same_as(best.parent))
            terms.append(Term(best.base, parent, beta))
    return intercept, terms


def test_fast_path_matches_candidate_enumeration():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(60, 3))
    y = np.maximum(values[:, 0], 0) * (values[:, 1] > 0.1) + 0.4 * values[:, 2] + rng.normal(0, 0.1, 60)
    hp = Hyperparams(max_interaction_level=2, min_observations_in_split=8)
    b = Booster(values, y, hp)
    b.run(25)
    intercept, ref_terms = reference_fit(values, y, hp, 25)
    fast = b.terms()
    assert b.state.intercept == pytest.approx(intercept, abs=1e-10)
    assert [t.key for t in fast] == [t.key for t in ref_terms]
    np.testing.assert_allclose([t.coefficient for t in fast], [t.coefficient for t in ref_terms], atol=1e-10)


def test_binary_negation_symmetry(likert_xy):
    x, y = likert_xy
    model = fit(x, y, Hyperparams(boosting_steps=150, early_stop="off"))
    neg, pos = model.submodels
    assert neg.intercept == -pos.intercept
    assert len(neg.terms) == len(pos.terms)
    for tn, tp in zip(neg.terms, pos.terms):
        assert tn.same_as(tp) and tn.coefficient == -tp.coefficient
    proba = model.predict_proba(x)
    np.testing.assert_allclose(proba[:, 0], 1 - proba[:, 1], atol=1e-12)


def test_multiclass_one_vs_rest():
    rng = np.random.default_rng(2)
    values = rng.normal(size=(150, 2))
    y = np.digitize(values[:, 0] + 0.3 * rng.normal(size=150), [-0.5, 0.5]).astype(float)
    model = fit(EncodedMatrix(values, ("u", "w")), Labels(y, "multiclass"), Hyperparams(boosting_steps=100, early_stop="internal_cv(3)"))
    assert model.classes == (0.0, 1.0, 2.0)
    assert len(model.submodels) == 3
    assert np.mean(model.predict(values) == y) > 0.7


def test_fit_is_deterministic(likert_xy):
    x, y = likert_xy
    hp = Hyperparams(boosting_steps=120, early_stop="internal_cv(3)")
    assert json.dumps(fit(x, y, hp).to_dict()) == json.dumps(fit(x, y, hp).to_dict())


def test_early_stop_selects_fewer_steps(likert_xy):
    x, y = likert_xy
    model = fit(x, y, Hyperparams(boosting_steps=400, early_stop="internal_cv(3)"))
    assert 0 <= model.submodels[-1].steps <= 400


def test_json_round_trip_bit_exact(tmp_path, likert_xy):
    x, y = likert_xy
    model = fit(x, y, Hyperparams(boosting_steps=150, max_interaction_level=2, early_stop="off"))
    path = tmp_path / "model.json"
    model.save(path)
    loaded = AplrModel.load(path)
    np.testing.assert_array_equal(loaded.predict_logits(x), model.predict_logits(x))
    assert json.dumps(loaded.to_dict()) == json.dumps(model.to_dict())


def test_model_file_rejects_wrong_version(tmp_path, likert_xy):
    x, y = likert_xy
    doc = fit(x, y, Hyperparams(boosting_steps=5, early_stop="off")).to_dict()
    doc["version"] = 99
    with pytest.raises(DataError):
        AplrModel.from_dict(doc)


def test_predict_aligns_columns_by_name(likert_xy):
    x, y = likert_xy
    model = fit(x, y, Hyperparams(boosting_steps=50, early_stop="off"))
    shuffled = EncodedMatrix(x.values[:, ::-1], tuple(reversed(x.column_names)))
    np.testing.assert_array_equal(model.predict_logits(shuffled), model.predict_logits(x))
    with pytest.raises(DataError):
        model.predict(EncodedMatrix(x.values[:, :5], x.column_names[:5]))


def test_predict_output_shapes(likert_xy):
    x, y = likert_xy
    out = predict(fit(x, y, Hyperparams(boosting_steps=30, early_stop="off")), x)
    assert out["logits"].shape == (240, 2)
    assert out["probabilities"].shape == (240, 2)
    assert set(np.unique(out["prediction"])) <= {0.0, 1.0}


def test_class_smaller_than_folds_rejected():
    values = np.arange(20, dtype=float)[:, None]
    y = np.r_[np.zeros(18), np.ones(2)]
    with pytest.raises(DataError):
        fit(EncodedMatrix(values, ("z",)), Labels(y), Hyperparams(early_stop="internal_cv(5)"))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2))
def test_model_is_piecewise_linear(seed, level):
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1, 1, size=(80, 2))
    y = np.abs(values[:, 0]) + values[:, 1] * (values[:, 0] > 0) + rng.normal(0, 0.1, 80)
    model = fit(EncodedMatrix(values, ("s", "t")), Labels(y, "real"),
                Hyperparams(boosting_steps=60, max_interaction_level=level, min_observations_in_split=10, early_stop="off"))
    splits = sorted({t.base.split for t in model.submodels[0].terms if t.predictor == 0 and t.base.kind != "linear"})
    # a gate on a linear term opens and closes at zero
    knots = sorted({-1.0, 0.0, 1.0} | {s for s in splits if -1 < s < 1})
    other = rng.uniform(-1, 1)
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi - lo < 1e-9:
            continue
        pts = np.array([[lo + (hi - lo) * q, other] for q in (0.1, 0.5, 0.9)])
        f = model.predict(pts)
        # three points on one segment are collinear
        assert abs((f[1] - f[0]) - (f[2] - f[1])) <= 1e-9 * max(1.0, np.abs(f).max())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_training_loss_never_increases(seed):
    x, y = regression_data(n=60, seed=seed)
    b = Booster(x.values, y.y, Hyperparams(max_interaction_level=1, min_observations_in_split=5))
    trace = np.array(b.run(60).loss_trace)
    assert np.all(np.diff(trace) <= 1e-12)
