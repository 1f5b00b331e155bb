import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aplrkit.basis import eval_term
from aplrkit.boost import Hyperparams, fit
from aplrkit.dataset import EncodedMatrix, Labels
from aplrkit.errors import DataError
from aplrkit.interpret import global_importance, local_contributions, shape_curve, term_table


@pytest.fixture(scope="module")
def binary_model():
    rng = np.random.default_rng(7)
    values = rng.integers(-2, 3, size=(240, 6)).astype(float)
    logit = 0.9 * values[:, 0] + 0.6 * values[:, 1] - 0.4 * values[:, 2]
    y = (rng.random(240) < 1 / (1 + np.exp(-logit))).astype(float)
    x = EncodedMatrix(values, tuple(f"c{j}" for j in range(6)))
    return fit(x, Labels(y), Hyperparams(boosting_steps=200, max_interaction_level=2, early_stop="off")), x


def test_term_table_layout(binary_model):
    model, _ = binary_model
    table = term_table(model)
    assert table.rows[0].expression == "Intercept" and table.rows[0].interaction_level is None
    assert table.intercept == model.submodels[-1].intercept
    assert len(table.rows) == len(model.submodels[-1].terms) + 1


def test_term_table_expressions_parse_back(binary_model):
    model, x = binary_model
    table = term_table(model)
    rebuilt = table.parse(model.feature_names)
    for orig, back in zip(model.submodels[-1].terms, rebuilt):
        assert orig.same_as(back)
        np.testing.assert_array_equal(eval_term(orig, x.values), eval_term(back, x.values))


def test_negative_class_table_is_negated(binary_model):
    model, _ = binary_model
    pos, neg = term_table(model, 1.0), term_table(model, 0.0)
    assert [r.expression for r in pos.rows] == [r.expression for r in neg.rows]
    assert all(a.coefficient == -b.coefficient for a, b in zip(pos.rows, neg.rows))


def test_additivity_every_row(binary_model):
    model, x = binary_model
    for i in range(x.n_rows):
        for label in (0.0, 1.0):
            exp = local_contributions(model, x.take([i]), label, row_id=i)
            assert abs(exp.intercept + exp.contributions.sum() - exp.logit) <= 1e-12


def test_local_defaults_to_predicted_class(binary_model):
    model, x = binary_model
    exp = local_contributions(model, x.take([3]))
    assert exp.label == exp.predicted == model.predict(x.take([3]))[0]
    assert exp.probability >= 0.5
    ranked = exp.ranked()
    assert [abs(c) for _, _, c in ranked] == sorted((abs(c) for _, _, c in ranked), reverse=True)


def test_local_rejects_several_rows(binary_model):
    model, x = binary_model
    with pytest.raises(DataError):
        local_contributions(model, x.take([0, 1]))


def test_global_importance_ranks_strong_features_first(binary_model):
    model, x = binary_model
    ranked = global_importance(model, x).ranked()
    assert {ranked[0][0], ranked[1][0]} == {"c0", "c1"}
    assert all(v >= 0 for _, v in ranked)


def test_global_importance_is_contribution_std():
    # a single linear term b*x has importance |b| * std(x)
    values = np.linspace(-1, 1, 101)[:, None]
    y = 3.0 * values[:, 0]
    model = fit(EncodedMatrix(values, ("x",)), Labels(y, "real"), Hyperparams(boosting_steps=1, learning_rate=1.0, early_stop="off"))
    (term,) = model.submodels[0].terms
    assert term.base.kind == "linear"
    assert global_importance(model, values)["x"] == pytest.approx(abs(term.coefficient) * values.std(), rel=1e-12)


def test_shape_curve_matches_ungated_terms(binary_model):
    model, _ = binary_model
    grid = np.linspace(-2, 2, 9)
    curve = shape_curve(model, "c0", grid)
    sm = model.submodels[-1]
    expected = sum(t.coefficient * t.base(grid) for t in sm.terms if t.predictor == 0 and t.parent is None)
    np.testing.assert_allclose(curve.effect, expected, atol=1e-12)


def test_shape_curve_range_checks(binary_model):
    model, _ = binary_model
    with pytest.raises(ValueError):
        shape_curve(model, "c0", [-3.0, 0.0])
    with pytest.raises(KeyError):
        shape_curve(model, "nope", [0.0])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_additivity_property(seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(70, 3))
    y = (values[:, 0] + values[:, 1] * (values[:, 2] > 0) + rng.normal(0, 0.5, 70) > 0).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    model = fit(EncodedMatrix(values, ("p", "q", "r")), Labels(y),
                Hyperparams(boosting_steps=40, max_interaction_level=2, min_observations_in_split=5, early_stop="off"))
    for i in range(0, 70, 7):
        exp = local_contributions(model, values[i])
        assert abs(exp.intercept + exp.contributions.sum() - exp.logit) <= 1e-12
