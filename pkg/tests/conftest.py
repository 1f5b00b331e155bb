import json

import numpy as np
import pytest

from aplrkit.dataset import EncodedMatrix, Labels
from aplrkit.synthetic import survey_schema_dict, write_survey


@pytest.fixture(scope="session")
def survey_csv(tmp_path_factory):
    return write_survey(tmp_path_factory.mktemp("survey") / "survey.csv", n=302, seed=0)


@pytest.fixture(scope="session")
def quick_config(survey_csv):
    """Pipeline config on the simulated survey with a short boosting run."""
    path = survey_csv.parent / "quick.json"
    doc = {
        "data": survey_csv.name,
        "encoding": survey_schema_dict(),
        "hyperparams": {"boosting_steps": 200, "early_stop": "internal_cv(3)"},
        "tune": {"grid": {"max_interaction_level": [0, 1], "min_observations_in_split": [20, 100]}, "folds": 3},
    }
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def likert_xy():
    rng = np.random.default_rng(7)
    values = rng.integers(-2, 3, size=(240, 6)).astype(float)
    logit = 0.9 * values[:, 0] + 0.6 * values[:, 1] - 0.4 * values[:, 2] + 0.5 * np.minimum(values[:, 3], 0) * (values[:, 4] != 0)
    y = (rng.random(240) < 1 / (1 + np.exp(-logit))).astype(float)
    x = EncodedMatrix(values, tuple(f"c{j}" for j in range(6)))
    return x, Labels(y)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record a one-line verdict for an acceptance criterion and assert it."""

    def record(number: str, title: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
