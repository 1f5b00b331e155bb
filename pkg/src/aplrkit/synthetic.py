"""Simulated survey exports with the same shape as the student-satisfaction data.

Used by tests and scripts when the published survey file is not at hand.
Responses are drawn from a latent satisfaction score that depends on a few
named predictors, so the pipeline has real signal to find.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import DEFAULT_COMPONENTS

LIKERT_PHRASES = ("Strongly disagree", "Disagree", "Neutral", "Agree", "Strongly agree")
MODES = ("Live Online", "Pre-recorded", "Offline", "Flipped")

NAMED_PREDICTORS = (
    "m_timeManage", "m_concentrate", "m_helpful", "m_boring", "m_ta", "m_share",
    "emo_isolated", "emo_relationship", "emo_anx", "cop_creative", "cop_talk",
    "env_cafe", "env_libaray", "env_group", "env_disturb",
)
# linear effects on the latent score, per Likert step
EFFECTS = {
    "m_timeManage": 0.55,
    "m_concentrate": 0.5,
    "m_helpful": 0.35,
    "m_boring": 0.25,
    "emo_isolated": 0.2,
    "cop_creative": -0.2,
}


def survey_schema_dict() -> dict:
    """Encoding section of a run config matching :func:`simulate_survey` output."""
    return {
        "default": "likert5",
        "columns": {
            "student_id": "ignore",
            "mode": {"rule": "one_of_n", "categories": list(MODES)},
            "isPractical": "yes_no",
            "enterDate": {"rule": "one_of_n", "categories": ["before 2020", "2020 or later"]},
        },
    }


def simulate_survey(n: int = 302, seed: int = 0, n_filler: int = 25) -> tuple[list[str], list[list[str]]]:
    """Header and text rows of a simulated export.

    With the default 25 filler questions the encoded design has 47 predictor
    columns: 40 Likert items, four mode indicators, isPractical and two
    enterDate indicators.
    """
    rng = np.random.default_rng(seed)
    predictors = list(NAMED_PREDICTORS) + [f"q_{i:02d}" for i in range(n_filler)]
    likert = {name: rng.choice(5, size=n, p=[0.08, 0.17, 0.3, 0.3, 0.15]) - 2 for name in predictors}
    mode = rng.choice(len(MODES), size=n, p=[0.45, 0.2, 0.23, 0.12])
    practical = rng.random(n) < 0.5
    early = rng.random(n) < 0.4

    score = 1.2 + sum(coef * likert[name] for name, coef in EFFECTS.items())
    score = score + 0.8 * (mode == 2) + 0.35 * np.minimum(likert["m_ta"], 0) * (likert["m_helpful"] != 0)
    score = score + rng.logistic(scale=0.6, size=n)

    header = ["student_id"] + predictors + ["mode", "isPractical", "enterDate"] + [c for c, _ in DEFAULT_COMPONENTS]
    rows = []
    for i in range(n):
        row = [f"S{i:04d}"] + [LIKERT_PHRASES[likert[name][i] + 2] for name in predictors]
        row += [MODES[mode[i]], "Yes" if practical[i] else "No", "before 2020" if early[i] else "2020 or later"]
        for _, polarity in DEFAULT_COMPONENTS:
            level = int(np.clip(np.round(0.9 * score[i] + rng.normal(0, 0.9)), -2, 2))
            if polarity == "negative":
                level = -level
            row.append(LIKERT_PHRASES[level + 2])
        rows.append(row)
    return header, rows


def write_survey(path, n: int = 302, seed: int = 0) -> Path:
    header, rows = simulate_survey(n, seed)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path
