"""Automatic piecewise linear regression and the student-satisfaction pipeline around it."""

__version__ = "0.1.0"

from .basis import BasisFunction, Term, candidate_splits, enumerate_candidates, eval_term
from .boost import AplrModel, Booster, FitState, Hyperparams, boost_step, estimate_coefficient, fit, negative_gradient, predict
from .dataset import (
    EncodedMatrix,
    EncodingSchema,
    Labels,
    TargetSpec,
    build_target,
    encode_predictors,
    load_survey,
    stratified_split,
)
from .evaluation import TuneGrid, auc, classification_metrics, kfold_grid_search
from .interpret import global_importance, local_contributions, shape_curve, term_table
from .smote import SmoteConfig, oversample
