"""bilopt: bi-level automated model discovery for cross-project defect
prediction. An upper-level Tabu search selects a (transfer learner,
classifier) combination while a nested TPE run tunes its hyper-parameters,
all under a wall-clock or evaluation budget, maximizing AUC.
"""

from .engine import (
    BudgetConfig,
    ModelRecommendation,
    optimize_bilevel,
    optimize_single_level,
    repeat_runs,
)
from .pipeline import CpdpTask, auc, evaluate, load_dataset_dir, make_task, split_task
from .space import (
    Combination,
    ConfigSpace,
    ParamSpec,
    Portfolio,
    load_portfolio,
    neighborhood,
    sample_uniform,
    space_filling_sample,
    validate_config,
)
from .stats import RankTable, SampleSet, a12, scott_knott, wilcoxon_signed_rank
from .tpe import LowerBudget, run_tpe

__version__ = "0.1.0"

__all__ = [
    "BudgetConfig",
    "Combination",
    "ConfigSpace",
    "CpdpTask",
    "LowerBudget",
    "ModelRecommendation",
    "ParamSpec",
    "Portfolio",
    "RankTable",
    "SampleSet",
    "a12",
    "auc",
    "evaluate",
    "load_dataset_dir",
    "load_portfolio",
    "make_task",
    "neighborhood",
    "optimize_bilevel",
    "optimize_single_level",
    "repeat_runs",
    "run_tpe",
    "sample_uniform",
    "scott_knott",
    "space_filling_sample",
    "split_task",
    "validate_config",
    "wilcoxon_signed_rank",
]
