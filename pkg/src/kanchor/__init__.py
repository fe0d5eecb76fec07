"""Kernel anchor regression: three- and two-stage estimators, baselines, SEM laboratories."""
from .data import ColumnSchema, Dataset, emit_report, load_csv, split_by_group, subsample
from .exceptions import (
    DegenerateBandwidthError,
    EmptyDatasetError,
    IllConditionedError,
    InvalidInputError,
    MissingColumnError,
    SemSpecParseError,
)
from .kernel_models import (
    KernelAnchorRegression,
    KernelIV,
    KernelPartiallingOut,
    KernelRidgeBaseline,
    TwoStageKernelAnchorRegression,
    fit_kar,
    fit_kar2,
    fit_kiv,
    fit_kpa,
    fit_kreg,
    predict,
)
from .kernels import KernelSpec, gram, kernel_eval, median_heuristic, ridge_solve
from .linear import LinearAnchorRegression, fit_linear
from .projection import fit_projection_x, fit_projection_y, fit_projections_joint, project_x, transformed_gram
from .sem import SemSpec, bias_operator, generate, generate_sem, population_h_gamma, true_do
from .splitting import random_split

__version__ = "0.1.0"
