"""Common covariate-subset selection across many random-design regression datasets."""

from .criterion import (
    AggregateCriterion,
    CriterionValue,
    MultiSampleCollection,
    aggregate_criterion,
    criterion_c,
    jackknife_combine,
    jackknife_criterion,
)
from .curves import ArCurve, ar_from_moments
from .errors import CpSelectError, DataError, NoUsableDatasets, NumericalError, SingularDesign, TooManySubsets
from .geno import GenoValue, geno_from_curves, geno_hat, geno_min, geno_min_from_curves
from .regression import (
    FitResult,
    GuardStatus,
    ModelSubset,
    RegressionDataset,
    SandwichMoments,
    fit_ols,
    guard_check,
    sandwich_moments,
)
from .selector import CandidateSet, SelectionResult, analytic_argmin, enumerate_candidates, select, selection_curve

__version__ = "0.1.0"

__all__ = [
    "AggregateCriterion",
    "ArCurve",
    "CandidateSet",
    "CpSelectError",
    "CriterionValue",
    "DataError",
    "FitResult",
    "GenoValue",
    "GuardStatus",
    "ModelSubset",
    "MultiSampleCollection",
    "NoUsableDatasets",
    "NumericalError",
    "RegressionDataset",
    "SandwichMoments",
    "SelectionResult",
    "SingularDesign",
    "TooManySubsets",
    "aggregate_criterion",
    "analytic_argmin",
    "ar_from_moments",
    "criterion_c",
    "enumerate_candidates",
    "fit_ols",
    "geno_from_curves",
    "geno_hat",
    "geno_min",
    "geno_min_from_curves",
    "guard_check",
    "jackknife_combine",
    "jackknife_criterion",
    "sandwich_moments",
    "select",
    "selection_curve",
]
