"""Candidate enumeration and argmin selection of a common covariate subset."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Union

from .criterion import AggregateCriterion, MultiSampleCollection, _mean, aggregate_criterion
from .curves import ArCurve
from .errors import NoUsableDatasets, TooManySubsets
from .regression import ModelSubset

MAX_FREE_COLUMNS = 20


@dataclass
class CandidateSet:
    """How the candidate models are specified.

    ``mode`` is one of ``"explicit"`` (use ``models`` as given),
    ``"all_subsets"`` (``forced_in`` plus every subset of ``free``) or
    ``"constrained"`` (``forced_in`` plus every subset of the columns in
    ``range(d)`` that are neither forced in nor forced out).
    """

    mode: str = "explicit"
    models: List[ModelSubset] = field(default_factory=list)
    forced_in: tuple = (0,)
    free: tuple = ()
    forced_out: tuple = ()
    d: Optional[int] = None


@dataclass
class SelectionResult:
    n: int
    chosen: ModelSubset
    values: Dict[ModelSubset, float]
    ties_broken: bool
    aggregates: Dict[ModelSubset, AggregateCriterion] = field(default_factory=dict)
    mask_mismatch: bool = False


def enumerate_candidates(spec: Union[CandidateSet, Sequence[ModelSubset]]) -> List[ModelSubset]:
    if not isinstance(spec, CandidateSet):
        spec = CandidateSet("explicit", list(spec))
    forced = set(spec.forced_in)
    if spec.mode == "explicit":
        models = list(spec.models)
        if not models:
            raise ValueError("explicit candidate list is empty")
        if len(set(models)) != len(models):
            raise ValueError("duplicate models in candidate list")
        for m in models:
            if not forced <= set(m.indices):
                raise ValueError(f"model {m.name} lacks forced-in columns {sorted(forced)}")
        return models
    if spec.mode == "all_subsets":
        free = sorted(set(spec.free) - forced)
    elif spec.mode == "constrained":
        if spec.d is None:
            raise ValueError("constrained mode needs the column count d")
        free = sorted(set(range(spec.d)) - forced - set(spec.forced_out))
    else:
        raise ValueError(f"unknown enumeration mode {spec.mode!r}")
    if set(free) & set(spec.forced_out):
        raise ValueError("a column cannot be both free and forced out")
    if len(free) > MAX_FREE_COLUMNS:
        raise TooManySubsets(f"{len(free)} free columns exceed the 2^{MAX_FREE_COLUMNS} subset cap")
    models = []
    for size in range(len(free) + 1):
        for extra in combinations(free, size):
            idx = tuple(sorted(forced | set(extra)))
            if idx:
                models.append(ModelSubset(idx))
    models.sort(key=ModelSubset.sort_key)
    return models


def _argmin(values: Mapping[ModelSubset, float]):
    best = min(values.values())
    tied = [m for m, v in values.items() if v == best]
    chosen = min(tied, key=ModelSubset.sort_key)
    return chosen, len(tied) > 1


def _restrict(agg: AggregateCriterion, ids) -> AggregateCriterion:
    keep = tuple(c for c in agg.per_dataset if c.dataset_id in ids)
    if not keep:
        raise NoUsableDatasets(f"model {agg.model.name}: common mask is empty")
    dropped = tuple(c.dataset_id for c in agg.per_dataset if c.dataset_id not in ids)
    return AggregateCriterion(agg.model, agg.n, _mean([c.value for c in keep]), keep, agg.corrected,
                              len(keep), agg.excluded + dropped)


def _aggregates(collection, models, n, corrected, strict, method):
    aggs = {m: aggregate_criterion(collection, m, n, corrected, method=method) for m in models}
    masks = [set(a.used_ids) for a in aggs.values()]
    mismatch = any(mk != masks[0] for mk in masks)
    if strict and mismatch:
        common = set.intersection(*masks)
        aggs = {m: _restrict(a, common) for m, a in aggs.items()}
        mismatch = False
    return aggs, mismatch


def _result(n, aggs, mismatch) -> SelectionResult:
    values = {m: a.value for m, a in aggs.items()}
    chosen, tied = _argmin(values)
    return SelectionResult(n, chosen, values, tied, dict(aggs), mismatch)


def select(
    collection: MultiSampleCollection,
    candidates,
    n: int,
    corrected: bool = False,
    strict: bool = False,
    method: str = "fast",
) -> SelectionResult:
    """Choose the candidate minimizing the multi-sample criterion at n.

    Exact ties go to the smallest model, then the lexicographically smallest
    index tuple.  With ``strict`` every model is evaluated on the intersection
    of the candidates' usable masks; otherwise each model uses its own mask
    and ``mask_mismatch`` reports whether those differ.
    """
    models = enumerate_candidates(candidates)
    aggs, mismatch = _aggregates(collection, models, n, corrected, strict, method)
    return _result(n, aggs, mismatch)


def selection_curve(
    collection: MultiSampleCollection,
    candidates,
    n_grid: Sequence[int],
    corrected: bool = False,
    strict: bool = False,
    method: str = "fast",
) -> List[SelectionResult]:
    grid = list(n_grid)
    if not grid:
        raise ValueError("n_grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    models = enumerate_candidates(candidates)
    # per-dataset criteria are affine in 1/n: fit once, re-evaluate along the grid
    base, mismatch = _aggregates(collection, models, grid[0], corrected, strict, method)
    return [_result(n, {m: a.at(n) for m, a in base.items()}, mismatch) for n in grid]


def analytic_argmin(curves: Mapping[ModelSubset, ArCurve], n: float) -> SelectionResult:
    """argmin over models of AR(n) = limit + trace / n, same tie rule as :func:`select`."""
    if not curves:
        raise ValueError("no curves given")
    values = {m: c(n) for m, c in curves.items()}
    chosen, tied = _argmin(values)
    return SelectionResult(n, chosen, values, tied)


def analytic_crossing(curve_a: ArCurve, curve_b: ArCurve) -> Optional[float]:
    """The n > 0 at which two AR curves intersect, or None if they do not."""
    dl = curve_a.limit_term - curve_b.limit_term
    dt = curve_a.trace_term - curve_b.trace_term
    if dl == 0:
        return None
    n = -dt / dl
    return n if n > 0 else None
