"""Random-design Mallows-type criterion, its jackknife correction and multi-sample means.

For a model p fitted on all N rows of a dataset,

    C(n, N) = RSS/N + tr(V_hat) * (1/n + 1/N),

an estimate of the approximate prediction error ``limit + tr(V)/n`` of the
model when its coefficients are estimated from n observations.  Because C is
affine in 1/n, every value here also carries its ``(limit_term, trace_v)``
decomposition and can be re-evaluated at another n with :meth:`at`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .curves import ArCurve
from .errors import DataError, NoUsableDatasets, SingularDesign
from .regression import (
    DEFAULT_EPS_COND,
    ModelSubset,
    RegressionDataset,
    fit_ols,
    guard_passes_batch,
    sandwich_moments,
)


@dataclass(frozen=True)
class CriterionValue:
    """C(n, N) for one (dataset, model) pair.

    ``rss_term`` and ``trace_term`` are the two additive parts of ``value``.
    For jackknife-corrected values ``rss_term`` holds the corrected n-free part
    and ``trace_term`` the corrected trace divided by n.  ``limit_term`` and
    ``trace_v`` give the same value as ``limit_term + trace_v / n``.
    """

    model: ModelSubset
    n: int
    N: int
    rss_term: float
    trace_term: float
    value: float
    corrected: bool
    limit_term: float
    trace_v: float
    dataset_id: str = ""

    def at(self, n: int) -> "CriterionValue":
        _check_n(n)
        if self.corrected:
            return replace(self, n=n, trace_term=self.trace_v / n, value=self.limit_term + self.trace_v / n)
        trace_term = self.trace_v * (1.0 / n + 1.0 / self.N)
        return replace(self, n=n, trace_term=trace_term, value=self.rss_term + trace_term)

    def curve(self) -> ArCurve:
        return ArCurve(self.limit_term, max(self.trace_v, 0.0))


@dataclass
class MultiSampleCollection:
    """A set of regression datasets sharing the same covariate columns.

    ``q_reference`` (the full d x d population Gram matrix) switches every
    guard to simulation mode.  ``jackknife_target`` selects the correction
    used whenever a corrected criterion is requested (see
    :func:`jackknife_criterion`).  ``meta`` carries generator records, e.g.
    per-dataset true coefficients.
    """

    datasets: List[RegressionDataset]
    eps_cond: float = DEFAULT_EPS_COND
    q_reference: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    jackknife_target: str = "criterion"

    def __post_init__(self):
        ids = [ds.id for ds in self.datasets]
        if len(set(ids)) != len(ids):
            raise DataError("dataset ids must be unique")
        if self.datasets:
            d = self.datasets[0].d
            if any(ds.d != d for ds in self.datasets):
                raise DataError("all datasets must have the same number of columns")

    @property
    def ids(self) -> List[str]:
        return [ds.id for ds in self.datasets]

    @property
    def covariate_names(self) -> List[str]:
        return self.datasets[0].covariate_names if self.datasets else []

    def __len__(self):
        return len(self.datasets)

    def get(self, id: str) -> RegressionDataset:
        for ds in self.datasets:
            if ds.id == id:
                return ds
        raise KeyError(id)

    def q_for(self, model: ModelSubset) -> Optional[np.ndarray]:
        if self.q_reference is None:
            return None
        idx = list(model.indices)
        return np.asarray(self.q_reference)[np.ix_(idx, idx)]

    def replace_datasets(self, datasets: List[RegressionDataset]) -> "MultiSampleCollection":
        return MultiSampleCollection(datasets, self.eps_cond, self.q_reference, self.meta, self.jackknife_target)

    def usable_mask(self, model: ModelSubset, corrected: bool = False) -> List[str]:
        """Ids of datasets on which the model's (corrected) criterion is defined."""
        ok = []
        for ds in self.datasets:
            try:
                dataset_curve(ds, model, corrected, q_reference=self.q_for(model), eps_cond=self.eps_cond)
            except SingularDesign:
                continue
            ok.append(ds.id)
        return ok


@dataclass(frozen=True)
class AggregateCriterion:
    model: ModelSubset
    n: int
    value: float
    per_dataset: tuple
    corrected: bool
    j_used: int
    excluded: tuple = ()

    @property
    def limit_term(self) -> float:
        return _mean([c.limit_term for c in self.per_dataset])

    @property
    def trace_v(self) -> float:
        return _mean([c.trace_v for c in self.per_dataset])

    @property
    def used_ids(self) -> tuple:
        return tuple(c.dataset_id for c in self.per_dataset)

    def at(self, n: int) -> "AggregateCriterion":
        per = tuple(c.at(n) for c in self.per_dataset)
        return AggregateCriterion(self.model, n, _mean([c.value for c in per]), per, self.corrected,
                                  self.j_used, self.excluded)

    def curve(self) -> ArCurve:
        return ArCurve(self.limit_term, max(self.trace_v, 0.0))


def _check_n(n):
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")


def _mean(values: Sequence[float]) -> float:
    # fsum is exactly rounded, so the mean does not depend on summation order
    return math.fsum(values) / len(values)


def _uncorrected(model, n, N, rss, trv) -> CriterionValue:
    trace_term = trv * (1.0 / n + 1.0 / N)
    return CriterionValue(model, n, N, rss, trace_term, rss + trace_term, False, rss + trv / N, trv)


def criterion_c(
    dataset: RegressionDataset,
    model: ModelSubset,
    n: int,
    q_reference: Optional[np.ndarray] = None,
    eps_cond: float = DEFAULT_EPS_COND,
) -> CriterionValue:
    """C(n, N) = RSS/N + tr(V_hat)(1/n + 1/N) computed on all N rows."""
    _check_n(n)
    fit = fit_ols(dataset, model, q_reference, eps_cond)
    sm = sandwich_moments(dataset, model, fit)
    return _uncorrected(model, n, dataset.N, fit.rss_over_N, sm.trace_V)


def jackknife_combine(full: float, leave_one_out: Sequence[float]) -> float:
    """Bias-corrected estimate N*T - (N-1)*mean(T_(i))."""
    loo = np.asarray(leave_one_out, dtype=float)
    N = loo.shape[0]
    return N * full - (N - 1) * _mean(loo.tolist())


def _loo_parts_exact(dataset, model, q_reference, eps_cond):
    rss, trv = [], []
    for i in range(dataset.N):
        reduced = dataset.take(np.delete(np.arange(dataset.N), i))
        fit = fit_ols(reduced, model, q_reference, eps_cond)
        rss.append(fit.rss_over_N)
        trv.append(sandwich_moments(reduced, model, fit).trace_V)
    return np.array(rss), np.array(trv)


def loo_parts_fast(Xp: np.ndarray, y: np.ndarray, q_reference=None, eps_cond=DEFAULT_EPS_COND):
    """Leave-one-out RSS/(N-1) and tr(V_hat) for every deleted row at once.

    The deleted-row coefficients come from the rank-one downdate
    ``beta_(i) = beta - A^{-1} x_i e_i / (1 - h_ii)`` with ``A = X'X``; the
    residuals, RSS and W are then evaluated on the reduced sample.  The
    leverages use the thin QR factor, so ``A^{-1}`` is never formed.
    """
    N, k = Xp.shape
    q, r = np.linalg.qr(Xp, mode="reduced")
    beta = np.linalg.solve(r, q.T @ y)
    e = y - Xp @ beta
    H = q @ q.T
    h = np.diag(H).copy()
    one_minus = 1.0 - h
    if np.any(one_minus <= 1e-12):
        raise SingularDesign("a leave-one-out design is singular (leverage 1)")

    A = Xp.T @ Xp
    grams = (A[None, :, :] - Xp[:, :, None] * Xp[:, None, :]) / (N - 1)
    if not np.all(guard_passes_batch(grams, N - 1, q_reference, eps_cond)):
        raise SingularDesign("a leave-one-out design fails the guard")

    scale = e / one_minus
    R = e[None, :] + H * scale[:, None]  # R[i, k]: residual of row k with row i deleted
    lev = h[None, :] + H**2 / one_minus[:, None]  # x_k' (A - x_i x_i')^{-1} x_k
    np.fill_diagonal(R, 0.0)
    R2 = R**2
    rss = R2.sum(axis=1) / (N - 1)
    trv = (R2 * lev).sum(axis=1)
    return rss, trv


def _jackknife_from_parts(model, n, N, rss, trv, loo_rss, loo_trv, target="criterion") -> CriterionValue:
    trace = jackknife_combine(trv, loo_trv)
    if target == "criterion":
        limit = jackknife_combine(rss + trv / N, loo_rss + loo_trv / (N - 1))
    elif target == "trace":
        limit = rss + trace / N
    else:
        raise ValueError(f"unknown jackknife target {target!r}")
    return CriterionValue(model, n, N, limit, trace / n, limit + trace / n, True, limit, trace)


def jackknife_criterion(
    dataset: RegressionDataset,
    model: ModelSubset,
    n: int,
    method: str = "exact",
    q_reference: Optional[np.ndarray] = None,
    eps_cond: float = DEFAULT_EPS_COND,
    target: str = "criterion",
) -> CriterionValue:
    """Jackknife bias-corrected criterion N*C - (N-1)*mean_i C_(i).

    Each C_(i) is the criterion on the dataset with row i deleted, at the same
    n.  ``method="exact"`` refits every reduced sample; ``method="fast"`` uses
    the rank-one downdate in :func:`loo_parts_fast` and gives the same result
    up to rounding.

    ``target="trace"`` is an alternative that jackknifes only tr(V_hat) and
    plugs it into C with the uncorrected RSS.  ``trace_v`` is the jackknifed
    trace in both cases.
    """
    _check_n(n)
    N, k = dataset.N, len(model)
    if N < k + 2:
        raise SingularDesign(f"dataset {dataset.id}: jackknife needs N >= |p| + 2, got N = {N}")
    full = criterion_c(dataset, model, n, q_reference, eps_cond)
    if method == "exact":
        loo_rss, loo_trv = _loo_parts_exact(dataset, model, q_reference, eps_cond)
    elif method == "fast":
        try:
            loo_rss, loo_trv = loo_parts_fast(dataset.design(model), dataset.y, q_reference, eps_cond)
        except SingularDesign as exc:
            raise SingularDesign(f"dataset {dataset.id}, model {model.name}: {exc}") from None
    else:
        raise ValueError(f"unknown jackknife method {method!r}")
    return _jackknife_from_parts(model, n, N, full.rss_term, full.trace_v, loo_rss, loo_trv, target)


def dataset_curve(
    dataset: RegressionDataset,
    model: ModelSubset,
    corrected: bool,
    n: int = 1,
    method: str = "fast",
    q_reference: Optional[np.ndarray] = None,
    eps_cond: float = DEFAULT_EPS_COND,
    target: str = "criterion",
) -> CriterionValue:
    if corrected:
        value = jackknife_criterion(dataset, model, n, method, q_reference, eps_cond, target)
    else:
        value = criterion_c(dataset, model, n, q_reference, eps_cond)
    return replace(value, dataset_id=dataset.id)


def aggregate_criterion(
    collection: MultiSampleCollection,
    model: ModelSubset,
    n: int,
    corrected: bool = False,
    mask: Optional[Sequence[str]] = None,
    method: str = "fast",
) -> AggregateCriterion:
    """Unweighted mean of per-dataset criteria over the model's usable datasets.

    Datasets where the model's design fails the guard (or, when corrected,
    any leave-one-out design fails) are left out and listed in ``excluded``.
    ``mask`` restricts the candidates to the given ids.
    """
    _check_n(n)
    allowed = None if mask is None else set(mask)
    per, excluded = [], []
    for ds in collection.datasets:
        if allowed is not None and ds.id not in allowed:
            continue
        try:
            per.append(dataset_curve(ds, model, corrected, n, method, collection.q_for(model),
                                     collection.eps_cond, collection.jackknife_target))
        except SingularDesign:
            excluded.append(ds.id)
    if not per:
        raise NoUsableDatasets(f"model {model.name}: no usable datasets")
    value = _mean([c.value for c in per])
    return AggregateCriterion(model, n, value, tuple(per), corrected, len(per), tuple(excluded))
