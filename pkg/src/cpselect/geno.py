"""Generalized equivalent number of observations (GENO).

GENO(n; p, q) is the sample size m at which model q reaches the prediction
error that model p attains with n observations:

    m = tr_q / (AR_p(n) - AR_q(n) + tr_q / n),

or +inf when the bracket is not positive (q never catches up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

from .criterion import MultiSampleCollection, aggregate_criterion
from .curves import ArCurve
from .regression import ModelSubset


@dataclass(frozen=True)
class GenoValue:
    """Either a finite sample size or the +inf state (``finite_value is None``)."""

    finite_value: Optional[float]
    n_ref: float
    model_p: Optional[ModelSubset] = None
    model_q: Optional[ModelSubset] = None
    attained_by: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.finite_value is not None:
            object.__setattr__(self, "finite_value", float(self.finite_value))

    @property
    def is_infinite(self) -> bool:
        return self.finite_value is None

    @property
    def value(self) -> float:
        return math.inf if self.finite_value is None else self.finite_value

    def to_text(self, digits: Optional[int] = None) -> str:
        if self.finite_value is None:
            return "inf"
        if digits is None:
            return repr(self.finite_value)
        return f"{self.finite_value:.{digits}f}"

    def __lt__(self, other: "GenoValue") -> bool:
        return self.value < other.value

    def __le__(self, other: "GenoValue") -> bool:
        return self.value <= other.value


def _solve(ar_p_n: float, ar_q_n: float, trace_q: float, n: float) -> Optional[float]:
    denom = ar_p_n - ar_q_n + trace_q / n
    if denom <= 0:
        return None
    return trace_q / denom


def geno_from_curves(curve_p: ArCurve, curve_q: ArCurve, n: float, model_p=None, model_q=None) -> GenoValue:
    """GENO(n; p, q) from two AR curves."""
    if n <= 0:
        raise ValueError("n must be positive")
    if curve_p == curve_q:
        return GenoValue(float(n), n, model_p, model_q)
    return GenoValue(_solve(curve_p(n), curve_q(n), curve_q.trace_term, n), n, model_p, model_q)


def geno_hat(
    collection: MultiSampleCollection,
    model_p: ModelSubset,
    model_q: ModelSubset,
    n: int,
    corrected: bool = False,
    method: str = "fast",
) -> GenoValue:
    """Estimated GENO from the multi-sample criterion.

    Both criteria are averaged over the datasets usable for *both* models.
    The numerator is the averaged tr(V_hat) of q; with ``corrected`` the
    criteria and that trace are jackknife-corrected per dataset (the same
    combiner N*T - (N-1)*mean T_(i) applied to tr(V_hat)).
    """
    if model_p == model_q:
        aggregate_criterion(collection, model_p, n, corrected, method=method)  # raises if unusable
        return GenoValue(float(n), n, model_p, model_q)
    agg_q = aggregate_criterion(collection, model_q, n, corrected, method=method)
    agg_p = aggregate_criterion(collection, model_p, n, corrected, mask=agg_q.used_ids, method=method)
    if agg_p.j_used != agg_q.j_used:
        agg_q = aggregate_criterion(collection, model_q, n, corrected, mask=agg_p.used_ids, method=method)
    # a jackknife-corrected trace can dip below zero; tr(V) itself cannot
    trace_q = max(agg_q.trace_v, 0.0)
    return GenoValue(_solve(agg_p.value, agg_q.value, trace_q, n), n, model_p, model_q)


def _min_of(values: Dict[ModelSubset, GenoValue], model_p, n) -> GenoValue:
    best = min(v.value for v in values.values())
    attained = tuple(sorted((r for r, v in values.items() if v.value == best), key=ModelSubset.sort_key))
    finite = None if math.isinf(best) else best
    return GenoValue(finite, n, model_p, None, attained)


def geno_min(
    collection: MultiSampleCollection,
    model_p: ModelSubset,
    candidates: Sequence[ModelSubset],
    n: int,
    corrected: bool = False,
    method: str = "fast",
) -> GenoValue:
    """min over candidates r of GENO-hat(n; p, r); never exceeds n."""
    if model_p not in candidates:
        raise ValueError("candidates must include model_p")
    values = {r: geno_hat(collection, model_p, r, n, corrected, method) for r in candidates}
    return _min_of(values, model_p, n)


def geno_min_from_curves(curves: Mapping[ModelSubset, ArCurve], model_p: ModelSubset, n: float) -> GenoValue:
    if model_p not in curves:
        raise ValueError("curves must include model_p")
    values = {r: geno_from_curves(curves[model_p], c, n, model_p, r) for r, c in curves.items()}
    return _min_of(values, model_p, n)
