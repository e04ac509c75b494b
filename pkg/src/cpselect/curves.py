"""Approximate prediction-error curves AR(n) = limit + trace / n."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ArCurve:
    """``limit_term`` is the n-free projection error, ``trace_term`` the tr(V) coefficient of 1/n."""

    limit_term: float
    trace_term: float

    def __post_init__(self):
        object.__setattr__(self, "limit_term", float(self.limit_term))
        object.__setattr__(self, "trace_term", float(self.trace_term))
        if self.trace_term < 0:
            raise ValueError(f"trace_term must be nonnegative, got {self.trace_term}")

    def __call__(self, n: float) -> float:
        return self.limit_term + self.trace_term / n


def ar_from_moments(limit_term: float, trace_term: float, n: float) -> float:
    return ArCurve(limit_term, trace_term)(n)
