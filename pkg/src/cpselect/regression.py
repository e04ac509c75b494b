"""Least squares on a covariate subset, sandwich moments and the singularity guard."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, SingularDesign

DEFAULT_EPS_COND = 1e-10


@dataclass(frozen=True)
class ModelSubset:
    """Sorted, duplicate-free tuple of design-column indices.

    ``label`` is cosmetic (used in output tables) and does not take part in
    equality or hashing.
    """

    indices: tuple
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("a model must contain at least one column")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate column indices in {idx}")
        if min(idx) < 0:
            raise ValueError(f"negative column index in {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @classmethod
    def of(cls, indices: Iterable[int], label: Optional[str] = None) -> "ModelSubset":
        return cls(tuple(indices), label)

    def __len__(self):
        return len(self.indices)

    @property
    def name(self) -> str:
        if self.label is not None:
            return self.label
        return "{" + ",".join(str(i) for i in self.indices) + "}"

    def sort_key(self):
        """Parsimony first, then lexicographic indices."""
        return (len(self.indices), self.indices)

    def check_range(self, d: int) -> None:
        if self.indices[-1] >= d:
            raise ValueError(f"model {self.name} references column {self.indices[-1]} but d = {d}")


@dataclass
class RegressionDataset:
    """One regression sample: design matrix (column 0 the constant) and response."""

    id: str
    X: np.ndarray
    y: np.ndarray
    covariate_names: list = None
    intercept: bool = True

    def __post_init__(self):
        self.id = str(self.id)
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.ndim != 2:
            raise DataError(f"dataset {self.id}: X must be 2-dimensional")
        N, d = self.X.shape
        if N < 1:
            raise DataError(f"dataset {self.id}: no rows")
        if self.y.shape[0] != N:
            raise DataError(f"dataset {self.id}: X has {N} rows but y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError(f"dataset {self.id}: NaN or Inf entries")
        if self.intercept and d > 0 and not np.all(self.X[:, 0] == 1.0):
            raise DataError(f"dataset {self.id}: column 0 is not identically 1")
        if self.covariate_names is None:
            first = ["(Intercept)"] if self.intercept else ["x0"]
            self.covariate_names = first + [f"x{k}" for k in range(1, d)]
        self.covariate_names = list(self.covariate_names)
        if len(self.covariate_names) != d:
            raise DataError(f"dataset {self.id}: {d} columns but {len(self.covariate_names)} names")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def design(self, model: ModelSubset) -> np.ndarray:
        model.check_range(self.d)
        return self.X[:, list(model.indices)]

    def take(self, rows, id: Optional[str] = None) -> "RegressionDataset":
        """Row subset (or resample) of this dataset."""
        rows = np.asarray(rows)
        return RegressionDataset(
            self.id if id is None else id,
            self.X[rows],
            self.y[rows],
            self.covariate_names,
            self.intercept,
        )


@dataclass(frozen=True)
class GuardStatus:
    invertible: bool
    min_eigenvalue: float
    condition_threshold_passed: bool

    @property
    def passed(self) -> bool:
        return self.invertible and self.condition_threshold_passed


@dataclass
class FitResult:
    beta_hat: np.ndarray
    residuals: np.ndarray
    rss_over_N: float
    guard: GuardStatus


@dataclass
class SandwichMoments:
    Q_hat: np.ndarray
    W_hat: np.ndarray
    V_hat: np.ndarray
    trace_V: float


def gram_guard(gram: np.ndarray, rows: int, q_reference=None, eps_cond=DEFAULT_EPS_COND) -> GuardStatus:
    """Guard predicate on an already-scaled Gram matrix ``X'X/rows``."""
    k = gram.shape[0]
    eig = np.linalg.eigvalsh(gram)
    lo, hi = float(eig[0]), float(eig[-1])
    # numerical rank test; exact collinearity leaves lo at rounding level
    invertible = rows >= k and hi > 0 and lo > k * np.finfo(float).eps * hi
    if q_reference is not None:
        q_min = float(np.linalg.eigvalsh(np.asarray(q_reference, dtype=float))[0])
        threshold = lo >= 0.5 * q_min
    else:
        threshold = hi > 0 and lo >= eps_cond * hi
    return GuardStatus(bool(invertible), lo, bool(threshold))


def guard_passes_batch(grams: np.ndarray, rows: int, q_reference=None, eps_cond=DEFAULT_EPS_COND) -> np.ndarray:
    """Vectorized :func:`gram_guard` ``passed`` flag over a stack of Gram matrices."""
    k = grams.shape[-1]
    eig = np.linalg.eigvalsh(grams)
    lo, hi = eig[..., 0], eig[..., -1]
    ok = (rows >= k) & (hi > 0) & (lo > k * np.finfo(float).eps * hi)
    if q_reference is not None:
        q_min = float(np.linalg.eigvalsh(np.asarray(q_reference, dtype=float))[0])
        return ok & (lo >= 0.5 * q_min)
    return ok & (lo >= eps_cond * hi)


def guard_check(
    dataset: RegressionDataset,
    model: ModelSubset,
    q_reference: Optional[np.ndarray] = None,
    eps_cond: float = DEFAULT_EPS_COND,
) -> GuardStatus:
    """Check whether ``X'X/N`` for the model's columns is safely invertible.

    With ``q_reference`` (the population Gram matrix, known in simulations) the
    test is ``lambda_min(X'X/N) >= lambda_min(Q)/2``; otherwise a relative
    condition test ``lambda_min >= eps_cond * lambda_max`` is used.
    """
    Xp = dataset.design(model)
    N = Xp.shape[0]
    return gram_guard(Xp.T @ Xp / N, N, q_reference, eps_cond)


def fit_ols(
    dataset: RegressionDataset,
    model: ModelSubset,
    q_reference: Optional[np.ndarray] = None,
    eps_cond: float = DEFAULT_EPS_COND,
) -> FitResult:
    """Least squares fit of ``y`` on the model's columns via a thin QR factorization.

    Raises
    ------
    SingularDesign
        If there are fewer rows than columns or the guard fails.
    """
    Xp = dataset.design(model)
    N, k = Xp.shape
    if N < k:
        raise SingularDesign(f"dataset {dataset.id}: N = {N} < |p| = {k} for model {model.name}")
    guard = guard_check(dataset, model, q_reference, eps_cond)
    if not guard.passed:
        raise SingularDesign(
            f"dataset {dataset.id}: guard failed for model {model.name} "
            f"(lambda_min = {guard.min_eigenvalue:.3g})"
        )
    q, r = np.linalg.qr(Xp, mode="reduced")
    beta = solve_triangular(r, q.T @ dataset.y)
    resid = dataset.y - Xp @ beta
    return FitResult(beta, resid, float(resid @ resid) / N, guard)


def sandwich_moments(dataset: RegressionDataset, model: ModelSubset, fit: FitResult) -> SandwichMoments:
    """Q = X'X/N, W = sum x x' e^2 / N, V = W Q^{-1} and tr(V)."""
    Xp = dataset.design(model)
    N = Xp.shape[0]
    e2 = fit.residuals**2
    Q = Xp.T @ Xp / N
    W = (Xp * e2[:, None]).T @ Xp / N
    try:
        # V = W Q^{-1}  <=>  V' = Q^{-1} W  (both symmetric)
        V = np.linalg.solve(Q, W).T
    except np.linalg.LinAlgError as exc:
        raise SingularDesign(f"dataset {dataset.id}: Q_hat singular for model {model.name}") from exc
    return SandwichMoments(Q, W, V, float(np.trace(V)))


def resolve_names(names: Sequence[str], covariate_names: Sequence[str], intercept: bool = True,
                  label: Optional[str] = None) -> ModelSubset:
    """Map covariate names to a ModelSubset; the intercept column is added when enabled."""
    lookup = {name: i for i, name in enumerate(covariate_names)}
    idx = {0} if intercept else set()
    for name in names:
        if name not in lookup:
            raise DataError(f"unknown covariate {name!r}; available: {list(covariate_names)}")
        idx.add(lookup[name])
    return ModelSubset(tuple(idx), label)
