"""Polynomial-truth simulation designs, Monte Carlo prediction error and closed-form AR.

Data model (one dataset):

    Y = b0 + b1 X1 + ... + b10 X10 + a (X1^2 - 1) + sigma * eps,
    X1..X10, eps iid N(0, 1).

The design matrix is ``[1, X1, ..., X10]`` so its population Gram matrix is
the identity.  Three nested models are used throughout: ``P1 = {1, X1}``,
``P2 = {1, X1..X5}`` and ``P3 = {1, X1..X10}``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .criterion import MultiSampleCollection, aggregate_criterion
from .curves import ArCurve
from .errors import NumericalError, SingularDesign
from .regression import DEFAULT_EPS_COND, ModelSubset, RegressionDataset, gram_guard
from .selector import enumerate_candidates, selection_curve

RNG_ALGORITHM = "numpy.random.Philox/SeedSequence(seed, *stream_keys)"

N_COVARIATES = 10
COLUMN_NAMES = ["(Intercept)"] + [f"X{k}" for k in range(1, N_COVARIATES + 1)]

P1 = ModelSubset((0, 1), "p1")
P2 = ModelSubset(tuple(range(6)), "p2")
P3 = ModelSubset(tuple(range(11)), "p3")
POLY_MODELS = {"p1": P1, "p2": P2, "p3": P3}


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k)
    digest = hashlib.sha256(str(k).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``; keys may be ints or strings."""
    ss = np.random.SeedSequence([_key(seed)] + [_key(k) for k in keys])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    ss = np.random.SeedSequence([_key(seed)] + [_key(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class PolyModelParams:
    b: tuple
    a: float
    sigma: float

    def __post_init__(self):
        b = tuple(float(v) for v in self.b)
        if len(b) != N_COVARIATES + 1:
            raise ValueError(f"b must have {N_COVARIATES + 1} entries (b0..b10)")
        if not (self.sigma > 0 and all(map(math.isfinite, b)) and math.isfinite(self.a)):
            raise ValueError("sigma must be positive and all parameters finite")
        object.__setattr__(self, "b", b)


def default_params() -> PolyModelParams:
    """b0 = b1 = 0, b2..b5 = 1.5, b6..b10 = 1, a = 3, sigma = 10."""
    return PolyModelParams((0.0, 0.0) + (1.5,) * 4 + (1.0,) * 5, 3.0, 10.0)


@dataclass(frozen=True)
class PopulationHyperParams:
    """Independent normal coefficient draws per dataset, plus block sizes.

    ``block_sizes`` is a sequence of ``(count, N_j)`` pairs laid out in order.
    """

    mean_b: tuple
    sd_b: tuple
    a: float
    sigma: float
    block_sizes: tuple

    def __post_init__(self):
        if len(self.mean_b) != N_COVARIATES + 1 or len(self.sd_b) != N_COVARIATES + 1:
            raise ValueError("mean_b and sd_b need 11 entries")
        if any(s < 0 for s in self.sd_b):
            raise ValueError("sd_b must be nonnegative")
        object.__setattr__(self, "block_sizes", tuple((int(c), int(n)) for c, n in self.block_sizes))

    @property
    def J(self) -> int:
        return sum(c for c, _ in self.block_sizes)

    @property
    def sizes(self) -> List[int]:
        return [n for c, n in self.block_sizes for _ in range(c)]


def default_population() -> PopulationHyperParams:
    return PopulationHyperParams(
        mean_b=(0.0, 0.0) + (1.5,) * 4 + (1.0,) * 5,
        sd_b=(0.0, 0.0) + (0.1,) * 9,
        a=3.0,
        sigma=10.0,
        block_sizes=((50, 40), (50, 100), (50, 150), (50, 250)),
    )


def _draw_xy(params: PolyModelParams, rows: int, rng: np.random.Generator):
    Z = rng.standard_normal((rows, N_COVARIATES))
    eps = rng.standard_normal(rows)
    X = np.empty((rows, N_COVARIATES + 1))
    X[:, 0] = 1.0
    X[:, 1:] = Z
    y = X @ np.asarray(params.b) + params.a * (Z[:, 0] ** 2 - 1.0) + params.sigma * eps
    return X, y


def gen_poly_dataset(params: PolyModelParams, rows: int, seed: int, id: str = "1") -> RegressionDataset:
    if rows < 1:
        raise ValueError("rows must be >= 1")
    X, y = _draw_xy(params, rows, make_rng(seed, "dataset", id))
    return RegressionDataset(id, X, y, COLUMN_NAMES)


def gen_population(hyper: PopulationHyperParams, seed: int, coef_seed: Optional[int] = None) -> MultiSampleCollection:
    """Draw one coefficient vector per dataset, then one dataset per coefficient vector.

    Coefficients come from ``coef_seed`` (default ``seed``) and data from
    ``seed``, so the coefficients can be held fixed while data are redrawn.
    The draws are stored in ``meta["params"]`` keyed by dataset id.
    """
    J = hyper.J
    coef_rng = make_rng(seed if coef_seed is None else coef_seed, "coefficients")
    draws = coef_rng.normal(np.asarray(hyper.mean_b), np.asarray(hyper.sd_b), size=(J, N_COVARIATES + 1))
    width = len(str(J))
    datasets, truth = [], {}
    for j, rows in enumerate(hyper.sizes):
        ds_id = f"{j + 1:0{width}d}"
        params = PolyModelParams(tuple(draws[j]), hyper.a, hyper.sigma)
        truth[ds_id] = params
        datasets.append(gen_poly_dataset(params, rows, seed, ds_id))
    return MultiSampleCollection(datasets, meta={"params": truth, "seed": seed, "rng": RNG_ALGORITHM})


# ---------------------------------------------------------------- closed forms

def closed_form_curve(params: PolyModelParams, which: str) -> ArCurve:
    """AR curve of model p1, p2 or p3 in closed form (depends on b2..b10, a, sigma only)."""
    b2 = np.asarray(params.b) ** 2
    a2, s2 = params.a**2, params.sigma**2
    if which == "p1":
        S = b2[2:].sum()
        return ArCurve(S + 2 * a2 + s2, 2 * (S + s2) + 12 * a2)
    if which == "p2":
        S = b2[6:].sum()
        return ArCurve(S + 2 * a2 + s2, 6 * (S + s2) + 20 * a2)
    if which == "p3":
        return ArCurve(2 * a2 + s2, 11 * s2 + 30 * a2)
    raise ValueError(f"which must be p1, p2 or p3, got {which!r}")


def ar_closed_form(params: PolyModelParams, which: str, n: float) -> float:
    return closed_form_curve(params, which)(n)


def poly_population_moments(params: PolyModelParams, model: ModelSubset) -> ArCurve:
    """Projection error and tr(V) of any column subset, from first principles.

    With Q = I the projection coefficients are the included b_k and the error
    is e = c + (omitted linear part) + a (X1^2 - 1) + sigma eps, where c = b0
    when the intercept is omitted.  tr(V) = tr(W) = sum_j E[X_j^2 e^2].
    """
    inc = set(model.indices)
    b = np.asarray(params.b)
    c = 0.0 if 0 in inc else b[0]
    omitted = sum(b[k] ** 2 for k in range(1, N_COVARIATES + 1) if k not in inc)
    a, s2 = params.a, params.sigma**2
    limit = c**2 + omitted + 2 * a**2 + s2
    trace = 0.0
    for j in inc:
        if j == 1:
            # E[X1^2 (X1^2-1)^2] = 15 - 6 + 1 = 10, E[X1^2 (X1^2-1)] = 2
            trace += c**2 + omitted + s2 + 10 * a**2 + 4 * c * a
        else:
            trace += limit
    return ArCurve(limit, trace)


def default_curves(params: Optional[PolyModelParams] = None) -> Dict[ModelSubset, ArCurve]:
    params = params or default_params()
    return {m: closed_form_curve(params, label) for label, m in POLY_MODELS.items()}


# ------------------------------------------------------------- Monte Carlo R

@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    replications: int
    seed: int
    failed: int = 0


def mc_prediction_error(
    params: PolyModelParams,
    model: ModelSubset,
    n: int,
    reps: int,
    seed: int,
    test_pairs: int = 1,
    eps_cond: float = DEFAULT_EPS_COND,
) -> McEstimate:
    """Monte Carlo estimate of E(Y - X' beta_hat_n)^2 for a fresh (X, Y).

    Each replication draws its own n-row training sample, fits the model and
    scores ``test_pairs`` fresh observations (one by default).  Replications
    whose training design fails the guard are dropped and counted.
    """
    if reps < 1 or n < 1 or test_pairs < 1:
        raise ValueError("reps, n and test_pairs must be positive")
    cols = list(model.indices)
    losses = []
    failed = 0
    for r in range(reps):
        rng = make_rng(seed, "mc", r)
        X, y = _draw_xy(params, n, rng)
        Xp = X[:, cols]
        if not gram_guard(Xp.T @ Xp / n, n, None, eps_cond).passed:
            failed += 1
            continue
        q, rr = np.linalg.qr(Xp, mode="reduced")
        beta = np.linalg.solve(rr, q.T @ y)
        Xt, yt = _draw_xy(params, test_pairs, rng)
        losses.append(float(np.mean((yt - Xt[:, cols] @ beta) ** 2)))
    if not losses:
        raise SingularDesign("every replication failed the guard")
    arr = np.asarray(losses)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return McEstimate(float(arr.mean()), se, arr.size, seed, failed)


# --------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    """Selection experiment settings.

    ``mode="single"``: one dataset of ``N`` rows per replication drawn with
    ``params``.  ``mode="multi"``: a population drawn with ``hyper`` whose
    coefficients are fixed (seeded by ``coef_seed``) while data are redrawn.
    """

    mode: str = "single"
    n_grid: tuple = (40,)
    candidates: tuple = (P1, P2, P3)
    params: PolyModelParams = field(default_factory=default_params)
    N: int = 40
    hyper: PopulationHyperParams = field(default_factory=default_population)
    corrected: tuple = (False, True)
    coef_seed: Optional[int] = None

    def collection(self, seed: int, rep: int) -> MultiSampleCollection:
        data_seed = derive_seed(seed, "rep", rep)
        if self.mode == "single":
            return MultiSampleCollection([gen_poly_dataset(self.params, self.N, data_seed)])
        if self.mode == "multi":
            coef_seed = self.coef_seed if self.coef_seed is not None else derive_seed(seed, "coef")
            return gen_population(self.hyper, data_seed, coef_seed=coef_seed)
        raise ValueError(f"unknown experiment mode {self.mode!r}")


def selection_probability_experiment(config: ExperimentConfig, reps: int, seed: int) -> List[dict]:
    """Frequency with which each candidate is chosen at each n (with binomial SEs)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    models = enumerate_candidates(list(config.candidates))
    grid = list(config.n_grid)
    counts = {(c, n, m): 0 for c in config.corrected for n in grid for m in models}
    for r in range(reps):
        coll = config.collection(seed, r)
        for corr in config.corrected:
            for res in selection_curve(coll, models, grid, corrected=corr):
                counts[(corr, res.n, res.chosen)] += 1
    rows = []
    for corr in config.corrected:
        for n in grid:
            for m in models:
                f = counts[(corr, n, m)] / reps
                rows.append({"n": n, "model": m.name, "corrected": corr, "frequency": f,
                             "mc_se": math.sqrt(f * (1 - f) / reps)})
    return rows


def criterion_difference_experiment(config: ExperimentConfig, model_a: ModelSubset, model_b: ModelSubset,
                                    reps: int, seed: int) -> Dict[bool, np.ndarray]:
    """Per-replication (limit, trace) of the aggregate criterion difference a - b.

    Returns, for each correction flag, an array of shape ``(reps, 2)`` such
    that the difference at n is ``row[0] + row[1] / n``.  Replications where
    either model is unusable everywhere are filled with NaN.
    """
    out = {c: np.full((reps, 2), np.nan) for c in config.corrected}
    for r in range(reps):
        coll = config.collection(seed, r)
        for corr in config.corrected:
            try:
                parts = [aggregate_criterion(coll, m, 1, corr) for m in (model_a, model_b)]
            except NumericalError:
                continue
            parts = [(p.limit_term, p.trace_v) for p in parts]
            out[corr][r] = (parts[0][0] - parts[1][0], parts[0][1] - parts[1][1])
    return out


def mean_crossing(diff_parts: np.ndarray) -> Optional[float]:
    """n at which the mean of ``limit + trace/n`` over replications is zero."""
    good = diff_parts[~np.isnan(diff_parts).any(axis=1)]
    dl, dt = good.mean(axis=0)
    if dl == 0:
        return None
    n = -dt / dl
    return float(n) if n > 0 else None


def prediction_error_table(params: PolyModelParams, n_grid: Sequence[int], reps: int, seed: int,
                           models: Optional[Dict[str, ModelSubset]] = None, test_pairs: int = 1) -> List[dict]:
    """Monte Carlo R(n, p) beside the closed-form AR(n, p) for the three nested polynomial models."""
    models = models or POLY_MODELS
    rows = []
    for label, m in models.items():
        for n in n_grid:
            est = mc_prediction_error(params, m, n, reps, derive_seed(seed, label, n), test_pairs)
            rows.append({"n": n, "model": label, "R_mc": est.mean, "R_se": est.std_error,
                         "AR": ar_closed_form(params, label, n), "reps": est.replications,
                         "failed": est.failed})
    return rows
