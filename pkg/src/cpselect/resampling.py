"""Bootstrap standard deviations and split cross-validation of prediction error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .criterion import MultiSampleCollection, _mean, aggregate_criterion
from .errors import NoUsableDatasets, NumericalError
from .geno import geno_hat
from .regression import ModelSubset, RegressionDataset, gram_guard
from .simulation import make_rng

STATISTIC_KINDS = ("level", "diff", "geno")


@dataclass(frozen=True)
class Statistic:
    """A collection-level statistic.

    ``level``: the aggregate criterion of ``p``.  ``diff``: aggregate of ``p``
    minus aggregate of ``q``.  ``geno``: the estimated GENO(n; p, q).
    """

    kind: str
    p: ModelSubset
    q: Optional[ModelSubset] = None

    def __post_init__(self):
        if self.kind not in STATISTIC_KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.kind != "level" and self.q is None:
            raise ValueError(f"statistic {self.kind!r} needs a second model")

    @property
    def name(self) -> str:
        if self.kind == "level":
            return f"C[{self.p.name}]"
        if self.kind == "diff":
            return f"C[{self.p.name}]-C[{self.q.name}]"
        return f"GENO[{self.p.name};{self.q.name}]"

    def evaluate(self, collection: MultiSampleCollection, n: int, corrected: bool = False,
                 method: str = "fast") -> float:
        """Value on ``collection``; raises NumericalError when undefined (including infinite GENO)."""
        if self.kind == "level":
            return aggregate_criterion(collection, self.p, n, corrected, method=method).value
        if self.kind == "diff":
            a = aggregate_criterion(collection, self.p, n, corrected, method=method).value
            b = aggregate_criterion(collection, self.q, n, corrected, method=method).value
            return a - b
        g = geno_hat(collection, self.p, self.q, n, corrected, method)
        if g.is_infinite:
            raise NumericalError(f"{self.name} is infinite")
        return g.value


@dataclass
class BootstrapResult:
    statistic_name: str
    point: float
    sd: float
    B: int
    seed: int
    failed_replicates: int
    replicates: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def bootstrap_indices(dataset: RegressionDataset, seed: int, b: int) -> np.ndarray:
    """Row indices of bootstrap replicate ``b`` for ``dataset``."""
    rng = make_rng(seed, "bootstrap", b, dataset.id)
    return rng.integers(0, dataset.N, size=dataset.N)


def bootstrap_collection(collection: MultiSampleCollection, seed: int, b: int,
                         level: str = "rows") -> MultiSampleCollection:
    """Replicate ``b`` of the collection.

    ``rows`` resamples rows within each dataset (every N_j kept);
    ``datasets`` resamples whole datasets, renaming repeats to keep ids unique.
    """
    if level == "rows":
        return collection.replace_datasets([ds.take(bootstrap_indices(ds, seed, b)) for ds in collection.datasets])
    if level == "datasets":
        rng = make_rng(seed, "bootstrap-datasets", b)
        picks = rng.integers(0, len(collection), size=len(collection))
        seen: Dict[str, int] = {}
        out = []
        for k in picks:
            ds = collection.datasets[int(k)]
            seen[ds.id] = seen.get(ds.id, 0) + 1
            out.append(ds.take(np.arange(ds.N), id=f"{ds.id}#{seen[ds.id]}"))
        return collection.replace_datasets(out)
    raise ValueError(f"unknown bootstrap level {level!r}")


def _evaluate_all(collection, statistics, n_values, corrected, method) -> Dict[tuple, Optional[float]]:
    """Every (statistic, n) value on one collection, None where undefined.

    Each model's aggregate is computed once at the first n and moved along the
    grid with ``.at``, which is exact because C is affine in 1/n.
    """
    aggs: Dict[ModelSubset, object] = {}

    def agg(m):
        if m not in aggs:
            try:
                aggs[m] = aggregate_criterion(collection, m, n_values[0], corrected, method=method)
            except NumericalError:
                aggs[m] = None
        return aggs[m]

    out: Dict[tuple, Optional[float]] = {}
    for st in statistics:
        for k, n in enumerate(n_values):
            if st.kind == "geno":
                try:
                    out[(st, n)] = st.evaluate(collection, n, corrected, method)
                except NumericalError:
                    out[(st, n)] = None
                continue
            parts = [agg(m) for m in ((st.p,) if st.kind == "level" else (st.p, st.q))]
            if any(a is None for a in parts):
                out[(st, n)] = None
                continue
            vals = [a.value if k == 0 else a.at(n).value for a in parts]
            out[(st, n)] = vals[0] if st.kind == "level" else vals[0] - vals[1]
    return out


def bootstrap_many(
    collection: MultiSampleCollection,
    statistics: Sequence[Statistic],
    n_values: Sequence[int],
    B: int,
    corrected: bool = False,
    seed: int = 0,
    level: str = "rows",
    method: str = "fast",
) -> Dict[tuple, BootstrapResult]:
    """Bootstrap SDs of several statistics over an n-grid from one set of replicates.

    Returns a result per ``(statistic, n)``.  Each replicate recomputes the
    aggregates from scratch, so usable masks and (when ``corrected``) the
    jackknife correction are redone per replicate.  Replicates where a
    statistic is undefined count as failed for that statistic.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    n_values = list(n_values)
    if not n_values:
        raise ValueError("n_values must not be empty")
    for n in n_values:
        if n < 1:
            raise ValueError("n must be positive")
    point = _evaluate_all(collection, statistics, n_values, corrected, method)
    for key, v in point.items():
        if v is None:
            # surface the underlying error on the original data
            key[0].evaluate(collection, key[1], corrected, method)
    draws: Dict[tuple, List[float]] = {key: [] for key in point}
    for b in range(B):
        rep = bootstrap_collection(collection, seed, b, level)
        for key, v in _evaluate_all(rep, statistics, n_values, corrected, method).items():
            if v is not None:
                draws[key].append(v)
    out = {}
    for (st, n), values in draws.items():
        if len(values) < 2:
            raise NoUsableDatasets(f"{st.name}: only {len(values)} of {B} bootstrap replicates succeeded")
        arr = np.asarray(values)
        m = _mean(values)
        sd = math.sqrt(math.fsum((arr - m) ** 2) / (arr.size - 1))
        out[(st, n)] = BootstrapResult(st.name, point[(st, n)], sd, B, seed, B - arr.size, arr)
    return out


def bootstrap_sd(
    collection: MultiSampleCollection,
    statistic: Statistic,
    n: int,
    B: int,
    corrected: bool = False,
    seed: int = 0,
    level: str = "rows",
    method: str = "fast",
) -> BootstrapResult:
    """Bootstrap standard deviation of ``statistic`` at n (see :func:`bootstrap_many`)."""
    return bootstrap_many(collection, [statistic], [n], B, corrected, seed, level, method)[(statistic, n)]


def bootstrap_table(
    collection: MultiSampleCollection,
    statistics: Sequence[Statistic],
    n_values: Sequence[int],
    B: int,
    corrected: bool = False,
    seed: int = 0,
    level: str = "rows",
) -> List[dict]:
    res = bootstrap_many(collection, statistics, n_values, B, corrected, seed, level)
    rows = []
    for n in n_values:
        for st in statistics:
            r = res[(st, n)]
            rows.append({"n": n, "statistic": r.statistic_name, "point": r.point, "sd": r.sd,
                         "B": B, "failed": r.failed_replicates})
    return rows


@dataclass
class CvResult:
    model: ModelSubset
    n: int
    estimate: float
    reps: int
    datasets_used: int
    dropped_cells: int = 0
    per_dataset: Dict[str, float] = field(default_factory=dict)
    se: float = 0.0


def _cv_cell(Xp, y, n, rng, q_ref, eps_cond, max_retries):
    N = len(y)
    for _ in range(max_retries + 1):
        perm = rng.permutation(N)
        train, test = perm[:n], perm[n:]
        Xt = Xp[train]
        if not gram_guard(Xt.T @ Xt / n, n, q_ref, eps_cond).passed:
            continue
        q, r = np.linalg.qr(Xt, mode="reduced")
        beta = np.linalg.solve(r, q.T @ y[train])
        resid = y[test] - Xp[test] @ beta
        return float(np.mean(resid**2))
    return None


def cv_prediction_error(
    collection: MultiSampleCollection,
    model: ModelSubset,
    n: int,
    reps: int,
    seed: int,
    max_retries: int = 10,
) -> CvResult:
    """Random-split estimate of the dataset-averaged prediction error at n.

    For every dataset with N_j > n and each repetition, n random rows train
    the model and the other N_j - n rows score it.  Test errors are averaged
    over rows, then repetitions, then (with equal weight) datasets.  A split
    whose training design fails the guard is redrawn up to ``max_retries``
    times before the (dataset, repetition) cell is dropped.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be positive")
    cols = list(model.indices)
    q_ref = collection.q_for(model)
    per, dropped = {}, 0
    for ds in collection.datasets:
        if ds.N <= n:
            continue
        model.check_range(ds.d)
        Xp = ds.X[:, cols]
        cells = []
        for rep in range(reps):
            err = _cv_cell(Xp, ds.y, n, make_rng(seed, "cv", ds.id, rep), q_ref, collection.eps_cond, max_retries)
            if err is None:
                dropped += 1
            else:
                cells.append(err)
        if cells:
            per[ds.id] = _mean(cells)
    if not per:
        raise NoUsableDatasets(f"model {model.name}: no dataset has N_j > {n} with a usable training split")
    vals = list(per.values())
    est = _mean(vals)
    se = math.sqrt(math.fsum((v - est) ** 2 for v in vals) / (len(vals) - 1) / len(vals)) if len(vals) > 1 else 0.0
    return CvResult(model, n, est, reps, len(per), dropped, per, se)
