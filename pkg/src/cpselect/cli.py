"""Batch command line: ``cpselect {fit,select,curve,geno,simulate,bootstrap,cv}``.

Every command writes a long-format CSV (``--out`` or stdout).  With ``--out``
a ``<out>.meta.json`` sidecar records the seed, version, an echo of the
arguments, usable dataset counts per model and guard drops.
Exit codes: 0 ok, 2 usage, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .criterion import dataset_curve
from .curves import ArCurve
from .errors import CpSelectError, DataError, NumericalError, SingularDesign
from .geno import geno_from_curves, geno_hat, geno_min, geno_min_from_curves
from .io import (
    load_collection,
    long_row,
    model_label,
    read_candidates,
    table_text,
    wide_table,
    write_collection,
    write_metadata,
)
from .regression import DEFAULT_EPS_COND, ModelSubset
from .resampling import Statistic, bootstrap_many, cv_prediction_error
from .selector import enumerate_candidates, select, selection_curve
from .simulation import (
    P1,
    P2,
    RNG_ALGORITHM,
    ExperimentConfig,
    PolyModelParams,
    PopulationHyperParams,
    criterion_difference_experiment,
    mean_crossing,
    gen_population,
    default_curves,
    default_params,
    default_population,
    poly_population_moments,
    prediction_error_table,
    selection_probability_experiment,
)

EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "fig5", "population")
DEFAULT_GRID = tuple(range(30, 251, 10))


class UsageError(CpSelectError):
    exit_code = 2


# ------------------------------------------------------------ argument types

def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def int_grid(text: str) -> List[int]:
    """``30,40,50`` or ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] < 1:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}; use start:stop:step")
        grid = list(range(parts[0], parts[1] + 1, parts[2]))
    else:
        grid = [int(p) for p in text.split(",") if p.strip()]
    if not grid or any(g < 1 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise argparse.ArgumentTypeError(f"grid must be nonempty, positive and strictly increasing: {text!r}")
    return grid


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpselect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", help="output CSV (default stdout); a .meta.json sidecar is written next to it")
    out.add_argument("--wide", action="store_true", help="wide n-by-model layout instead of long format")
    out.add_argument("--seed", type=int, default=0)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="long CSV, one row per observation")
    data.add_argument("--id-column", default="id")
    data.add_argument("--response", default="y")
    data.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
    data.add_argument("--min-size", type=positive_int, default=1)
    data.add_argument("--eps-cond", type=positive_float, default=DEFAULT_EPS_COND)
    data.add_argument("--candidates", help="JSON file or inline JSON; default all subsets")

    corr = argparse.ArgumentParser(add_help=False)
    g = corr.add_mutually_exclusive_group()
    g.add_argument("--corrected", dest="corrected", action="store_true", default=True)
    g.add_argument("--uncorrected", dest="corrected", action="store_false")
    corr.add_argument("--strict-mask", action="store_true", help="compare all models on the common usable mask")

    p = sub.add_parser("fit", parents=[out, data, corr], help="per-dataset criterion components")
    p.add_argument("--n", type=positive_int, help="prediction sample size (default: each dataset's N)")

    p = sub.add_parser("select", parents=[out, data, corr], help="choose a common model at n")
    p.add_argument("--n", type=positive_int, required=True)

    p = sub.add_parser("curve", parents=[out, data, corr], help="aggregate criteria along an n grid")
    p.add_argument("--n-grid", type=int_grid, required=True)

    p = sub.add_parser("geno", parents=[out, data, corr], help="(estimated) GENO(n; p, q)")
    p.add_argument("--analytic", choices=["eq18"], help="use the closed-form polynomial-design curves")
    p.add_argument("--config", help="JSON with b, a, sigma for --analytic")
    p.add_argument("--p", required=True, help="model label")
    p.add_argument("--q", help="model label (omit for the minimum over candidates)")
    ng = p.add_mutually_exclusive_group(required=True)
    ng.add_argument("--n", type=positive_int)
    ng.add_argument("--n-grid", type=int_grid)

    p = sub.add_parser("simulate", parents=[out], help="simulation experiments")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--reps", type=positive_int, default=100)
    p.add_argument("--n-grid", type=int_grid, default=list(DEFAULT_GRID))
    p.add_argument("--test-pairs", type=positive_int, default=1, help="test pairs per replication (fig1)")
    p.add_argument("--config", help="JSON overriding params, hyper, N or coef_seed")

    p = sub.add_parser("bootstrap", parents=[out, data, corr], help="bootstrap SDs of criteria")
    ng = p.add_mutually_exclusive_group(required=True)
    ng.add_argument("--n", type=positive_int)
    ng.add_argument("--n-grid", type=int_grid)
    p.add_argument("--B", type=positive_int, default=200)
    p.add_argument("--statistic", action="append", default=None,
                   help="level:P, diff:P,Q or geno:P,Q by model label (repeatable; default level of each candidate)")
    p.add_argument("--level", choices=["rows", "datasets"], default="rows")
    p.add_argument("--cv-reps", type=positive_int, help="also report CV estimates with this many splits")

    p = sub.add_parser("cv", parents=[out, data], help="cross-validated prediction error")
    ng = p.add_mutually_exclusive_group(required=True)
    ng.add_argument("--n", type=positive_int)
    ng.add_argument("--n-grid", type=int_grid)
    p.add_argument("--reps", type=positive_int, default=100)
    p.add_argument("--max-retries", type=int, default=10)
    return parser


# ------------------------------------------------------------ helpers

class Run:
    """Accumulates output rows and metadata for one invocation."""

    def __init__(self, args):
        self.args = args
        self.rows: List[dict] = []
        self.meta: dict = {
            "command": args.command,
            "version": __version__,
            "seed": args.seed,
            "rng": RNG_ALGORITHM,
            "config": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
            "j_used": {},
            "guard_drops": {},
            "notes": [],
        }

    def add(self, *a, **kw):
        self.rows.append(long_row(*a, **kw))


def _grid(args) -> List[int]:
    if getattr(args, "n_grid", None):
        return list(args.n_grid)
    return [args.n]


def _load(args, run: Run):
    if not args.data:
        raise UsageError("--data is required for this command")
    covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    try:
        coll, report = load_collection(args.data, args.id_column, args.response, covs, args.min_size, args.eps_cond)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read {args.data}: {exc.strerror}") from None
    run.meta["load"] = {"rows": report.rows, "datasets": report.datasets,
                        "dropped_small": [{"id": i, "rows": r} for i, r in report.dropped]}
    return coll


def _candidates(args, coll) -> List[ModelSubset]:
    try:
        spec = read_candidates(args.candidates, coll.covariate_names)
        models = enumerate_candidates(spec)
    except (ValueError, OSError, DataError) as exc:
        raise UsageError(f"bad --candidates: {exc}") from None
    names = coll.covariate_names
    return [ModelSubset(m.indices, model_label(m, names)) for m in models]


def _by_label(models: Sequence[ModelSubset], label: str) -> ModelSubset:
    for m in models:
        if m.name == label:
            return m
    raise UsageError(f"unknown model label {label!r}; candidates: {[m.name for m in models]}")


def _flags(*parts) -> str:
    return ";".join(p for p in parts if p)


def _record_aggs(run: Run, aggs) -> None:
    for m, a in aggs.items():
        run.meta["j_used"][m.name] = a.j_used
        if a.excluded:
            run.meta["guard_drops"][m.name] = list(a.excluded)


def _selection_rows(run: Run, experiment: str, res, corrected: bool) -> None:
    flag_c = "corrected" if corrected else "uncorrected"
    for m, a in res.aggregates.items():
        run.add(experiment, res.n, m.name, "C", a.value, None, a.j_used,
                _flags(flag_c, "mask_mismatch" if res.mask_mismatch else ""))
    chosen = res.aggregates[res.chosen]
    run.add(experiment, res.n, res.chosen.name, "chosen", chosen.value, None, chosen.j_used,
            _flags(flag_c, "ties_broken" if res.ties_broken else ""))


def _load_json(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad --config {path}: {exc}") from None


def _params_from(cfg: dict) -> PolyModelParams:
    base = default_params()
    p = cfg.get("params", cfg)
    return PolyModelParams(tuple(p.get("b", base.b)), float(p.get("a", base.a)), float(p.get("sigma", base.sigma)))


def _hyper_from(cfg: dict) -> PopulationHyperParams:
    base = default_population()
    h = cfg.get("hyper", {})
    return PopulationHyperParams(
        tuple(h.get("mean_b", base.mean_b)), tuple(h.get("sd_b", base.sd_b)), float(h.get("a", base.a)),
        float(h.get("sigma", base.sigma)), tuple(tuple(x) for x in h.get("block_sizes", base.block_sizes)))


# ------------------------------------------------------------ commands

def cmd_fit(run: Run) -> None:
    args = run.args
    coll = _load(args, run)
    models = _candidates(args, coll)
    for m in models:
        for ds in coll.datasets:
            n = args.n or ds.N
            flag_ds = f"dataset={ds.id}"
            try:
                cv = dataset_curve(ds, m, False, n, q_reference=coll.q_for(m), eps_cond=coll.eps_cond)
            except SingularDesign:
                run.meta["guard_drops"].setdefault(m.name, []).append(ds.id)
                run.add("fit", n, m.name, "C", None, None, None, _flags(flag_ds, "singular"))
                continue
            run.add("fit", n, m.name, "rss_over_N", cv.rss_term, None, None, flag_ds)
            run.add("fit", n, m.name, "trace_V", cv.trace_v, None, None, flag_ds)
            run.add("fit", n, m.name, "C", cv.value, None, None, flag_ds)
            if args.corrected:
                try:
                    jk = dataset_curve(ds, m, True, n, q_reference=coll.q_for(m), eps_cond=coll.eps_cond,
                                       target=coll.jackknife_target)
                    run.add("fit", n, m.name, "C_corrected", jk.value, None, None, flag_ds)
                except SingularDesign:
                    run.add("fit", n, m.name, "C_corrected", None, None, None, _flags(flag_ds, "loo_singular"))


def cmd_select(run: Run) -> None:
    args = run.args
    coll = _load(args, run)
    models = _candidates(args, coll)
    res = select(coll, models, args.n, args.corrected, args.strict_mask)
    _record_aggs(run, res.aggregates)
    _selection_rows(run, "select", res, args.corrected)


def cmd_curve(run: Run) -> None:
    args = run.args
    coll = _load(args, run)
    models = _candidates(args, coll)
    results = selection_curve(coll, models, args.n_grid, args.corrected, args.strict_mask)
    _record_aggs(run, results[0].aggregates)
    for res in results:
        _selection_rows(run, "curve", res, args.corrected)


def cmd_geno(run: Run) -> None:
    args = run.args
    grid = _grid(args)
    if args.analytic:
        params = _params_from(_load_json(args.config))
        curves = default_curves(params)
        models = list(curves)
        run.meta["notes"].append("analytic closed-form curves of the polynomial design")
        p = _by_label(models, args.p)
        q = _by_label(models, args.q) if args.q else None
        for n in grid:
            if q is not None:
                g = geno_from_curves(curves[p], curves[q], n, p, q)
                run.add("geno", n, f"{p.name};{q.name}", "GENO", g)
            else:
                g = geno_min_from_curves(curves, p, n)
                run.add("geno", n, f"{p.name};min", "GENO", g, None, None,
                        _flags("attained_by=" + ",".join(m.name for m in g.attained_by)))
        return
    coll = _load(args, run)
    models = _candidates(args, coll)
    p = _by_label(models, args.p)
    q = _by_label(models, args.q) if args.q else None
    flag_c = "corrected" if args.corrected else "uncorrected"
    if args.corrected:
        run.meta["notes"].append("corrected GENO jackknifes the averaged tr(V_hat) of q with the same combiner")
    for n in grid:
        if q is not None:
            g = geno_hat(coll, p, q, n, args.corrected)
            run.add("geno", n, f"{p.name};{q.name}", "GENO", g, None, None, flag_c)
        else:
            g = geno_min(coll, p, models, n, args.corrected)
            run.add("geno", n, f"{p.name};min", "GENO", g, None, None,
                    _flags(flag_c, "attained_by=" + ",".join(m.name for m in g.attained_by)))


def _difference_rows(run: Run, experiment: str, parts: Dict[bool, np.ndarray], grid, truth_curve) -> None:
    for corr, arr in parts.items():
        flag_c = "corrected" if corr else "uncorrected"
        good = arr[~np.isnan(arr).any(axis=1)]
        for n in grid:
            vals = good[:, 0] + good[:, 1] / n
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
            run.add(experiment, n, "p1-p2", "mean_diff", float(vals.mean()), se, None, flag_c)
            q25, med, q75 = np.percentile(vals, [25, 50, 75])
            run.add(experiment, n, "p1-p2", "q25", float(q25), None, None, flag_c)
            run.add(experiment, n, "p1-p2", "median", float(med), None, None, flag_c)
            run.add(experiment, n, "p1-p2", "q75", float(q75), None, None, flag_c)
        run.add(experiment, None, "p1-p2", "crossing", mean_crossing(arr), None, None, flag_c)
    for n in grid:
        run.add(experiment, n, "p1-p2", "AR_diff", truth_curve(n), None, None, "analytic")


def cmd_simulate(run: Run) -> None:
    args = run.args
    cfg = _load_json(args.config)
    params = _params_from(cfg)
    hyper = _hyper_from(cfg)
    grid = args.n_grid
    exp = args.experiment
    run.meta["notes"].append("independent training samples per (n, replication)")
    if exp == "fig1":
        for r in prediction_error_table(params, grid, args.reps, args.seed, test_pairs=args.test_pairs):
            run.add("fig1", r["n"], r["model"], "R", r["R_mc"], r["R_se"], None, f"failed={r['failed']}")
            run.add("fig1", r["n"], r["model"], "AR", r["AR"], None, None, "analytic")
        return
    single = exp in ("fig2", "fig3")
    config = ExperimentConfig(mode="single" if single else "multi", n_grid=tuple(grid), params=params,
                              N=int(cfg.get("N", 40)), hyper=hyper, coef_seed=cfg.get("coef_seed"))
    if exp == "population":
        if not args.out:
            raise UsageError("simulate --experiment population needs --out")
        coll = gen_population(hyper, args.seed, cfg.get("coef_seed"))
        write_collection(coll, args.out)
        run.meta["coefficients"] = {k: list(v.b) for k, v in coll.meta["params"].items()}
        run.rows = None
        return
    if exp in ("fig3", "fig5"):
        for r in selection_probability_experiment(config, args.reps, args.seed):
            run.add(exp, r["n"], r["model"], "P_select", r["frequency"], r["mc_se"], None,
                    "corrected" if r["corrected"] else "uncorrected")
        return
    parts = criterion_difference_experiment(config, P1, P2, args.reps, args.seed)
    if single:
        c1, c2 = (default_curves(params)[m] for m in (P1, P2))
    else:
        # coefficients are fixed across replications, so replication 0 carries them all
        truths = list(config.collection(args.seed, 0).meta["params"].values())
        c1 = _mean_curve([poly_population_moments(t, P1) for t in truths])
        c2 = _mean_curve([poly_population_moments(t, P2) for t in truths])
    _difference_rows(run, exp, parts, grid, lambda n: c1(n) - c2(n))


def _mean_curve(curves):
    return ArCurve(float(np.mean([c.limit_term for c in curves])), float(np.mean([c.trace_term for c in curves])))


def _parse_statistic(text: str, models) -> Statistic:
    kind, _, rest = text.partition(":")
    labels = [s.strip() for s in rest.split(",") if s.strip()]
    if kind not in ("level", "diff", "geno") or len(labels) != (1 if kind == "level" else 2):
        raise UsageError(f"bad --statistic {text!r}; use level:P, diff:P,Q or geno:P,Q")
    ms = [_by_label(models, lab) for lab in labels]
    return Statistic(kind, ms[0], ms[1] if len(ms) > 1 else None)


def cmd_bootstrap(run: Run) -> None:
    args = run.args
    coll = _load(args, run)
    models = _candidates(args, coll)
    stats = ([_parse_statistic(s, models) for s in args.statistic] if args.statistic
             else [Statistic("level", m) for m in models])
    flag_c = "corrected" if args.corrected else "uncorrected"
    run.meta["bootstrap_unit"] = args.level
    grid = _grid(args)
    results = bootstrap_many(coll, stats, grid, args.B, args.corrected, args.seed, args.level)
    for n in grid:
        cv_cache = {}
        for st in stats:
            res = results[(st, n)]
            run.add("bootstrap", n, st.name, "C", res.point, res.sd, None,
                    _flags(flag_c, f"B={args.B}", f"failed={res.failed_replicates}"))
            if args.cv_reps and st.kind in ("level", "diff"):
                vals = []
                for m in (st.p, st.q) if st.kind == "diff" else (st.p,):
                    if m not in cv_cache:
                        try:
                            cv_cache[m] = cv_prediction_error(coll, m, n, args.cv_reps, args.seed)
                        except NumericalError:
                            cv_cache[m] = None
                    vals.append(cv_cache[m])
                if all(v is not None for v in vals):
                    est = vals[0].estimate - (vals[1].estimate if len(vals) > 1 else 0.0)
                    run.add("bootstrap", n, st.name, "CV", est, None, vals[0].datasets_used, f"reps={args.cv_reps}")


def cmd_cv(run: Run) -> None:
    args = run.args
    coll = _load(args, run)
    models = _candidates(args, coll)
    for n in _grid(args):
        for m in models:
            res = cv_prediction_error(coll, m, n, args.reps, args.seed, args.max_retries)
            run.add("cv", n, m.name, "CV", res.estimate, res.se, res.datasets_used, f"dropped={res.dropped_cells}")
            run.meta["j_used"][f"{m.name}@{n}"] = res.datasets_used


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "curve": cmd_curve,
    "geno": cmd_geno,
    "simulate": cmd_simulate,
    "bootstrap": cmd_bootstrap,
    "cv": cmd_cv,
}

WIDE_METRIC = {"select": "C", "curve": "C", "geno": "GENO", "bootstrap": "C", "cv": "CV", "fit": "C",
               "fig1": "R", "fig2": "mean_diff", "fig3": "P_select", "fig4": "mean_diff", "fig5": "P_select"}


def _render(run: Run) -> str:
    args = run.args
    if not args.wide:
        return table_text(run.rows)
    key = args.experiment if args.command == "simulate" else args.command
    columns, rows = wide_table(run.rows, WIDE_METRIC[key])
    if args.command == "bootstrap" and any(r["metric"] == "CV" for r in run.rows):
        _, cv_rows = wide_table(run.rows, "CV")
        extra = {r["n"]: r for r in cv_rows}
        cv_cols = [c for c in (cv_rows[0] if cv_rows else {}) if c != "n"]
        columns = columns + [f"CV[{c}]" for c in cv_cols]
        for r in rows:
            for c in cv_cols:
                r[f"CV[{c}]"] = extra.get(r["n"], {}).get(c, "")
    return table_text(rows, columns)


def _error_line(exc: BaseException, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)}, sort_keys=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(args)
    try:
        COMMANDS[args.command](run)
    except CpSelectError as exc:
        print(_error_line(exc, exc.exit_code), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(_error_line(exc, 2), file=sys.stderr)
        return 2
    if run.rows is not None:
        text = _render(run)
        if args.out:
            Path(args.out).write_text(text)
        else:
            try:
                sys.stdout.write(text)
                sys.stdout.flush()
            except BrokenPipeError:
                sys.stderr.close()
    if args.out:
        write_metadata(str(args.out) + ".meta.json", run.meta)
    return 0


if __name__ == "__main__":
    sys.exit(main())
