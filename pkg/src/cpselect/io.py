"""CSV ingestion of grouped regression data, candidate specs and long-format tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .criterion import MultiSampleCollection
from .errors import DataError, EmptyFile, MissingColumn, NonNumericCell
from .geno import GenoValue
from .regression import DEFAULT_EPS_COND, ModelSubset, RegressionDataset, resolve_names
from .selector import CandidateSet

INTERCEPT_NAME = "(Intercept)"
LONG_COLUMNS = ["experiment", "n", "model", "metric", "value", "se_or_sd", "j_used", "flags"]


@dataclass
class LoadReport:
    rows: int
    datasets: int
    dropped: List[Tuple[str, int]] = field(default_factory=list)


def _parse_cell(text: str, column: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise NonNumericCell(column, line, text) from None
    if not math.isfinite(v):
        raise NonNumericCell(column, line, text)
    return v


def load_collection(
    path: Union[str, Path],
    id_column: str = "id",
    response_column: str = "y",
    covariates: Optional[Sequence[str]] = None,
    min_size: int = 1,
    eps_cond: float = DEFAULT_EPS_COND,
) -> Tuple[MultiSampleCollection, LoadReport]:
    """Read a long CSV (one row per observation) into one dataset per id.

    ``covariates`` defaults to every column other than the id and response.
    Column 0 of each design is the intercept.  Datasets with fewer than
    ``min_size`` rows are dropped and listed in the report.  Row numbers in
    errors are file line numbers (the header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        for col in (id_column, response_column):
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
        if covariates is None:
            covariates = [h for h in header if h not in (id_column, response_column)]
        for col in covariates:
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
        pos = {h: i for i, h in enumerate(header)}
        id_pos = pos[id_column]
        cols = [response_column] + list(covariates)
        groups: Dict[str, List[List[float]]] = {}
        n_rows = 0
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {line} has {len(rec)} fields, header has {len(header)}")
            values = [_parse_cell(rec[pos[c]].strip(), c, line) for c in cols]
            groups.setdefault(rec[id_pos].strip(), []).append(values)
            n_rows += 1
    if n_rows == 0:
        raise EmptyFile(f"{path}: no data rows")
    names = [INTERCEPT_NAME] + list(covariates)
    datasets, dropped = [], []
    for gid, rows in groups.items():
        if len(rows) < min_size:
            dropped.append((gid, len(rows)))
            continue
        arr = np.asarray(rows, dtype=float)
        X = np.column_stack([np.ones(len(arr)), arr[:, 1:]])
        datasets.append(RegressionDataset(gid, X, arr[:, 0], names))
    if not datasets:
        raise EmptyFile(f"{path}: every dataset has fewer than {min_size} rows")
    coll = MultiSampleCollection(datasets, eps_cond)
    return coll, LoadReport(n_rows, len(datasets), dropped)


def write_collection(collection: MultiSampleCollection, path: Union[str, Path], id_column: str = "id",
                     response_column: str = "y") -> None:
    """Inverse of :func:`load_collection`; floats are written with ``repr`` so they reload exactly."""
    names = collection.covariate_names[1:]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, response_column] + list(names))
        for ds in collection.datasets:
            for i in range(ds.N):
                w.writerow([ds.id, repr(float(ds.y[i]))] + [repr(float(v)) for v in ds.X[i, 1:]])


# ---------------------------------------------------------------- candidates

def model_label(model: ModelSubset, covariate_names: Sequence[str]) -> str:
    if model.label is not None:
        return model.label
    names = [covariate_names[i] for i in model.indices if i != 0]
    return "+".join(names) if names else INTERCEPT_NAME


def _explicit_model(item, covariate_names) -> ModelSubset:
    if isinstance(item, dict):
        label = item.get("label")
        names = item.get("covariates", [])
    else:
        label, names = None, item
    m = resolve_names(names, covariate_names)
    return ModelSubset(m.indices, label or model_label(m, covariate_names))


def parse_candidates(spec, covariate_names: Sequence[str]) -> CandidateSet:
    """Candidate spec (decoded JSON) to a :class:`CandidateSet`, resolving covariate names.

    Accepted forms: a list of models, each a list of covariate names or
    ``{"label": ..., "covariates": [...]}``; or an object with ``mode`` of
    ``explicit`` (``models``), ``all_subsets`` (``free``, optional
    ``forced_in``) or ``constrained`` (optional ``forced_in``/``forced_out``).
    The intercept is always forced in.
    """
    if isinstance(spec, list):
        spec = {"mode": "explicit", "models": spec}
    if not isinstance(spec, dict):
        raise ValueError("candidate spec must be a JSON list or object")
    mode = spec.get("mode", "explicit")
    d = len(covariate_names)
    if mode == "explicit":
        models = [_explicit_model(it, covariate_names) for it in spec.get("models", [])]
        return CandidateSet("explicit", models, d=d)
    forced_in = resolve_names(spec.get("forced_in", []), covariate_names).indices
    if mode == "all_subsets":
        free = spec.get("free", list(covariate_names[1:]))
        return CandidateSet("all_subsets", forced_in=forced_in,
                            free=resolve_names(free, covariate_names, intercept=False).indices, d=d)
    if mode == "constrained":
        out = spec.get("forced_out", [])
        forced_out = resolve_names(out, covariate_names, intercept=False).indices if out else ()
        return CandidateSet("constrained", forced_in=forced_in, forced_out=forced_out, d=d)
    raise ValueError(f"unknown candidate mode {mode!r}")


def read_candidates(source: Optional[str], covariate_names: Sequence[str]) -> CandidateSet:
    """``source`` is a JSON file path or an inline JSON document; None means all subsets."""
    if source is None:
        return parse_candidates({"mode": "all_subsets"}, covariate_names)
    text = source.strip()
    if not text.startswith(("[", "{")):
        text = Path(source).read_text()
    return parse_candidates(json.loads(text), covariate_names)


# ---------------------------------------------------------------- tables

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, GenoValue):
        return v.to_text()
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def long_row(experiment, n, model, metric, value, se_or_sd=None, j_used=None, flags="") -> dict:
    return {"experiment": experiment, "n": n, "model": model, "metric": metric, "value": value,
            "se_or_sd": se_or_sd, "j_used": j_used, "flags": flags}


def write_table(rows: Iterable[dict], out: TextIO, columns: Sequence[str] = LONG_COLUMNS) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])


def table_text(rows: Iterable[dict], columns: Sequence[str] = LONG_COLUMNS) -> str:
    buf = io.StringIO()
    write_table(rows, buf, columns)
    return buf.getvalue()


def wide_table(rows: Sequence[dict], metric: str, digits: int = 2) -> Tuple[List[str], List[dict]]:
    """Pivot long rows of one metric to ``n`` by model, cells ``value (sd)`` when an sd is present."""
    rows = [r for r in rows if r["metric"] == metric]
    tags = {_variant(r) for r in rows}
    models: List[str] = []
    cells: Dict[object, Dict[str, str]] = {}
    for r in rows:
        col = r["model"] if len(tags) < 2 else f"{r['model']} {_variant(r)}"
        if col not in models:
            models.append(col)
        v, s = r["value"], r.get("se_or_sd")
        text = v.to_text(digits) if isinstance(v, GenoValue) else f"{v:.{digits}f}"
        if s is not None:
            text += f" ({s:.{digits}f})"
        cells.setdefault(r["n"], {})[col] = text
    columns = ["n"] + models
    return columns, [dict(n=n, **c) for n, c in cells.items()]


def _variant(row: dict) -> str:
    for tag in str(row.get("flags") or "").split(";"):
        if tag in ("corrected", "uncorrected"):
            return tag
    return ""


def write_metadata(path: Union[str, Path], meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    if isinstance(o, ModelSubset):
        return {"indices": list(o.indices), "label": o.label}
    if hasattr(o, "__dataclass_fields__"):
        return {k: getattr(o, k) for k in o.__dataclass_fields__}
    return str(o)
