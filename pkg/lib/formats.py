"""
On-disk formats: graph CSV, trajectory / derivative CSV, fitted-model JSON
and the tidy result tables. Every decimal is written with 17 significant
digits and parsed back cell by cell with ``float``, so save/load is
lossless.
"""

from __future__ import annotations

import json
import logging
import os
import re
from math import comb
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lib.graph import StateVariableMap, WeightedGraph
from lib.library import build_library
from lib.regression import CoefficientMatrix, FittedModel, SolverConfig
from lib.utils import FLOAT_FORMAT, METRICS_COLUMNS, MISSING, FormatError, ShapeError, SindygError

_log = logging.getLogger(__name__)

_HEADER_RE = re.compile(r"^\s*n\s*=\s*(\d+)\s*,\s*directed\s*=\s*([01])\s*$")
_XY_RE = re.compile(r"^([xy])(\d+)$")
_SLOT_RE = re.compile(r"^s(\d+)_(\d+)$")
_MAX_INFERRED_DEGREE = 8


def _read_csv(path: os.PathLike, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip", skipinitialspace=True, **kwargs)
    except FileNotFoundError:
        raise FormatError("file not found", path)
    except pd.errors.EmptyDataError:
        raise FormatError("file is empty", path)
    except pd.errors.ParserError as e:
        # pandas reports e.g. "Expected 3 fields in line 4, saw 5"
        raise FormatError(f"malformed CSV: {e}", path)


def _to_float_frame(df: pd.DataFrame, path: os.PathLike, first_row: int) -> np.ndarray:
    """Numeric values of ``df``; the first bad cell is reported with its
    1-based file row and column."""
    raw = df.to_numpy(dtype=object)
    try:
        values = raw.astype(float)
    except ValueError:
        values = None
    if values is not None and not np.isnan(values).any():
        return values
    for (r, c), cell in np.ndenumerate(raw):
        if pd.isna(cell):
            raise FormatError("missing value", path, row=first_row + r, column=c + 1)
        try:
            float(cell)
        except (TypeError, ValueError):
            raise FormatError(f"not a number: {cell!r}", path, row=first_row + r, column=c + 1)
    raise FormatError("NaN entries are not allowed", path)


def write_table(rows: Iterable[dict], path: os.PathLike,
                columns: Optional[Sequence[str]] = None) -> Path:
    """Tidy CSV with full-precision floats and ``n/a`` for missing values."""
    df = pd.DataFrame(list(rows), columns=list(columns) if columns is not None else None)
    out = Path(path)
    df.to_csv(out, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING, lineterminator="\n")
    _log.debug("wrote %d row(s) to %s", len(df), out)
    return out


def read_table(path: os.PathLike) -> pd.DataFrame:
    return _read_csv(path, na_values=[MISSING], keep_default_na=False)


# ==================== GRAPH CSV ====================

def save_graph(g: WeightedGraph, path: os.PathLike) -> Path:
    out = Path(path)
    with out.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"n={g.n_nodes},directed={int(g.directed)}\n")
        pd.DataFrame(g.adjacency).to_csv(
            f, header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
    return out


def load_graph(path: os.PathLike) -> WeightedGraph:
    try:
        with open(path, encoding="utf-8") as f:
            header = f.readline()
    except FileNotFoundError:
        raise FormatError("file not found", path)
    match = _HEADER_RE.match(header)
    if not match:
        raise FormatError(f"expected header 'n=<int>,directed=<0|1>', got {header.strip()!r}", path, row=1)
    n, directed = int(match.group(1)), match.group(2) == "1"
    if n < 1:
        raise FormatError("graph needs at least one node", path, row=1)

    df = _read_csv(path, header=None, skiprows=1, dtype=str)
    if df.shape != (n, n):
        raise FormatError(f"adjacency must be {n}x{n} (non-square or wrong size), got {df.shape[0]}x{df.shape[1]}",
                          path)
    adj = _to_float_frame(df, path, first_row=2)
    negative = np.argwhere(adj < 0)
    if negative.size:
        r, c = map(int, negative[0])
        raise FormatError(f"negative weight {adj[r, c]}", path, row=r + 2, column=c + 1)
    try:
        return WeightedGraph(n, adj, directed)
    except SindygError as e:
        raise FormatError(str(e), path)


# ==================== TRAJECTORY CSV ====================

def svmap_from_names(names: Sequence[str], path: Optional[os.PathLike] = None) -> StateVariableMap:
    """Recover the state layout from ``x0,y0,...`` or ``s0_0,s0_1,...`` names."""
    names = list(names)
    if not names:
        raise FormatError("no state columns", path)
    if _XY_RE.match(names[0]):
        svmap = StateVariableMap(max(len(names) // 2, 1), 2)
    else:
        slots = [_SLOT_RE.match(n) for n in names]
        if not all(slots):
            raise FormatError(f"unrecognized state column names {names}", path)
        vpn = max(int(m.group(2)) for m in slots) + 1
        svmap = StateVariableMap(max(len(names) // vpn, 1), vpn)
    if svmap.var_names() != names:
        raise FormatError(f"state columns {names} are not in canonical order {svmap.var_names()}", path)
    return svmap


def save_trajectory(times: np.ndarray, states: np.ndarray, svmap: StateVariableMap,
                    path: os.PathLike, prefix: str = "") -> Path:
    """``t,<prefix>x0,<prefix>y0,...``; prefix ``d`` gives the derivative file."""
    states = np.asarray(states, dtype=float)
    if states.shape != (len(times), svmap.total):
        raise ShapeError(f"states {states.shape} do not match {len(times)} times x {svmap.total} variables")
    df = pd.DataFrame(states, columns=[f"{prefix}{v}" for v in svmap.var_names()])
    df.insert(0, "t", np.asarray(times, dtype=float))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return Path(path)


def save_derivs(times: np.ndarray, derivs: np.ndarray, svmap: StateVariableMap,
                path: os.PathLike) -> Path:
    return save_trajectory(times, derivs, svmap, path, prefix="d")


def load_trajectory(path: os.PathLike, prefix: str = "") -> Tuple[np.ndarray, np.ndarray, StateVariableMap]:
    df = _read_csv(path, dtype=str)
    columns = [str(c).strip() for c in df.columns]
    if not columns or columns[0] != "t":
        raise FormatError(f"first column must be 't', got {columns[:1]}", path, row=1, column=1)
    state_cols = columns[1:]
    if prefix:
        if not all(c.startswith(prefix) for c in state_cols):
            raise FormatError(f"derivative columns must start with {prefix!r}", path, row=1)
        state_cols = [c[len(prefix):] for c in state_cols]
    svmap = svmap_from_names(state_cols, path)
    if len(df) == 0:
        raise FormatError("no samples", path)
    values = _to_float_frame(df, path, first_row=2)
    times = values[:, 0]
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise FormatError("times must be strictly increasing", path, column=1)
    return times, values[:, 1:], svmap


def load_derivs(path: os.PathLike, times: Optional[np.ndarray] = None) -> Tuple[np.ndarray, StateVariableMap]:
    """Derivative file; when ``times`` is given the grids must agree exactly."""
    t, derivs, svmap = load_trajectory(path, prefix="d")
    if times is not None and (len(t) != len(times) or not np.array_equal(t, times)):
        raise FormatError("derivative time grid does not match the trajectory", path, column=1)
    return derivs, svmap


# ==================== MODEL JSON ====================

def save_model(model: FittedModel, path: os.PathLike) -> Path:
    out = Path(path)
    with out.open("w", encoding="utf-8", newline="\n") as f:
        json.dump(model.to_dict(), f, indent=2, allow_nan=False)
        f.write("\n")
    return out


def _infer_degree(n_vars: int, n_terms: int, path) -> int:
    for degree in range(1, _MAX_INFERRED_DEGREE + 1):
        if comb(n_vars + degree, degree) == n_terms:
            return degree
    raise FormatError(f"{n_terms} terms is not a full polynomial library in {n_vars} variables", path)


def load_model(path: os.PathLike) -> FittedModel:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FormatError("file not found", path)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path, row=e.lineno, column=e.colno)
    if not isinstance(data, dict):
        raise FormatError("model file must hold a JSON object", path)
    missing = [k for k in ("var_names", "term_names", "xi", "method") if k not in data]
    if missing:
        raise FormatError(f"missing key(s): {', '.join(missing)}", path)

    var_names = [str(v) for v in data["var_names"]]
    term_names = [str(t) for t in data["term_names"]]
    lib_meta = data.get("library") or {}
    svmap = svmap_from_names(var_names, path)
    if "vars_per_node" in lib_meta and int(lib_meta["vars_per_node"]) != svmap.vars_per_node:
        raise FormatError("library.vars_per_node disagrees with var_names", path)
    degree = int(lib_meta.get("max_degree") or _infer_degree(svmap.total, len(term_names), path))
    library = build_library(svmap, degree)
    if library.names != term_names:
        raise FormatError("term_names do not match the canonical library order", path)

    try:
        xi = np.array(data["xi"], dtype=float)
        coefficients = CoefficientMatrix(xi, tuple(term_names), tuple(var_names))
        config = SolverConfig.from_dict(data.get("config") or {})
    except (TypeError, ValueError) as e:
        raise FormatError(f"bad numeric content: {e}", path)
    except SindygError as e:
        raise FormatError(str(e), path)
    return FittedModel(coefficients, str(data["method"]), config, library)


# ==================== METRICS CSV ====================

def write_metrics(reports: Iterable, path: os.PathLike) -> Path:
    return write_table((r.to_row() for r in reports), path, METRICS_COLUMNS)


def write_lines(lines: List[str], path: os.PathLike) -> Path:
    out = Path(path)
    out.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return out
