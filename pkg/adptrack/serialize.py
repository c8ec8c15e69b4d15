"""Run artifacts: trace.csv, metrics.json and stack.csv."""
from __future__ import annotations

import json
import logging
import pathlib

import numpy as np

from adptrack.sim import Trace
from adptrack.sysid import HistoryStack

log = logging.getLogger("adptrack.serialize")

CSV_FORMAT = "%.17g"

_SCALARS = ("delta_t", "mean_abs_delta_i", "excitation_level", "cbar", "gamma_norm", "V0", "e_norm")


def _names(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(count)]


def trace_columns(trace: Trace) -> list[str]:
    n, m, L, dim = trace.n, trace.m, trace.L, trace.dim
    cols = ["t"]
    cols += _names("e", n) + _names("x", n) + _names("x_d", n)
    cols += _names("u", m) + _names("mu_hat", m)
    cols += _names("W_c", L) + _names("W_a", L)
    cols += [f"theta_hat_{i + 1}_{j + 1}" for i in range(dim) for j in range(n)]
    cols += list(_SCALARS)
    return cols


def trace_matrix(trace: Trace) -> np.ndarray:
    rows = []
    for r in trace.rows:
        rows.append(np.concatenate([
            [r["t"]], r["e"], r["x"], r["x_d"], r["u"], r["mu_hat"],
            r["W_c"], r["W_a"], r["theta_hat"], [r[k] for k in _SCALARS],
        ]))
    width = len(trace_columns(trace))
    return np.array(rows, dtype=float).reshape(len(rows), width)


def write_trace(trace: Trace, path: pathlib.Path) -> None:
    np.savetxt(path, trace_matrix(trace), fmt=CSV_FORMAT, delimiter=",",
               header=",".join(trace_columns(trace)), comments="")
    log.info("Wrote %d trace rows to %s", len(trace), path)


def read_trace(path: pathlib.Path) -> tuple[list[str], np.ndarray]:
    """Header and data of a trace.csv."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_stack(stack: HistoryStack, path: pathlib.Path) -> None:
    n, m = stack.n, stack.m
    header = ["t"] + _names("x", n) + _names("u", m) + _names("xdot_bar", n)
    if len(stack):
        data = np.column_stack([np.array(stack.times), np.array(stack.xs),
                                np.array(stack.us), np.array(stack.xdots)])
    else:
        data = np.zeros((0, len(header)))
    np.savetxt(path, data, fmt=CSV_FORMAT, delimiter=",", header=",".join(header), comments="")


def json_safe(obj):
    """Non-finite floats become "inf", "-inf" or "nan" so the output stays valid JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return "nan" if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps_json(obj, sort_keys: bool = False) -> str:
    return json.dumps(json_safe(obj), indent=2, sort_keys=sort_keys, allow_nan=False)


def write_json(obj: dict, path: pathlib.Path) -> None:
    path.write_text(dumps_json(obj, sort_keys=True) + "\n", encoding="utf-8")
