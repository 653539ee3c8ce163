"""Deterministic CSV/JSON artifacts.

Floats are written with 17 significant digits and '.' as decimal mark, so
identical runs give byte-identical files. Every CSV starts with a comment
line carrying the resolved configuration as JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_line(config) -> str:
    return "# config: " + json.dumps(_jsonable(config), sort_keys=True)


def write_csv(path, columns, rows, config) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [config_line(config), ",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    """Returns (config, columns, rows as float array or list of str rows)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    config = json.loads(text[0][len("# config: "):])
    columns = text[1].split(",")
    rows = [line.split(",") for line in text[2:] if line]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    except ValueError:
        data = rows
    return config, columns, data


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _states(prefix, n):
    return [f"{prefix}_{i + 1}" for i in range(n)]


def write_layer(path, traj, config) -> Path:
    n = traj.V.shape[1]
    cols = ["zeta", *_states("V", n), *_states("W", n)]
    return write_csv(path, cols, np.column_stack([traj.zeta, traj.V, traj.W]), config)


def write_curve(path, curve, config) -> Path:
    n = curve.V.shape[1]
    cols = ["tau", *_states("V", n), "omega", "xi", "f", "g"]
    data = np.column_stack([curve.tau, curve.V, curve.omega, curve.xi, curve.f_vals, curve.g_vals])
    return write_csv(path, cols, data, config)


def write_profile(path, profile, config) -> Path:
    n = profile.Q.shape[1]
    return write_csv(path, ["xi", *_states("Q", n)], np.column_stack([profile.xi, profile.Q]), config)


def write_fan(path, fan, config) -> Path:
    n = fan.U_0.size
    cols = ["family", "type", "speed_lo", "speed_hi", *_states("left", n), *_states("right", n)]
    rows = [[p.family, p.type, p.speed_lo, p.speed_hi, *p.left_state, *p.right_state] for p in fan.pieces]
    return write_csv(path, cols, rows, config)


def write_convergence(path, report, config) -> Path:
    cols = ["epsilon", "l1_fan_dist", "sup_inner_dist", "weighted_tail"]
    rows = [[r.epsilon, r.l1_fan_dist, r.sup_inner_dist, r.weighted_tail] for r in report.rows]
    return write_csv(path, cols, rows, config)
