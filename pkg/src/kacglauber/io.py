"""Delimited and JSON artifacts.

Paths and control fields travel as CSV with one row per (time, color):
``t, color, v0, ..., v{M^d-1}`` with cell values flattened in C order.
Reports are JSON with sorted keys and no timestamps, so identical runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grids import PathGrid, PotentialGrid


def _grid_rows(times: np.ndarray, fields: np.ndarray):
    n_colors = fields.shape[1]
    flat = fields.reshape(fields.shape[0], n_colors, -1)
    for k, t in enumerate(times):
        for i in range(n_colors):
            yield [f"{t:.17g}", str(i)] + [f"{v:.17g}" for v in flat[k, i]]


def write_grid_csv(fname, times: np.ndarray, fields: np.ndarray) -> None:
    n_cells = int(np.prod(fields.shape[2:]))
    header = ["t", "color"] + [f"v{j}" for j in range(n_cells)]
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(_grid_rows(times, fields))


def _read_grid_csv(fname, d: int) -> tuple[np.ndarray, np.ndarray]:
    with open(fname, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["t", "color"]:
        raise ConfigError(f"{fname}: expected a 't,color,v...' header")
    body = rows[1:]
    times = sorted({float(r[0]) for r in body})
    colors = sorted({int(r[1]) for r in body})
    n_cells = len(rows[0]) - 2
    M = round(n_cells ** (1.0 / d))
    if M**d != n_cells:
        raise ConfigError(f"{fname}: {n_cells} cells is not a d={d} grid")
    fields = np.empty((len(times), len(colors)) + (M,) * d)
    t_index = {t: k for k, t in enumerate(times)}
    for r in body:
        k = t_index[float(r[0])]
        i = int(r[1])
        fields[k, i] = np.array([float(x) for x in r[2:]]).reshape((M,) * d)
    return np.array(times), fields


def read_path_csv(fname, colors: tuple[tuple[float, float], ...], d: int) -> PathGrid:
    times, fields = _read_grid_csv(fname, d)
    if fields.shape[1] != len(colors):
        raise ConfigError(f"{fname}: color count does not match the model")
    return PathGrid(times=times, fields=fields, colors=colors)


def write_path_csv(fname, path: PathGrid) -> None:
    write_grid_csv(fname, path.times, path.fields)


def read_potential_csv(fname, d: int) -> PotentialGrid:
    times, fields = _read_grid_csv(fname, d)
    return PotentialGrid(times=times, fields=fields)


def write_potential_csv(fname, V: PotentialGrid) -> None:
    write_grid_csv(fname, V.times, V.fields)


def write_json(fname, payload: dict) -> None:
    # jsonable first: numpy scalars become python ones, non-finite floats
    # become strings, so the file is strict JSON and byte-stable
    text = json.dumps(jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
    Path(fname).write_text(text + "\n")


def read_json(fname) -> dict:
    return json.loads(Path(fname).read_text())


def jsonable(obj):
    """Recursively convert numpy scalars/arrays for JSON output."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj
