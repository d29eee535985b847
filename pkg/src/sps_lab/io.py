"""Field, table and report files.

Radial fields are CSV with header ``r,u``; Cartesian fields are raw little-endian
float64 arrays (x fastest) with a JSON sidecar ``{"box_length": L, "m": m}``.  Floats
are written with ``repr`` so they round-trip exactly and identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidFieldError
from .fields import CartesianField, CartesianGrid, Field, RadialField, RadialGrid


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidFieldError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_radial(path, u: RadialField) -> Path:
    return write_csv(path, ["r", "u"], zip(u.grid.nodes, u.values))


def read_radial(path) -> RadialField:
    header, rows = read_csv(path)
    if [h.strip() for h in header] != ["r", "u"]:
        raise InvalidFieldError(f"{path}: expected header 'r,u', got {','.join(header)}")
    data = np.array([[float(a), float(b)] for a, b in rows])
    r, u = data[:, 0], data[:, 1]
    n = len(r)
    h = r[-1] / (n - 0.5)
    grid = RadialGrid(n * h, n)
    if not np.allclose(grid.nodes, r, rtol=1e-12, atol=0):
        raise InvalidFieldError(f"{path}: nodes are not a cell-centred uniform grid")
    return RadialField(grid, u)


def write_cartesian(path, u: CartesianField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(u.values, dtype="<f8").tofile(path)
    write_json(_sidecar(path), {"box_length": u.grid.box_length, "m": u.grid.m})
    return path


def read_cartesian(path) -> CartesianField:
    path = Path(path)
    meta = read_json(_sidecar(path))
    grid = CartesianGrid(float(meta["box_length"]), int(meta["m"]))
    values = np.fromfile(path, dtype="<f8")
    if values.size != grid.m**3:
        raise InvalidFieldError(f"{path}: {values.size} values, expected m^3 = {grid.m ** 3}")
    return CartesianField(grid, values)


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_field(path, u: Field) -> Path:
    if isinstance(u, RadialField):
        return write_radial(path, u)
    return write_cartesian(path, u)


def read_field(path) -> Field:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_radial(path)
    return read_cartesian(path)
