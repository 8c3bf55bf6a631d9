"""Uniform-grid scalar fields, error metrics and CSV export."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class GridField:
    """values[j, i] sits at (x_i, y_j); row-major with y outer.

    For 1D space-time fields the second axis is time and ``time`` is nan.
    """

    values: np.ndarray
    extent: tuple[float, float, float, float]  # x0, y0, x1, y1
    time: float = math.nan

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.size == 0:
            raise ValueError("GridField values must be a non-empty 2D array")
        x0, y0, x1, y1 = (float(e) for e in self.extent)
        if not x1 > x0 or (v.shape[0] > 1 and not y1 > y0):
            raise ValueError(f"degenerate extent {self.extent}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "extent", (x0, y0, x1, y1))

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.extent[0], self.extent[2], self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.extent[1], self.extent[3], self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    def with_values(self, values) -> "GridField":
        return GridField(np.asarray(values, dtype=float).reshape(self.values.shape), self.extent, self.time)

    def restrict(self, nx: int, ny: int) -> "GridField":
        """Sample a refined grid onto a coarser one whose nodes are a subset."""
        fx, fy = (self.nx - 1) / (nx - 1), (self.ny - 1) / (ny - 1) if ny > 1 else 1
        if fx != int(fx) or fy != int(fy):
            raise ValueError("target grid nodes are not a subset of this grid")
        return GridField(self.values[:: int(fy), :: int(fx)][:ny, :nx], self.extent, self.time)


def _check(a: GridField, b: GridField):
    if a.values.shape != b.values.shape:
        raise ValueError(f"shape mismatch {a.values.shape} vs {b.values.shape}")


def mse(a: GridField, b: GridField) -> float:
    _check(a, b)
    return float(np.mean((a.values - b.values) ** 2))


def pointwise_error(a: GridField, b: GridField) -> GridField:
    _check(a, b)
    return a.with_values(np.abs(a.values - b.values))


def write_csv(field: GridField, path: str | Path) -> None:
    """Header line "nx,ny,x0,y0,x1,y1,time" (values), then one value per line."""
    head = [str(field.nx), str(field.ny), *(repr(v) for v in field.extent), repr(float(field.time))]
    body = "\n".join(repr(float(v)) for v in field.values.ravel())
    Path(path).write_text(",".join(head) + "\n" + body + "\n")


def read_csv(path: str | Path) -> GridField:
    lines = Path(path).read_text().split()
    head = lines[0].split(",")
    if len(head) != 7:
        raise ValueError(f"{path}: malformed header")
    nx, ny = int(head[0]), int(head[1])
    extent = tuple(float(v) for v in head[2:6])
    vals = np.array([float(v) for v in lines[1:]])
    if vals.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
    return GridField(vals.reshape(ny, nx), extent, float(head[6]))
