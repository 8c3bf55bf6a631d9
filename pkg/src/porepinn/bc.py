"""Boundary-condition descriptors shared by the training loss and the reference solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .net import ConfigError

FACES = ("x0", "x1", "y0", "y1")
Face = Literal["x0", "x1", "y0", "y1"]


@dataclass(frozen=True)
class FaceBC:
    """Condition on one face of the box.

    Dirichlet: ``value`` on the closed ``segment`` (physical coordinate along
    the face), ``outside`` elsewhere; no segment means the whole face.
    Neumann: ``value`` is the derivative along the coordinate normal to the
    face (d/dx on x faces, d/dy on y faces).
    """

    kind: Literal["dirichlet", "neumann"]
    value: float = 0.0
    segment: tuple[float, float] | None = None
    outside: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")
        if self.segment is not None:
            a, b = self.segment
            if a > b:
                raise ConfigError(f"injection interval reversed: {a} > {b}")
            if self.kind == "neumann":
                raise ConfigError("segments apply to Dirichlet conditions only")

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    def values_at(self, s, tol: float = 1e-9) -> np.ndarray:
        """Dirichlet value at along-face coordinates ``s``."""
        s = np.asarray(s, dtype=float)
        if self.segment is None:
            return np.full(s.shape, self.value)
        a, b = self.segment
        return np.where((s >= a - tol) & (s <= b + tol), self.value, self.outside)


def dirichlet(value: float, segment=None, outside: float = 0.0) -> FaceBC:
    return FaceBC("dirichlet", value, None if segment is None else tuple(segment), outside)


def neumann(value: float = 0.0) -> FaceBC:
    return FaceBC("neumann", value)
