"""Governing equations as residuals of network jets.

Network inputs are normalized coordinates (x/L_x, y/L_y, t/T) and outputs are
normalized fields C/C_scale and (P - P_min)/(P_max - P_min). Residuals are
written with plain arithmetic so they accept numpy arrays or torch tensors.
The concentration residual is multiplied by T and the pressure residual by
L_x^2/(dP * zeta_ref) so every term is of order one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, ClassVar, Sequence

import numpy as np

from .net import ConfigError


@dataclass(frozen=True)
class TransportParams:
    D0: float  # molecular diffusion along x (m^2/s)
    alpha: float = 0.0  # dispersivity (m)
    u: tuple[float, ...] | None = None  # constant velocity, None when computed from pressure
    phi: float = 1.0
    mu_phi: float = 1.0  # viscosity * porosity (Pa s)
    C0: float = 1.0
    D0_y: float | None = None  # defaults to D0

    def __post_init__(self):
        if self.D0 < 0 or (self.D0_y is not None and self.D0_y < 0):
            raise ConfigError("D0 must be >= 0")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if not 0 < self.phi <= 1:
            raise ConfigError("phi must lie in (0, 1]")
        if not self.mu_phi > 0:
            raise ConfigError("mu_phi must be positive")
        if self.u is not None:
            object.__setattr__(self, "u", tuple(float(v) for v in self.u))

    @property
    def Dy0(self) -> float:
        return self.D0 if self.D0_y is None else self.D0_y


def dispersion(params: TransportParams, U, axis: int = 0):
    """Hydrodynamic dispersion D0 + alpha*U (axis 1 uses D0_y)."""
    D0 = params.D0 if axis == 0 else params.Dy0
    return D0 + params.alpha * U


# -- permeability ------------------------------------------------------------


class PermeabilityField:
    """k(x, y) > 0 with spatial gradient; coordinates are physical."""

    def value_grad(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def value(self, x, y) -> np.ndarray:
        return self.value_grad(x, y)[0]


@dataclass(frozen=True)
class Homogeneous(PermeabilityField):
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError("permeability must be positive")

    def value_grad(self, x, y):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(x, np.asarray(y, dtype=float)).shape
        return np.full(shape, self.k), np.zeros(shape), np.zeros(shape)


def _sine_x(x, y, k0, amplitude=0.5, period=1.0):
    w = 2 * np.pi / period
    k = k0 * (1 + amplitude * np.sin(w * x))
    return k, k0 * amplitude * w * np.cos(w * x), np.zeros_like(k)


def _gaussian_lobes(x, y, k0, contrast=100.0, x1=0.3, y1=0.35, x2=0.7, y2=0.65, width=0.15):
    # log k = log k0 + (ln contrast / 2) * (g1 - g2): one high lobe and one low lobe
    a = 0.5 * math.log(contrast)
    s2 = 2 * width * width
    g1 = np.exp(-((x - x1) ** 2 + (y - y1) ** 2) / s2)
    g2 = np.exp(-((x - x2) ** 2 + (y - y2) ** 2) / s2)
    k = k0 * np.exp(a * (g1 - g2))
    dlx = a * (-2 * (x - x1) / s2 * g1 + 2 * (x - x2) / s2 * g2)
    dly = a * (-2 * (y - y1) / s2 * g1 + 2 * (y - y2) / s2 * g2)
    return k, k * dlx, k * dly


def _layered_y(x, y, k0, ratio=10.0, y_interface=0.5, smoothing=0.02):
    # smooth step between k0 (below) and k0*ratio (above)
    s = 0.5 * (1 + np.tanh((y - y_interface) / smoothing))
    k = k0 * (1 + (ratio - 1) * s)
    ds = 0.5 / smoothing / np.cosh((y - y_interface) / smoothing) ** 2
    return k, np.zeros_like(k), k0 * (ratio - 1) * ds


ANALYTIC_FIELDS: dict[str, Callable] = {
    "sine_x": _sine_x,
    "gaussian_lobes": _gaussian_lobes,
    "layered_y": _layered_y,
}


@dataclass(frozen=True)
class Analytic(PermeabilityField):
    name: str
    params: tuple[float, ...] = (1.0,)  # first entry is k0

    def __post_init__(self):
        if self.name not in ANALYTIC_FIELDS:
            raise ConfigError(f"unknown analytic permeability {self.name!r}; known: {sorted(ANALYTIC_FIELDS)}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if not self.params or self.params[0] <= 0:
            raise ConfigError("analytic permeability needs k0 > 0 as first parameter")

    def value_grad(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        return ANALYTIC_FIELDS[self.name](x, y, *self.params)


@dataclass(frozen=True, eq=False)
class Raster(PermeabilityField):
    """Node values on a uniform grid, bilinear in between; values[j, i] at (x_i, y_j)."""

    values: np.ndarray
    extent: tuple[float, float, float, float]  # x0, y0, x1, y1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 2:
            raise ConfigError("raster needs at least 2x2 nodes")
        if not np.all(v > 0):
            raise ConfigError("raster permeability must be positive")
        x0, y0, x1, y1 = self.extent
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("degenerate raster extent")
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.extent
        return (x1 - x0) / (self.nx - 1), (y1 - y0) / (self.ny - 1)

    def value(self, x, y):
        x0, y0, x1, y1 = self.extent
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        if np.any(x < x0 - tol) or np.any(x > x1 + tol) or np.any(y < y0 - tol) or np.any(y > y1 + tol):
            raise ValueError("point outside raster extent")
        hx, hy = self.spacing
        fx = np.clip((x - x0) / hx, 0, self.nx - 1)
        fy = np.clip((y - y0) / hy, 0, self.ny - 1)
        i = np.minimum(fx.astype(int), self.nx - 2)
        j = np.minimum(fy.astype(int), self.ny - 2)
        tx, ty = fx - i, fy - j
        v = self.values
        return ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
                + (1 - tx) * ty * v[j + 1, i] + tx * ty * v[j + 1, i + 1])

    def value_grad(self, x, y):
        # central differences of the bilinear surface, step = half a cell, clipped at the edges
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        x0, y0, x1, y1 = self.extent
        hx, hy = self.spacing
        xa, xb = np.maximum(x - hx / 2, x0), np.minimum(x + hx / 2, x1)
        ya, yb = np.maximum(y - hy / 2, y0), np.minimum(y + hy / 2, y1)
        k = self.value(x, y)
        gx = (self.value(xb, y) - self.value(xa, y)) / (xb - xa)
        gy = (self.value(x, yb) - self.value(x, ya)) / (yb - ya)
        return k, gx, gy

    @classmethod
    def read(cls, path: str | Path) -> "Raster":
        """Text format: header "nx ny x0 y0 x1 y1", then nx*ny values, row-major, y outer."""
        text = Path(path).read_text().split("\n", 1)
        head = text[0].split()
        if len(head) != 6:
            raise ValueError(f"{path}: header must be 'nx ny x0 y0 x1 y1'")
        nx, ny = int(head[0]), int(head[1])
        extent = tuple(float(v) for v in head[2:])
        vals = np.array(text[1].split() if len(text) > 1 else [], dtype=float)
        if vals.size != nx * ny:
            raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
        return cls(vals.reshape(ny, nx), extent)

    def write(self, path: str | Path) -> None:
        x0, y0, x1, y1 = self.extent
        lines = [f"{self.nx} {self.ny} {x0!r} {y0!r} {x1!r} {y1!r}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.values]
        Path(path).write_text("\n".join(lines) + "\n")


def zeta(perm: PermeabilityField, mu_phi: float, x, y):
    """Mobility k/(mu*phi) and its gradient (d/dx, d/dy) at physical points."""
    k, kx, ky = perm.value_grad(x, y)
    return k / mu_phi, (kx / mu_phi, ky / mu_phi)


# -- normalization -----------------------------------------------------------


@dataclass(frozen=True)
class Normalization:
    L_x: float
    T: float
    L_y: float = 1.0
    C_scale: float = 1.0
    P_min: float = 0.0
    P_max: float = 1.0

    def __post_init__(self):
        if min(self.L_x, self.L_y, self.T, self.C_scale) <= 0:
            raise ConfigError("normalization scales must be positive")
        if not self.P_max > self.P_min:
            raise ConfigError("P_max must exceed P_min")

    @property
    def dP(self) -> float:
        return self.P_max - self.P_min

    @property
    def kappa(self) -> float:
        return self.L_x / self.L_y

    def normalize_points(self, pts: np.ndarray) -> np.ndarray:
        """(N, 2) rows (x, t) or (N, 3) rows (x, y, t) into the unit box."""
        pts = np.asarray(pts, dtype=float)
        scale = [self.L_x, self.T] if pts.shape[1] == 2 else [self.L_x, self.L_y, self.T]
        return pts / np.array(scale)

    def physical_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        scale = [self.L_x, self.T] if pts.shape[1] == 2 else [self.L_x, self.L_y, self.T]
        return pts * np.array(scale)

    def c_norm(self, c):
        return c / self.C_scale

    def c_phys(self, c_hat):
        return c_hat * self.C_scale

    def p_norm(self, p):
        return (p - self.P_min) / self.dP

    def p_phys(self, p_hat):
        return self.P_min + self.dP * p_hat


# -- residuals ---------------------------------------------------------------
# A scalar jet here is (value (N,), d1 (N, in), d2 (N, in)) for one output in
# normalized coordinates; the time derivative is the last input coordinate.


def pressure_gradient(p_jet, norm: Normalization):
    """Physical (dP/dx, dP/dy) from a normalized pressure jet."""
    d1 = p_jet[1]
    return norm.dP / norm.L_x * d1[:, 0], norm.dP / norm.L_y * d1[:, 1]


def darcy_velocity(grad_p, zeta_val):
    """u = -zeta grad P and its magnitude."""
    gx, gy = grad_p
    ux, uy = -zeta_val * gx, -zeta_val * gy
    U = (ux * ux + uy * uy) ** 0.5
    return (ux, uy), U


def residual_ade_1d(c_jet, params: TransportParams, norm: Normalization):
    """T * (C_t + u C_x - D C_xx) / C_scale for constant u and D."""
    d1, d2 = c_jet[1], c_jet[2]
    ux = params.u[0] if params.u else 0.0
    D = dispersion(params, abs(ux))
    return d1[:, 1] + (ux * norm.T / norm.L_x) * d1[:, 0] - (D * norm.T / norm.L_x**2) * d2[:, 0]


def residual_ade_2d(c_jet, u, D_x, D_y, norm: Normalization, grad_D=None):
    """T * (C_t + u.grad C - div(D grad C)) / C_scale in normalized coordinates.

    ``u`` and ``D_x``, ``D_y`` may be scalars or per-point arrays (physical
    units); ``grad_D = (dDx/dx, dDy/dy)`` adds the variable-dispersion terms.
    """
    d1, d2 = c_jet[1], c_jet[2]
    ux, uy = u
    T, Lx, Ly = norm.T, norm.L_x, norm.L_y
    r = (d1[:, 2] + (ux * T / Lx) * d1[:, 0] + (uy * T / Ly) * d1[:, 1]
         - (D_x * T / Lx**2) * d2[:, 0] - (D_y * T / Ly**2) * d2[:, 1])
    if grad_D is not None:
        r = r - (grad_D[0] * T / Lx) * d1[:, 0] - (grad_D[1] * T / Ly) * d1[:, 1]
    return r


def residual_pressure(p_jet, zeta_val, zeta_grad, norm: Normalization, zeta_ref=None):
    """div(zeta grad P) * L_x^2 / (dP * zeta_ref).

    ``zeta_grad`` is the physical gradient. With ``zeta_ref=None`` each point is
    normalized by its own zeta, which keeps the residual order one under strong
    permeability contrast.
    """
    d1, d2 = p_jet[1], p_jet[2]
    ref = zeta_val if zeta_ref is None else zeta_ref
    k2 = norm.kappa**2
    zx = zeta_grad[0] * norm.L_x
    zy = zeta_grad[1] * norm.L_y
    return ((zeta_val / ref) * (d2[:, 0] + k2 * d2[:, 1])
            + (zx / ref) * d1[:, 0] + k2 * (zy / ref) * d1[:, 1])
