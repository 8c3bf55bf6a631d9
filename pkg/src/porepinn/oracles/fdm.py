"""Finite-difference reference solvers on uniform node grids.

Pressure: 5-point variable-coefficient stencil with harmonic face averages of
zeta and Dirichlet boundary nodes, solved by Jacobi-preconditioned CG.
Transport: explicit Euler, first-order upwind advection and conservative
central diffusion; zero-gradient faces through mirrored ghost nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..bc import FaceBC
from ..physics import PermeabilityField
from .grid import GridField


class SolverError(RuntimeError):
    pass


class NumericalInstability(SolverError):
    pass


def _grid(nx, ny, extent):
    x0, y0, x1, y1 = extent
    return np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)


def _boundary_values(bc: Mapping[str, FaceBC | Callable], xs, ys, corner: float | None):
    """Dirichlet values on boundary nodes; later faces override earlier, corners last."""
    ny, nx = len(ys), len(xs)
    P = np.zeros((ny, nx))
    mask = np.zeros((ny, nx), bool)

    def vals(cond, s):
        return cond(s) if callable(cond) and not isinstance(cond, FaceBC) else cond.values_at(s)

    for face in ("y0", "y1", "x0", "x1"):
        if face not in bc:
            raise ValueError(f"pressure boundary condition missing on face {face}")
        cond = bc[face]
        if isinstance(cond, FaceBC) and not cond.is_dirichlet:
            raise ValueError("fdm_pressure supports Dirichlet faces only")
        if face == "x0":
            P[:, 0] = vals(cond, ys); mask[:, 0] = True
        elif face == "x1":
            P[:, -1] = vals(cond, ys); mask[:, -1] = True
        elif face == "y0":
            P[0, :] = vals(cond, xs); mask[0, :] = True
        else:
            P[-1, :] = vals(cond, xs); mask[-1, :] = True
    if corner is not None:
        for j, i in ((0, 0), (0, -1), (-1, 0), (-1, -1)):
            P[j, i] = corner
    return P, mask


def _harmonic(a, b):
    return 2 * a * b / (a + b)


def zeta_on_grid(perm: PermeabilityField, mu_phi: float, nx: int, ny: int, extent) -> np.ndarray:
    xs, ys = _grid(nx, ny, extent)
    X, Y = np.meshgrid(xs, ys)
    return perm.value(X, Y) / mu_phi


def fdm_pressure(perm: PermeabilityField | np.ndarray, bc: Mapping[str, FaceBC | Callable], nx: int = 101,
                 ny: int = 101, extent=(0.0, 0.0, 1.0, 1.0), mu_phi: float = 1.0,
                 corner: float | None = None, tol: float = 1e-10, return_info: bool = False):
    """Solve div(zeta grad P) = 0 with Dirichlet data on all four faces.

    ``perm`` may also be a (ny, nx) array of nodal zeta values.
    """
    xs, ys = _grid(nx, ny, extent)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    if isinstance(perm, np.ndarray):
        z = np.asarray(perm, dtype=float)
    else:
        z = zeta_on_grid(perm, mu_phi, nx, ny, extent)
    if z.shape != (ny, nx) or not np.all(z > 0):
        raise ValueError("zeta must be positive on the grid")
    P, fixed = _boundary_values(bc, xs, ys, corner)

    ze = _harmonic(z[:, :-1], z[:, 1:]) / hx**2  # face between (j,i) and (j,i+1)
    zn = _harmonic(z[:-1, :], z[1:, :]) / hy**2  # face between (j,i) and (j+1,i)
    idx = -np.ones((ny, nx), int)
    free = ~fixed
    idx[free] = np.arange(free.sum())
    n = int(free.sum())
    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    diag = np.zeros((ny, nx))
    diag[:, :-1] += ze; diag[:, 1:] += ze
    diag[:-1, :] += zn; diag[1:, :] += zn
    jj, ii = np.nonzero(free)
    rows.append(idx[jj, ii]); cols.append(idx[jj, ii]); data.append(diag[jj, ii])
    for dj, di, coef in ((0, 1, ze), (0, -1, None), (1, 0, zn), (-1, 0, None)):
        if di == 1:
            c = coef[jj, ii]
        elif di == -1:
            c = ze[jj, ii - 1]
        elif dj == 1:
            c = coef[jj, ii]
        else:
            c = zn[jj - 1, ii]
        nj, ni = jj + dj, ii + di
        nb_free = free[nj, ni]
        rows.append(idx[jj, ii][nb_free]); cols.append(idx[nj, ni][nb_free]); data.append(-c[nb_free])
        np.add.at(rhs, idx[jj, ii][~nb_free], c[~nb_free] * P[nj, ni][~nb_free])
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    d = A.diagonal()
    M = sp.diags(1.0 / d)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    scale = np.linalg.norm(rhs) or 1.0
    sol, status = spla.cg(A, rhs, rtol=0.0, atol=tol * 1e-2 * scale / max(np.abs(d).max(), 1.0),
                          M=M, maxiter=20 * n, callback=count)
    # residual of the nondimensional stencil (divided by the diagonal)
    res = np.abs((A @ sol - rhs) / d).max() if n else 0.0
    if status != 0 or res > tol:
        raise SolverError(f"pressure solve did not converge (status {status}, residual {res:.2e})")
    P[free] = sol
    field = GridField(P, extent, math.nan)
    if return_info:
        return field, {"iterations": iters, "residual": float(res)}
    return field


def darcy_on_grid(P: GridField, zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal velocity -zeta grad P; second-order differences, one-sided at edges."""
    hx = (P.extent[2] - P.extent[0]) / (P.nx - 1)
    hy = (P.extent[3] - P.extent[1]) / (P.ny - 1)
    gy, gx = np.gradient(P.values, hy, hx, edge_order=2)
    return -zeta * gx, -zeta * gy


@dataclass
class TransportResult:
    final: GridField
    snapshots: dict[float, GridField]
    steps: int
    dt: float
    mass: list[float]


def fdm_transport(u_field, D_x, D_y, bc: Mapping[str, FaceBC], ic=0.0, nx: int = 101, ny: int = 101,
                  extent=(0.0, 0.0, 1.0, 1.0), t_end: float = 1.0, cfl: float = 0.9,
                  snapshots: Sequence[float] = (), C_ref: float | None = None,
                  track_mass: bool = False) -> TransportResult:
    """March dC/dt + u.grad C = div(D grad C) to ``t_end``.

    ``u_field`` is (ux, uy), each a scalar or a (ny, nx) nodal array; D_x, D_y
    likewise. Dirichlet faces take precedence over Neumann ones at corners.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    xs, ys = _grid(nx, ny, extent)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    shape = (ny, nx)
    ux = np.broadcast_to(np.asarray(u_field[0], dtype=float), shape)
    uy = np.broadcast_to(np.asarray(u_field[1], dtype=float), shape)
    Dx = np.broadcast_to(np.asarray(D_x, dtype=float), shape)
    Dy = np.broadcast_to(np.asarray(D_y, dtype=float), shape)

    C = np.array(np.broadcast_to(np.asarray(ic, dtype=float), shape))
    fixed = np.zeros(shape, bool)
    fixed_val = np.zeros(shape)
    neumann = {}
    for face in ("x0", "x1", "y0", "y1"):
        cond = bc.get(face)
        if cond is None:
            raise ValueError(f"transport boundary condition missing on face {face}")
        if cond.is_dirichlet:
            sl = {"x0": np.s_[:, 0], "x1": np.s_[:, -1], "y0": np.s_[0, :], "y1": np.s_[-1, :]}[face]
            along = ys if face[0] == "x" else xs
            fixed[sl] = True
            fixed_val[sl] = cond.values_at(along)
        else:
            neumann[face] = cond.value
    C[fixed] = fixed_val[fixed]
    scale = C_ref if C_ref is not None else max(np.abs(fixed_val).max(), np.abs(C).max(), 1e-300)

    rate = np.abs(ux) / hx + np.abs(uy) / hy + 2 * Dx / hx**2 + 2 * Dy / hy**2
    # advection limit cfl*h/|u| and diffusion number <= 0.25 per axis
    dt_max = cfl / rate.max() if rate.max() > 0 else t_end
    dmax = max(Dx.max() / hx**2, Dy.max() / hy**2)
    if dmax > 0:
        dt_max = min(dt_max, 0.25 / dmax)

    # face-averaged dispersion for the conservative diffusion term; edge faces mirror
    Dxp = np.pad(Dx, ((0, 0), (1, 1)), mode="edge")
    Dyp = np.pad(Dy, ((1, 1), (0, 0)), mode="edge")
    Dxe, Dxw = 0.5 * (Dxp[:, 1:-1] + Dxp[:, 2:]), 0.5 * (Dxp[:, 1:-1] + Dxp[:, :-2])
    Dyn, Dys = 0.5 * (Dyp[1:-1, :] + Dyp[2:, :]), 0.5 * (Dyp[1:-1, :] + Dyp[:-2, :])

    marks = sorted({float(t) for t in snapshots if 0 < t < t_end} | {float(t_end)})
    out: dict[float, GridField] = {}
    mass = [float(C.sum() * hx * hy)] if track_mass else []
    t = 0.0
    steps = 0
    G = np.empty((ny + 2, nx + 2))
    for mark in marks:
        n = max(1, math.ceil((mark - t) / dt_max - 1e-12))
        dt = (mark - t) / n
        for _ in range(n):
            G[1:-1, 1:-1] = C
            # ghost layers: mirrored (zero or prescribed gradient) or linear extrapolation
            G[1:-1, 0] = C[:, 1] - 2 * hx * neumann.get("x0", 0.0) if "x0" in neumann else 2 * C[:, 0] - C[:, 1]
            G[1:-1, -1] = C[:, -2] + 2 * hx * neumann.get("x1", 0.0) if "x1" in neumann else 2 * C[:, -1] - C[:, -2]
            G[0, 1:-1] = C[1, :] - 2 * hy * neumann.get("y0", 0.0) if "y0" in neumann else 2 * C[0, :] - C[1, :]
            G[-1, 1:-1] = C[-2, :] + 2 * hy * neumann.get("y1", 0.0) if "y1" in neumann else 2 * C[-1, :] - C[-2, :]
            W, E = G[1:-1, :-2], G[1:-1, 2:]
            S, N = G[:-2, 1:-1], G[2:, 1:-1]
            dCx = np.where(ux > 0, C - W, E - C) / hx
            dCy = np.where(uy > 0, C - S, N - C) / hy
            lap = (Dxe * (E - C) - Dxw * (C - W)) / hx**2 + (Dyn * (N - C) - Dys * (C - S)) / hy**2
            C = C + dt * (lap - ux * dCx - uy * dCy)
            C[fixed] = fixed_val[fixed]
            steps += 1
            if track_mass:
                mass.append(float(C.sum() * hx * hy))
        t = mark
        if not np.all(np.isfinite(C)) or np.abs(C).max() > 10 * scale:
            raise NumericalInstability(f"concentration blew up by t={t:g}")
        out[mark] = GridField(C.copy(), extent, mark)
    return TransportResult(out[marks[-1]], out, steps, dt_max, mass)
