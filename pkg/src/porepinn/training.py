"""Collocation sampling, the weighted four-term loss, and the training pipeline."""

from __future__ import annotations

import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import physics
from .cases import Budget, CaseBundle, CaseSpec, LossWeights
from .lbfgs import LBFGSOptions, OptimResult, lbfgs_minimize
from .net import (DTYPE, JetEvaluator, NetworkConfig, ParameterSet, TrainingDivergence, init_network,
                  loss_gradient, torch_forward, torch_jet)

log = logging.getLogger(__name__)

TERMS = ("IC", "BC", "Data", "PDE")
_NORMAL_AXIS = {"x0": 0, "x1": 0, "y0": 1, "y1": 1}


@dataclass
class BoundaryBatch:
    face: str
    points: np.ndarray  # normalized (n, d+1)
    conditions: dict[str, tuple[str, np.ndarray]]  # field -> (kind, normalized target)


@dataclass
class CollocationSet:
    interior: np.ndarray
    boundary: list[BoundaryBatch]
    initial: np.ndarray
    initial_targets: dict[str, np.ndarray]
    anchors: np.ndarray
    anchor_fields: np.ndarray  # output index per anchor
    anchor_targets: np.ndarray
    seed: int

    @property
    def counts(self) -> dict[str, int]:
        return {
            "pde": len(self.interior),
            "boundary": sum(len(b.points) for b in self.boundary),
            "initial": len(self.initial),
            "data": len(self.anchors),
        }


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _face_point(face: str, along: np.ndarray, t: np.ndarray, dim: int) -> np.ndarray:
    fixed = 0.0 if face.endswith("0") else 1.0
    if dim == 1:
        return np.column_stack([np.full_like(t, fixed), t])
    if face[0] == "x":
        return np.column_stack([np.full_like(t, fixed), along, t])
    return np.column_stack([along, np.full_like(t, fixed), t])


def _normalized_target(case: CaseSpec, fname: str, face: str, cond, along_phys) -> tuple[str, np.ndarray]:
    norm = case.normalization
    if cond.is_dirichlet:
        v = cond.values_at(along_phys)
        return "dirichlet", (norm.c_norm(v) if fname == "C" else norm.p_norm(v))
    length = case.L if face[0] == "x" else case.W
    scale = norm.C_scale if fname == "C" else norm.dP
    return "neumann", np.full(np.shape(along_phys), cond.value * length / scale)


def sample_points(case: CaseSpec, budget: Budget, seed: int) -> CollocationSet:
    """Uniform random points in the normalized box; deterministic per seed.

    Boundary and initial points share ``budget.n_boundary_initial`` in
    proportion to region measure in normalized coordinates (every face and the
    t = 0 slab have unit measure).
    """
    rng = np.random.default_rng(seed)
    d = case.input_dim
    interior = rng.random((budget.n_pde, d))
    regions = [*case.faces, "initial"]
    shares = _split(budget.n_boundary_initial, len(regions))
    boundary = []
    initial = np.zeros((0, d))
    for region, n in zip(regions, shares):
        along = rng.random(n)
        t = rng.random(n)
        if region == "initial":
            spatial = rng.random((n, case.dim))
            spatial[:, 0] = along
            initial = np.column_stack([spatial, np.zeros(n)])
            continue
        pts = _face_point(region, along, t, case.dim)
        along_phys = along * (case.W if region[0] == "x" else case.L)
        conds = {}
        if case.coupled:
            conds["P"] = _normalized_target(case, "P", region, case.p_bc[region], along_phys)
        conds["C"] = _normalized_target(case, "C", region, case.c_bc[region], along_phys)
        boundary.append(BoundaryBatch(region, pts, conds))
    norm = case.normalization
    initial_targets = {"C": np.full(len(initial), norm.c_norm(case.c_initial))}

    n_d = budget.n_data if case.anchors else 0
    anchors = np.zeros((n_d, d))
    fields = np.zeros(n_d, dtype=int)
    targets = np.zeros(n_d)
    t_anchor = rng.random(n_d)
    for k in range(n_d):
        a = case.anchors[k % len(case.anchors)]
        xy = [a.x / case.L] + ([a.y / case.W] if case.dim == 2 else [])
        anchors[k] = [*xy, t_anchor[k]]
        fields[k] = case.fields.index(a.field)
        targets[k] = norm.p_norm(a.value) if a.field == "P" else norm.c_norm(a.value)
    return CollocationSet(interior, boundary, initial, initial_targets, anchors, fields, targets, seed)


def _t(a) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float64), dtype=DTYPE)


class LossProblem:
    """Precomputed tensors for one case and collocation set."""

    def __init__(self, case: CaseSpec, sets: CollocationSet, weights: LossWeights, net: NetworkConfig):
        if net.input_dim != case.input_dim or net.output_dim != len(case.fields):
            raise ValueError(f"network shape {net.input_dim}->{net.output_dim} does not fit case "
                             f"{case.name} ({case.input_dim}->{len(case.fields)})")
        self.case, self.sets, self.weights, self.net = case, sets, weights, net
        self.norm = case.normalization
        self.tp = case.transport
        self.c_idx = case.fields.index("C")
        self.p_idx = case.fields.index("P") if case.coupled else None
        self.interior = _t(sets.interior)
        self.cross = case.coupled and self.tp.alpha > 0
        if case.coupled:
            phys = self.norm.physical_points(sets.interior)
            z, (zx, zy) = physics.zeta(case.permeability, self.tp.mu_phi, phys[:, 0], phys[:, 1])
            self.zeta, self.zeta_grad = _t(z), (_t(zx), _t(zy))
        self.boundary = []
        for b in sets.boundary:
            need_d1 = any(kind == "neumann" for kind, _ in b.conditions.values())
            conds = [(case.fields.index(f), kind, _t(target)) for f, (kind, target) in b.conditions.items()]
            self.boundary.append((_t(b.points), need_d1, _NORMAL_AXIS[b.face], conds))
        self.initial = _t(sets.initial)
        self.initial_target = _t(sets.initial_targets["C"])
        self.anchors = _t(sets.anchors)
        self.anchor_fields = torch.as_tensor(sets.anchor_fields, dtype=torch.long)
        self.anchor_targets = _t(sets.anchor_targets)
        self._cache: OrderedDict[bytes, dict[str, float]] = OrderedDict()

    # -- residuals ---------------------------------------------------------

    def pde_residuals(self, ev: JetEvaluator) -> dict[str, torch.Tensor]:
        if len(self.interior) == 0:
            return {}
        case, norm, tp = self.case, self.norm, self.tp
        jet = ev.jet(self.interior, d2_axes=case.dim, cross=self.cross)
        cj = jet.component(self.c_idx)
        if case.dim == 1:
            return {"C": physics.residual_ade_1d(cj, tp, norm)}
        if not case.coupled:
            ux, uy = tp.u
            U = (ux * ux + uy * uy) ** 0.5
            Dx, Dy = physics.dispersion(tp, U, 0), physics.dispersion(tp, U, 1)
            return {"C": physics.residual_ade_2d(cj, (ux, uy), Dx, Dy, norm)}
        pj = jet.component(self.p_idx)
        grad_p = physics.pressure_gradient(pj, norm)
        ux, uy = -self.zeta * grad_p[0], -self.zeta * grad_p[1]
        grad_D = None
        if tp.alpha > 0:
            U, dU = _speed_and_gradient(pj, grad_p, self.zeta, self.zeta_grad, norm)
            Dx, Dy = physics.dispersion(tp, U, 0), physics.dispersion(tp, U, 1)
            grad_D = (tp.alpha * dU[0], tp.alpha * dU[1])
        else:
            Dx, Dy = tp.D0, tp.Dy0
        rc = physics.residual_ade_2d(cj, (ux, uy), Dx, Dy, norm, grad_D)
        rp = physics.residual_pressure(pj, self.zeta, self.zeta_grad, norm)
        return {"P": rp, "C": rc}

    def terms(self, ev: JetEvaluator) -> dict[str, torch.Tensor]:
        zero = torch.zeros((), dtype=DTYPE)
        res = self.pde_residuals(ev)
        pde = sum((torch.mean(r * r) for r in res.values()), zero)

        dir_sq: dict[int, list] = {}
        neu_sq: dict[int, list] = {}
        for pts, need_d1, axis, conds in self.boundary:
            if len(pts) == 0:
                continue
            if need_d1:
                jet = ev.jet(pts, order=1)
                val, d1 = jet.value, jet.d1
            else:
                val, d1 = ev.value(pts), None
            for k, kind, target in conds:
                if kind == "dirichlet":
                    dir_sq.setdefault(k, []).append((val[:, k] - target) ** 2)
                else:
                    neu_sq.setdefault(k, []).append((d1[:, axis, k] - target) ** 2)
        bc = zero
        for group in (dir_sq, neu_sq):
            for sq in group.values():
                bc = bc + torch.mean(torch.cat(sq))

        ic = zero
        if len(self.initial):
            v = ev.value(self.initial)[:, self.c_idx]
            ic = torch.mean((v - self.initial_target) ** 2)
        data = zero
        if len(self.anchors):
            v = ev.value(self.anchors)
            picked = v.gather(1, self.anchor_fields[:, None])[:, 0]
            data = torch.mean((picked - self.anchor_targets) ** 2)
        return {"IC": ic, "BC": bc, "Data": data, "PDE": pde}

    def weighted(self, terms: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
        w = self.weights
        return {"IC": w.w_i * terms["IC"], "BC": w.w_b * terms["BC"],
                "Data": w.w_d * terms["Data"], "PDE": w.w_p * terms["PDE"]}

    # -- optimizer interface -----------------------------------------------

    def objective(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        raw: dict[str, float] = {}

        def loss(ev):
            terms = self.terms(ev)
            raw.update({k: float(v.detach()) for k, v in terms.items()})
            return self.weighted(terms)

        f, g = loss_gradient((self.net, vec), loss)
        self._cache[vec.tobytes()] = raw
        while len(self._cache) > 64:
            self._cache.popitem(last=False)
        return f, g

    def breakdown_for(self, vec: np.ndarray) -> dict[str, float] | None:
        return self._cache.get(np.asarray(vec, dtype=np.float64).tobytes())

    def evaluate(self, vec: np.ndarray) -> tuple[float, dict[str, float]]:
        with torch.no_grad():
            terms = self.terms(JetEvaluator(self.net, _t(vec)))
            weighted = self.weighted(terms)
        total = sum(float(v) for v in weighted.values())
        for name, v in weighted.items():
            if not np.isfinite(float(v)):
                raise TrainingDivergence(name, float(v))
        return total, {k: float(v) for k, v in terms.items()}


def _speed_and_gradient(pj, grad_p, zeta_val, zeta_grad, norm):
    """|u| and its physical gradient for u = -zeta grad P (needs the mixed derivative)."""
    _, d1, d2, dxy = pj
    gx, gy = grad_p
    Lx, Ly, dP = norm.L_x, norm.L_y, norm.dP
    pxx = dP / Lx**2 * d2[:, 0]
    pyy = dP / Ly**2 * d2[:, 1]
    pxy = dP / (Lx * Ly) * dxy
    zx, zy = zeta_grad
    ux, uy = -zeta_val * gx, -zeta_val * gy
    U = torch.sqrt(ux * ux + uy * uy + 1e-30)
    dux_dx = -(zx * gx + zeta_val * pxx)
    duy_dx = -(zx * gy + zeta_val * pxy)
    dux_dy = -(zy * gx + zeta_val * pxy)
    duy_dy = -(zy * gy + zeta_val * pyy)
    return U, ((ux * dux_dx + uy * duy_dx) / U, (ux * dux_dy + uy * duy_dy) / U)


def assemble_loss(params: ParameterSet, sets: CollocationSet, weights: LossWeights,
                  case: CaseSpec) -> tuple[float, dict[str, float]]:
    """Weighted total and the unweighted per-term breakdown."""
    return LossProblem(case, sets, weights, params.config).evaluate(params.flatten())


# -- training ----------------------------------------------------------------


@dataclass
class TrainingReport:
    iterations: int
    final_loss: float
    converged: bool
    reason: str
    train_time: float
    inference_time_per_1e4: float
    history: list[dict[str, float]] = field(default_factory=list)
    final_terms: dict[str, float] = field(default_factory=dict)
    evaluations: int = 0
    warmup_steps: int = 0

    def to_text(self) -> str:
        lines = [
            f"iterations={self.iterations}",
            f"warmup_steps={self.warmup_steps}",
            f"evaluations={self.evaluations}",
            f"final_loss={self.final_loss!r}",
            f"converged={str(self.converged).lower()}",
            f"reason={self.reason}",
            f"train_time_s={self.train_time:.3f}",
            f"inference_time_per_1e4_s={self.inference_time_per_1e4:.6f}",
        ]
        lines += [f"loss_{k}={v!r}" for k, v in self.final_terms.items()]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    def write_history(self, path: str | Path) -> None:
        cols = ["iteration", "loss", "best", *TERMS]
        rows = [",".join(cols)]
        for h in self.history:
            rows.append(",".join(repr(h.get(c, float("nan"))) if c != "iteration" else str(h[c]) for c in cols))
        Path(path).write_text("\n".join(rows) + "\n")


@dataclass
class TrainedModel:
    case: CaseSpec
    params: ParameterSet

    def predict(self, points: np.ndarray) -> dict[str, np.ndarray]:
        """Physical field values at physical points (N, dim+1), time last."""
        norm = self.case.normalization
        x = _t(norm.normalize_points(points))
        with torch.no_grad():
            y = torch_forward(self.params.config, torch.from_numpy(self.params.flatten()), x).numpy()
        out = {}
        for k, name in enumerate(self.case.fields):
            out[name] = norm.c_phys(y[:, k]) if name == "C" else norm.p_phys(y[:, k])
        return out

    def velocity(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Darcy velocity (ux, uy, |u|) from the pressure jet at physical points."""
        if not self.case.coupled:
            raise ValueError("velocity maps need a coupled case")
        norm = self.case.normalization
        x = _t(norm.normalize_points(points))
        with torch.no_grad():
            jet = torch_jet(self.params.config, torch.from_numpy(self.params.flatten()), x, order=1)
        pj = jet.component(self.case.fields.index("P"))
        grad = tuple(g.numpy() for g in physics.pressure_gradient(pj, norm))
        z, _ = physics.zeta(self.case.permeability, self.case.transport.mu_phi, points[:, 0], points[:, 1])
        (ux, uy), U = physics.darcy_velocity(grad, z)
        return ux, uy, U


def adam_warmup(objective, vec: np.ndarray, steps: int, lr: float = 1e-3,
                betas=(0.9, 0.999), eps: float = 1e-8) -> np.ndarray:
    m = np.zeros_like(vec)
    v = np.zeros_like(vec)
    x = vec.copy()
    for k in range(1, steps + 1):
        _, g = objective(x)
        m = betas[0] * m + (1 - betas[0]) * g
        v = betas[1] * v + (1 - betas[1]) * g * g
        mh = m / (1 - betas[0] ** k)
        vh = v / (1 - betas[1] ** k)
        x = x - lr * mh / (np.sqrt(vh) + eps)
    return x


def inference_time(model: TrainedModel, n: int = 10_000, repeats: int = 3) -> float:
    rng = np.random.default_rng(0)
    scale = [model.case.L] + ([model.case.W] if model.case.dim == 2 else []) + [model.case.T]
    pts = rng.random((n, model.case.input_dim)) * np.array(scale)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.predict(pts)
        best = min(best, time.perf_counter() - t0)
    return best


def train_case(bundle: CaseBundle, init: ParameterSet | None = None,
               log_every: int = 0) -> tuple[TrainedModel, TrainingReport]:
    """Sample, optionally warm up with Adam, minimize with L-BFGS, report."""
    case, net, opts = bundle.case, bundle.net, bundle.train
    t0 = time.perf_counter()
    params = init if init is not None else init_network(net, opts.seed)
    sets = sample_points(case, opts.budget, opts.seed)
    problem = LossProblem(case, sets, opts.weights, net)
    vec = params.flatten()
    if opts.warmup_steps > 0:
        vec = adam_warmup(problem.objective, vec, opts.warmup_steps, opts.warmup_lr)

    history: list[dict[str, float]] = []

    def callback(it, f, x):
        row = {"iteration": it, "loss": f, "best": min(f, history[-1]["best"]) if history else f}
        row.update(problem.breakdown_for(x) or {})
        history.append(row)
        if log_every and it % log_every == 0:
            log.info("%s it=%d loss=%.3e %s", case.name, it, f,
                     " ".join(f"{k}={row.get(k, float('nan')):.2e}" for k in TERMS))

    result: OptimResult = lbfgs_minimize(problem.objective, vec, opts.lbfgs, callback)
    final_loss, terms = problem.evaluate(result.theta)
    trained = ParameterSet.unflatten(net, result.theta, opts.seed)
    model = TrainedModel(case, trained)
    report = TrainingReport(
        iterations=result.iterations,
        final_loss=final_loss,
        converged=result.converged,
        reason=result.reason,
        train_time=time.perf_counter() - t0,
        inference_time_per_1e4=inference_time(model),
        history=history,
        final_terms=terms,
        evaluations=result.evaluations,
        warmup_steps=opts.warmup_steps,
    )
    return model, report
