"""Problem descriptions and the built-in presets for the four experiments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Literal

from .bc import FACES, FaceBC, dirichlet, neumann
from .lbfgs import LBFGSOptions
from .net import Activation, ConfigError, NetworkConfig
from .physics import Analytic, Homogeneous, Normalization, PermeabilityField, TransportParams


@dataclass(frozen=True)
class Anchor:
    field: Literal["P", "C"]
    x: float
    y: float
    value: float


@dataclass(frozen=True)
class CaseSpec:
    name: str
    dim: int  # spatial dimensions, 1 or 2
    L: float
    T: float
    transport: TransportParams
    c_bc: dict[str, FaceBC]
    W: float = 1.0
    permeability: PermeabilityField | None = None  # None: constant velocity
    p_bc: dict[str, FaceBC] | None = None
    c_initial: float = 0.0
    anchors: tuple[Anchor, ...] = ()
    grid: tuple[int, int] = (101, 101)
    snapshots: tuple[float, ...] = (1.0,)
    oracle: Literal["analytic_1d", "analytic_2d", "fdm"] = "fdm"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if min(self.L, self.W, self.T) <= 0:
            raise ConfigError("L, W and T must be positive")
        faces = self.faces
        if set(self.c_bc) != set(faces):
            raise ConfigError(f"concentration BCs must cover faces {faces}, got {sorted(self.c_bc)}")
        for face, cond in self.c_bc.items():
            self._check_segment(face, cond)
        if self.coupled:
            if self.dim != 2:
                raise ConfigError("pressure coupling needs a 2D case")
            if self.p_bc is None or set(self.p_bc) != set(faces):
                raise ConfigError("coupled cases need pressure BCs on every face")
            if not all(c.is_dirichlet for c in self.p_bc.values()):
                raise ConfigError("pressure BCs must be Dirichlet")
        elif self.transport.u is None:
            raise ConfigError("constant-velocity cases need a velocity u")
        elif len(self.transport.u) != self.dim:
            raise ConfigError(f"velocity must have {self.dim} components")
        if any(not 0 < t <= self.T for t in self.snapshots):
            raise ConfigError("snapshot times must lie in (0, T]")
        for a in self.anchors:
            if a.field == "P" and not self.coupled:
                raise ConfigError("pressure anchors need a coupled case")
            if not (0 <= a.x <= self.L and 0 <= a.y <= self.W):
                raise ConfigError(f"anchor {a} lies outside the domain")
        if min(self.grid) < 2:
            raise ConfigError("evaluation grid needs at least 2 nodes per axis")

    def _check_segment(self, face, cond):
        if cond.segment is None:
            return
        extent = self.W if face[0] == "x" else self.L
        a, b = cond.segment
        if a < 0 or b > extent:
            raise ConfigError(f"injection interval {cond.segment} on {face} lies outside the face")

    @property
    def faces(self) -> tuple[str, ...]:
        return FACES[:2] if self.dim == 1 else FACES

    @property
    def coupled(self) -> bool:
        return self.permeability is not None

    @property
    def fields(self) -> tuple[str, ...]:
        """Network outputs in order."""
        return ("P", "C") if self.coupled else ("C",)

    @property
    def input_dim(self) -> int:
        return self.dim + 1

    @property
    def normalization(self) -> Normalization:
        if self.coupled:
            vals = [v for c in self.p_bc.values() for v in (c.value, c.outside if c.segment else c.value)]
            vals += [a.value for a in self.anchors if a.field == "P"]
            p_min, p_max = min(vals), max(vals)
            if p_max <= p_min:
                p_max = p_min + 1.0
        else:
            p_min, p_max = 0.0, 1.0
        c_scale = self.transport.C0 if self.transport.C0 > 0 else 1.0
        return Normalization(L_x=self.L, T=self.T, L_y=self.W, C_scale=c_scale, P_min=p_min, P_max=p_max)


@dataclass(frozen=True)
class Budget:
    n_pde: int
    n_boundary_initial: int
    n_data: int = 0

    def __post_init__(self):
        if min(self.n_pde, self.n_boundary_initial, self.n_data) < 0:
            raise ConfigError("point budgets must be >= 0")


@dataclass(frozen=True)
class LossWeights:
    w_i: float = 1.0
    w_b: float = 1.0
    w_d: float = 1.0
    w_p: float = 1.0

    def __post_init__(self):
        w = (self.w_i, self.w_b, self.w_d, self.w_p)
        if min(w) < 0 or max(w) <= 0:
            raise ConfigError("loss weights must be >= 0 with at least one positive")


@dataclass(frozen=True)
class TrainOptions:
    budget: Budget
    weights: LossWeights = LossWeights()
    lbfgs: LBFGSOptions = field(default_factory=LBFGSOptions)
    warmup_steps: int = 0
    warmup_lr: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class CaseBundle:
    case: CaseSpec
    net: NetworkConfig
    train: TrainOptions

    def replace(self, *, case=None, net=None, train=None, **train_kw) -> "CaseBundle":
        train = train or self.train
        if train_kw:
            train = dataclasses.replace(train, **train_kw)
        return CaseBundle(case or self.case, net or self.net, train)

    def with_activation(self, activation: Activation | str) -> "CaseBundle":
        return self.replace(net=dataclasses.replace(self.net, activation=Activation(activation)))

    def smoke(self, points: int = 500, iters: int = 200) -> "CaseBundle":
        """Reduced budgets for quick end-to-end checks."""
        b = self.train.budget
        budget = Budget(points, points, min(b.n_data, points))
        lb = dataclasses.replace(self.train.lbfgs, max_iters=iters)
        return self.replace(budget=budget, lbfgs=lb, warmup_steps=min(self.train.warmup_steps, iters))


# -- presets ---------------------------------------------------------------

_NEUMANN = neumann(0.0)
OMEGA0 = 10.0  # first-layer frequency chosen by short tuning sweeps over 1, 3, 5, 10, 20 and 30


def _lbfgs(iters: int) -> LBFGSOptions:
    return LBFGSOptions(memory=50, max_iters=iters)


def _case1() -> CaseBundle:
    case = CaseSpec(
        name="case1", dim=1, L=1.0, T=10.0,
        transport=TransportParams(D0=0.02, u=(0.5,), C0=1.0),
        c_bc={"x0": dirichlet(1.0), "x1": _NEUMANN},
        grid=(101, 101), snapshots=(1.0, 5.0, 10.0), oracle="analytic_1d",
    )
    net = NetworkConfig(2, (32, 32, 16, 16), 1, first_layer_frequency=OMEGA0)
    return CaseBundle(case, net, TrainOptions(Budget(5000, 5000), lbfgs=_lbfgs(2000)))


def _case2(name, u, segment, snapshots) -> CaseBundle:
    case = CaseSpec(
        name=name, dim=2, L=1.0, W=1.0, T=1.0,
        transport=TransportParams(D0=0.02, u=u, C0=0.2),
        c_bc={"x0": dirichlet(0.2, segment, 0.0), "x1": _NEUMANN, "y0": _NEUMANN, "y1": _NEUMANN},
        snapshots=snapshots, oracle="analytic_2d",
    )
    net = NetworkConfig(3, (32, 16, 16, 16), 1, first_layer_frequency=OMEGA0)
    return CaseBundle(case, net, TrainOptions(Budget(8000, 8000), lbfgs=_lbfgs(2000)))


_P_BC = {"x0": dirichlet(0.1), "x1": dirichlet(0.1), "y0": dirichlet(1.0), "y1": dirichlet(1.0)}
_C_BC_Y = {"x0": _NEUMANN, "x1": _NEUMANN, "y0": dirichlet(0.2, (0.3, 0.7), 0.0),
           "y1": dirichlet(0.2, (0.3, 0.7), 0.0)}


def _case3() -> CaseBundle:
    corners = tuple(Anchor("P", x, y, 0.55) for x in (0.0, 1.0) for y in (0.0, 1.0))
    case = CaseSpec(
        name="case3", dim=2, L=1.0, W=1.0, T=1.0,
        transport=TransportParams(D0=0.02, alpha=0.0, mu_phi=1e-3, C0=0.2),
        permeability=Homogeneous(1e-3),
        p_bc=dict(_P_BC), c_bc=dict(_C_BC_Y), anchors=corners, snapshots=(1.0,), oracle="fdm",
    )
    net = NetworkConfig(3, (32, 16, 16, 8, 8), 2, first_layer_frequency=OMEGA0)
    return CaseBundle(case, net, TrainOptions(Budget(12000, 12000, 4), lbfgs=_lbfgs(4000)))


def _case4() -> CaseBundle:
    case = CaseSpec(
        name="case4", dim=2, L=1.0, W=1.0, T=1.0,
        transport=TransportParams(D0=0.02, alpha=0.0, mu_phi=1e-3, C0=0.2),
        permeability=Analytic("gaussian_lobes", (1e-3, 100.0)),
        p_bc=dict(_P_BC), c_bc=dict(_C_BC_Y), snapshots=(1.0,), oracle="fdm",
    )
    net = NetworkConfig(3, (32, 32, 16, 16, 16), 2, first_layer_frequency=OMEGA0)
    return CaseBundle(case, net, TrainOptions(Budget(15000, 15000), LossWeights(w_p=0.7), lbfgs=_lbfgs(4000)))


PRESETS = {
    "case1": _case1,
    "case2-dispersion": lambda: _case2("case2-dispersion", (0.0, 0.0), (0.3, 0.7), (1.0,)),
    "case2-advection": lambda: _case2("case2-advection", (0.5, 0.0), (0.3, 0.7), (0.25, 0.5, 0.75, 1.0)),
    "case2-line": lambda: _case2("case2-line", (0.5, 0.0), (0.0, 1.0), (0.75,)),
    "case3": _case3,
    "case4": _case4,
}


def preset(name: str) -> CaseBundle:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
