"""Run orchestration: train, evaluate against the reference solution, export, time."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cases import CaseBundle, CaseSpec
from .net import Activation, ParameterSet, TrainingDivergence, init_network, load_checkpoint, save_checkpoint
from .oracles.analytic import Analytic2DParams, Series1DParams, analytic_1d_approx, analytic_2d
from .oracles.fdm import darcy_on_grid, fdm_pressure, fdm_transport, zeta_on_grid
from .oracles.grid import GridField, mse, pointwise_error, write_csv
from .physics import dispersion
from .training import TrainedModel, TrainingReport, train_case

log = logging.getLogger(__name__)

# Case 1 evaluates on t in [T/100, T]: at t = 0 the boundary value and the
# initial value disagree at x = 0 and the reference is discontinuous there.
T_MIN_FRACTION = 0.01

SPACE_TIME = "xt"  # snapshot label of the 1D (x, t) evaluation grid


def snapshot_label(t: float) -> str:
    return SPACE_TIME if math.isnan(t) else f"t{t:g}"


# -- evaluation grids ----------------------------------------------------------


def space_time_grid(case: CaseSpec) -> GridField:
    nx, nt = case.grid
    return GridField(np.zeros((nt, nx)), (0.0, case.T * T_MIN_FRACTION, case.L, case.T), math.nan)


def spatial_grid(case: CaseSpec, t: float) -> GridField:
    nx, ny = case.grid
    if case.dim == 1:
        return GridField(np.zeros((1, nx)), (0.0, 0.0, case.L, 0.0), t)
    return GridField(np.zeros((ny, nx)), (0.0, 0.0, case.L, case.W), t)


def grid_points(g: GridField, case: CaseSpec) -> np.ndarray:
    """Physical (x[, y], t) rows for every node of ``g``, row-major."""
    X, Y = g.mesh()
    if math.isnan(g.time):
        return np.column_stack([X.ravel(), Y.ravel()])  # 1D space-time: Y is t
    t = np.full(X.size, g.time)
    if case.dim == 1:
        return np.column_stack([X.ravel(), t])
    return np.column_stack([X.ravel(), Y.ravel(), t])


def evaluation_grids(case: CaseSpec) -> list[GridField]:
    grids = [spatial_grid(case, t) for t in case.snapshots]
    if case.dim == 1:
        grids.insert(0, space_time_grid(case))
    return grids


# -- reference solutions ---------------------------------------------------------


@dataclass
class OracleSolution:
    fields: dict[tuple[str, str], GridField]
    velocity: dict[str, GridField] = field(default_factory=dict)
    elapsed: float = 0.0
    info: dict[str, float] = field(default_factory=dict)


def _series_params(case: CaseSpec) -> Series1DParams:
    tp = case.transport
    u = tp.u[0]
    return Series1DParams(case.L, u, dispersion(tp, abs(u)), case.c_bc["x0"].value)


def _strip_params(case: CaseSpec) -> Analytic2DParams:
    tp = case.transport
    ux, uy = tp.u
    if uy != 0:
        raise ValueError("the strip solution needs flow along x only")
    inj = case.c_bc["x0"]
    y1, y2 = inj.segment if inj.segment is not None else (0.0, case.W)
    U = abs(ux)
    return Analytic2DParams(case.W, y1, y2, ux, dispersion(tp, U, 0), dispersion(tp, U, 1), inj.value)


def _refined(n: int, r: int) -> int:
    return (n - 1) * r + 1


def fdm_solution(case: CaseSpec, nx: int, ny: int, times) -> tuple[dict, dict, dict]:
    """Pressure, velocity and concentration snapshots on an nx-by-ny node grid."""
    if case.dim != 2:
        raise ValueError("the finite-difference reference is 2D only")
    extent = (0.0, 0.0, case.L, case.W)
    tp = case.transport
    out: dict[str, GridField] = {}
    info: dict[str, float] = {}
    if case.coupled:
        corner = [a.value for a in case.anchors if a.field == "P"]
        P, pinfo = fdm_pressure(case.permeability, case.p_bc, nx, ny, extent, tp.mu_phi,
                                corner=corner[0] if corner else None, return_info=True)
        info["pressure_iterations"] = pinfo["iterations"]
        z = zeta_on_grid(case.permeability, tp.mu_phi, nx, ny, extent)
        ux, uy = darcy_on_grid(P, z)
        out["P"] = P
    else:
        ux = np.full((ny, nx), tp.u[0])
        uy = np.full((ny, nx), tp.u[1])
    U = np.hypot(ux, uy)
    res = fdm_transport((ux, uy), dispersion(tp, U, 0), dispersion(tp, U, 1), case.c_bc,
                        ic=case.c_initial, nx=nx, ny=ny, extent=extent, t_end=max(times), snapshots=times)
    info["transport_steps"] = res.steps
    vel = {"ux": GridField(ux, extent), "uy": GridField(uy, extent), "U": GridField(U, extent)}
    return out | {f"C@{t!r}": res.snapshots[float(t)] for t in times}, vel, info


def oracle_solution(case: CaseSpec, refine: int = 2) -> OracleSolution:
    """Reference fields on the case's evaluation grids."""
    t0 = time.perf_counter()
    fields: dict[tuple[str, str], GridField] = {}
    velocity: dict[str, GridField] = {}
    info: dict[str, float] = {}
    if case.oracle == "analytic_1d":
        p = _series_params(case)
        for g in evaluation_grids(case):
            pts = grid_points(g, case)
            fields[("C", snapshot_label(g.time))] = g.with_values(analytic_1d_approx(pts[:, 0], pts[:, 1], p))
    elif case.oracle == "analytic_2d":
        p = _strip_params(case)
        for g in evaluation_grids(case):
            pts = grid_points(g, case)
            fields[("C", snapshot_label(g.time))] = g.with_values(analytic_2d(pts[:, 0], pts[:, 1], pts[:, 2], p))
    else:
        nx, ny = case.grid
        raw, vel, info = fdm_solution(case, _refined(nx, refine), _refined(ny, refine), case.snapshots)
        for t in case.snapshots:
            label = snapshot_label(t)
            c = raw[f"C@{t!r}"].restrict(nx, ny)
            fields[("C", label)] = GridField(c.values, c.extent, t)
            if "P" in raw:
                p = raw["P"].restrict(nx, ny)
                fields[("P", label)] = GridField(p.values, p.extent, t)
        velocity = {k: v.restrict(nx, ny) for k, v in vel.items()}
    return OracleSolution(fields, velocity, time.perf_counter() - t0, info)


# -- runs ----------------------------------------------------------------------------


@dataclass
class RunArtifacts:
    case: str
    out_dir: Path | None
    checkpoint: Path | None
    predicted: dict[tuple[str, str], GridField]
    oracle: dict[tuple[str, str], GridField]
    error: dict[tuple[str, str], GridField]
    mse: dict[tuple[str, str], float]
    report: TrainingReport | None
    velocity: dict[str, GridField] = field(default_factory=dict)
    oracle_velocity: dict[str, GridField] = field(default_factory=dict)
    timing: list[tuple[str, float]] = field(default_factory=list)
    model: TrainedModel | None = None

    def max_error(self, name: str) -> float:
        return max(float(e.values.max()) for (f, _), e in self.error.items() if f == name)

    def final_mse(self, name: str) -> float:
        """MSE of ``name`` at the last snapshot (the space-time grid for 1D cases)."""
        keys = [k for k in self.mse if k[0] == name]
        if (name, SPACE_TIME) in self.mse:
            return self.mse[(name, SPACE_TIME)]
        return self.mse[keys[-1]]


def predict_fields(model: TrainedModel) -> tuple[dict, dict]:
    case = model.case
    pred: dict[tuple[str, str], GridField] = {}
    velocity: dict[str, GridField] = {}
    for g in evaluation_grids(case):
        pts = grid_points(g, case)
        out = model.predict(pts)
        for name in case.fields:
            pred[(name, snapshot_label(g.time))] = g.with_values(out[name])
    if case.coupled:
        g = spatial_grid(case, case.snapshots[-1])
        ux, uy, U = model.velocity(grid_points(g, case))
        velocity = {"ux": g.with_values(ux), "uy": g.with_values(uy), "U": g.with_values(U)}
    return pred, velocity


def evaluate_model(model: TrainedModel, oracle: OracleSolution | None = None, refine: int = 2,
                   report: TrainingReport | None = None) -> RunArtifacts:
    oracle = oracle or oracle_solution(model.case, refine)
    pred, vel = predict_fields(model)
    err = {k: pointwise_error(pred[k], oracle.fields[k]) for k in pred}
    scores = {k: mse(pred[k], oracle.fields[k]) for k in pred}
    return RunArtifacts(model.case.name, None, None, pred, oracle.fields, err, scores, report, vel,
                        oracle.velocity, [("oracle_s", oracle.elapsed)], model)


def write_artifacts(art: RunArtifacts, out_dir: str | Path, params: ParameterSet | None = None) -> RunArtifacts:
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    if params is not None:
        art.checkpoint = out / "model.ppnn"
        save_checkpoint(params, art.checkpoint)
    for kind, group in (("pred", art.predicted), ("oracle", art.oracle), ("error", art.error)):
        for (name, label), g in group.items():
            write_csv(g, out / "fields" / f"{name}_{label}_{kind}.csv")
    for name, g in art.velocity.items():
        write_csv(g, out / "fields" / f"{name}_pred.csv")
    for name, g in art.oracle_velocity.items():
        write_csv(g, out / "fields" / f"{name}_oracle.csv")
    if art.report is not None:
        art.report.write_history(out / "history.csv")
    export_report([art], out / "report.txt")
    art.out_dir = out
    return art


def run_case(bundle: CaseBundle, seed: int | None = None, out_dir: str | Path | None = None,
             refine: int = 2, log_every: int = 0) -> RunArtifacts:
    """Train ``bundle`` and compare against its reference solution.

    With ``out_dir`` every artifact is written there; a diverged run still
    leaves a report naming the offending loss term before the error propagates.
    """
    if seed is not None:
        bundle = bundle.replace(seed=seed)
    try:
        model, report = train_case(bundle, log_every=log_every)
    except TrainingDivergence as exc:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            Path(out_dir, "report.txt").write_text(
                f"case={bundle.case.name}\nseed={bundle.train.seed}\ndiverged=true\nterm={exc.term}\n")
        raise
    art = evaluate_model(model, refine=refine, report=report)
    art.timing.insert(0, ("train_s", report.train_time))
    if out_dir is not None:
        write_artifacts(art, out_dir, model.params)
    return art


def load_model(case: CaseSpec, checkpoint: str | Path) -> TrainedModel:
    params = load_checkpoint(checkpoint)
    if params.config.input_dim != case.input_dim or params.config.output_dim != len(case.fields):
        raise ValueError(f"checkpoint {checkpoint} does not match case {case.name}")
    return TrainedModel(case, params)


# -- activation comparison -----------------------------------------------------------


@dataclass
class ActivationComparison:
    case: str
    rows: list[dict]  # activation, seed, field, max_error, mse
    runs: dict[tuple[str, int], RunArtifacts] = field(default_factory=dict, repr=False)

    def worst(self, activation: str, name: str) -> float:
        return max(r["max_error"] for r in self.rows if r["activation"] == activation and r["field"] == name)

    def ratio(self, name: str) -> float:
        """Tanh over sine worst-case pointwise error for ``name``."""
        return self.worst("tanh", name) / self.worst("sine", name)

    def to_text(self) -> str:
        lines = [f"case={self.case}", "activation,seed,field,max_error,mse"]
        lines += [f"{r['activation']},{r['seed']},{r['field']},{r['max_error']!r},{r['mse']!r}" for r in self.rows]
        fields = sorted({r["field"] for r in self.rows})
        acts = {r["activation"] for r in self.rows}
        if {"sine", "tanh"} <= acts:
            lines += [f"ratio_{f}={self.ratio(f)!r}" for f in fields]
        return "\n".join(lines) + "\n"


def compare_activations(bundle: CaseBundle, seeds=(0,), refine: int = 2, out_dir: str | Path | None = None,
                        oracle: OracleSolution | None = None) -> ActivationComparison:
    """Train sine and tanh twins with identical budgets and seeds."""
    if not bundle.case.coupled:
        raise ValueError("activation comparison needs a pressure-coupled case")
    oracle = oracle or oracle_solution(bundle.case, refine)
    rows, runs = [], {}
    for act in (Activation.SINE, Activation.TANH):
        for seed in seeds:
            b = bundle.with_activation(act).replace(seed=seed)
            model, report = train_case(b)
            art = evaluate_model(model, oracle, report=report)
            runs[(act.value, seed)] = art
            if out_dir is not None:
                write_artifacts(art, Path(out_dir) / f"{act.value}_seed{seed}", model.params)
            for name in bundle.case.fields:
                rows.append({"activation": act.value, "seed": seed, "field": name,
                             "max_error": art.max_error(name), "mse": art.final_mse(name)})
    cmp = ActivationComparison(bundle.case.name, rows, runs)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        Path(out_dir, "compare.txt").write_text(cmp.to_text())
    return cmp


# -- timing ----------------------------------------------------------------------------


@dataclass
class TimingTable:
    case: str
    grid: tuple[int, int]
    inference_s: float
    fdm_s: float
    fdm_info: dict[str, float]

    @property
    def speedup(self) -> float:
        return self.fdm_s / self.inference_s

    def to_text(self) -> str:
        lines = [f"case={self.case}", f"grid={self.grid[0]}x{self.grid[1]}",
                 f"inference_s={self.inference_s!r}", f"fdm_s={self.fdm_s!r}", f"speedup={self.speedup!r}"]
        lines += [f"fdm_{k}={v!r}" for k, v in self.fdm_info.items()]
        return "\n".join(lines) + "\n"


def inference_seconds(model: TrainedModel, points: np.ndarray, repeats: int = 5) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.predict(points)
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark(bundle: CaseBundle, model: TrainedModel | None = None, repeats: int = 3) -> TimingTable:
    """Network inference versus a full finite-difference solve on the evaluation grid.

    Training time is excluded. Inference cost does not depend on weight values,
    so an untrained network of the same architecture is timed when ``model`` is None.
    """
    case = bundle.case
    if model is None:
        model = TrainedModel(case, init_network(bundle.net, bundle.train.seed))
    g = spatial_grid(case, case.snapshots[-1])
    pts = grid_points(g, case)
    t_inf = inference_seconds(model, pts, repeats)
    nx, ny = case.grid
    t_fdm, info = math.inf, {}
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, _, info = fdm_solution(case, nx, ny, (case.snapshots[-1],))
        t_fdm = min(t_fdm, time.perf_counter() - t0)
    return TimingTable(case.name, (nx, ny), t_inf, t_fdm, info)


# -- export ------------------------------------------------------------------------------


def export_field(g: GridField, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_csv(g, path)


def export_report(artifacts, path: str | Path) -> None:
    """key=value header per run, then one ``field,snapshot,mse,max_error`` row per pair."""
    if isinstance(artifacts, RunArtifacts):
        artifacts = [artifacts]
    blocks = []
    for art in artifacts:
        lines = [f"case={art.case}"]
        if art.checkpoint is not None:
            lines.append(f"checkpoint={art.checkpoint}")
        if art.report is not None:
            lines += art.report.to_text().splitlines()
        lines += [f"time_{k}={v:.6f}" for k, v in art.timing]
        lines.append("field,snapshot,mse,max_error")
        for key, value in art.mse.items():
            lines.append(f"{key[0]},{key[1]},{value!r},{float(art.error[key].values.max())!r}")
        blocks.append("\n".join(lines))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n\n".join(blocks) + ("\n" if blocks else ""))


def read_report_rows(path: str | Path) -> list[tuple[str, str, float, float]]:
    rows, table = [], False
    for line in Path(path).read_text().splitlines():
        if line == "field,snapshot,mse,max_error":
            table = True
        elif not line.strip():
            table = False
        elif table:
            f, s, m, e = line.split(",")
            rows.append((f, s, float(m), float(e)))
    return rows
