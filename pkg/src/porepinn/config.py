"""Case configuration files.

Flat ``key = value`` lines under the section headers [domain], [physics],
[network], [training], [bc] and [output]. ``#`` starts a comment. Every key is
listed in ``KEYS``; anything else is rejected. ``[domain] preset = <name>``
starts from a built-in preset and the remaining keys override it.

Boundary conditions live in [bc] as ``<field>.<face>``::

    C.x0 = dirichlet 0.2 on 0.3..0.7 else 0
    C.x1 = neumann 0
    P.y0 = dirichlet 1.0
    anchors = P 0 0 0.55; P 1 0 0.55

Permeability is one of ``homogeneous <k>``, ``analytic <name> <k0> [params...]``
or ``raster <path>`` (relative to the config file).
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path

from .bc import FACES, FaceBC
from .cases import PRESETS, Anchor, Budget, CaseBundle, CaseSpec, LossWeights, TrainOptions, preset
from .lbfgs import LBFGSOptions
from .net import Activation, ConfigError, NetworkConfig
from .physics import Analytic, Homogeneous, Raster, TransportParams

KEYS: dict[str, dict[str, str]] = {
    "domain": {
        "preset": "built-in case to start from: " + ", ".join(PRESETS),
        "name": "case label used in reports",
        "dim": "spatial dimensions, 1 or 2",
        "L": "domain length along x (m)",
        "W": "domain width along y (m), 2D only",
        "T": "time horizon (s)",
        "grid": "evaluation nodes 'nx ny' (x by t in 1D)",
        "snapshots": "evaluation times (s), space separated",
        "oracle": "analytic_1d, analytic_2d or fdm",
    },
    "physics": {
        "D0": "molecular diffusion along x (m^2/s)",
        "D0_y": "molecular diffusion along y, defaults to D0",
        "alpha": "dispersivity (m)",
        "u": "constant velocity components (m/s); omit for pressure-coupled cases",
        "phi": "porosity",
        "mu_phi": "viscosity times porosity (Pa s)",
        "C0": "injection concentration, also the concentration scale",
        "c_initial": "initial concentration",
        "permeability": "homogeneous <k> | analytic <name> <k0> [...] | raster <path> | none",
    },
    "network": {
        "hidden": "hidden layer widths, space separated",
        "activation": "sine or tanh",
        "omega0": "first-layer frequency of sine networks",
    },
    "training": {
        "n_pde": "interior collocation points",
        "n_boundary_initial": "boundary plus initial points",
        "n_data": "data anchor points",
        "w_i": "initial-condition weight",
        "w_b": "boundary weight",
        "w_d": "data weight",
        "w_p": "PDE weight",
        "max_iters": "L-BFGS iteration cap",
        "memory": "L-BFGS history length",
        "tolerance": "stop when the loss drops below this",
        "grad_tolerance": "stop when the gradient norm drops below this",
        "warmup_steps": "Adam steps before L-BFGS",
        "warmup_lr": "Adam learning rate",
        "seed": "sampling and initialization seed",
    },
    "bc": {
        **{f"{f}.{face}": f"{f} condition on face {face}" for f in ("C", "P") for face in FACES},
        "anchors": "pinned values '<field> <x> <y> <value>' separated by ';'",
    },
    "output": {
        "dir": "run directory",
        "oracle_refine": "FDM oracle refinement factor relative to the evaluation grid",
    },
}


@dataclass(frozen=True)
class OutputOptions:
    dir: str | None = None
    oracle_refine: int = 2

    def __post_init__(self):
        if self.oracle_refine < 1:
            raise ConfigError("oracle_refine must be >= 1")


@dataclass(frozen=True)
class LoadedConfig:
    bundle: CaseBundle
    output: OutputOptions


def _lines_of(text: str) -> dict[tuple[str, str], int]:
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
        elif section and "=" in s and not s.startswith("#"):
            where[(section, s.split("=", 1)[0].strip())] = n
    return where


def _floats(s: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in s.split())
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {s!r}") from None


def _float(s: str, what: str) -> float:
    vals = _floats(s, what)
    if len(vals) != 1:
        raise ConfigError(f"{what}: expected one number, got {s!r}")
    return vals[0]


def _int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {s!r}") from None


def parse_bc(text: str, what: str = "bc") -> FaceBC:
    """``dirichlet V [on A..B [else W]]`` or ``neumann [G]``."""
    tok = text.split()
    if not tok:
        raise ConfigError(f"{what}: empty condition")
    kind = tok[0].lower()
    if kind == "neumann":
        if len(tok) > 2:
            raise ConfigError(f"{what}: neumann takes one value")
        return FaceBC("neumann", _float(tok[1], what) if len(tok) == 2 else 0.0)
    if kind != "dirichlet" or len(tok) not in (2, 4, 6):
        raise ConfigError(f"{what}: expected 'dirichlet V [on A..B [else W]]' or 'neumann [G]'")
    value = _float(tok[1], what)
    segment, outside = None, 0.0
    if len(tok) >= 4:
        if tok[2] != "on" or ".." not in tok[3]:
            raise ConfigError(f"{what}: segment must read 'on A..B'")
        a, b = tok[3].split("..", 1)
        segment = (_float(a, what), _float(b, what))
    if len(tok) == 6:
        if tok[4] != "else":
            raise ConfigError(f"{what}: expected 'else W' after the segment")
        outside = _float(tok[5], what)
    try:
        return FaceBC("dirichlet", value, segment, outside)
    except ConfigError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _anchors(text: str) -> tuple[Anchor, ...]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        tok = part.split()
        if len(tok) != 4 or tok[0] not in ("P", "C"):
            raise ConfigError(f"bc.anchors: expected '<P|C> x y value', got {part!r}")
        x, y, v = _floats(" ".join(tok[1:]), "bc.anchors")
        out.append(Anchor(tok[0], x, y, v))
    return tuple(out)


def _permeability(text: str, base: Path):
    tok = text.split()
    kind = tok[0].lower() if tok else ""
    if kind == "none":
        return None
    if kind == "homogeneous" and len(tok) == 2:
        return Homogeneous(_float(tok[1], "physics.permeability"))
    if kind == "analytic" and len(tok) >= 3:
        return Analytic(tok[1], _floats(" ".join(tok[2:]), "physics.permeability"))
    if kind == "raster" and len(tok) == 2:
        path = Path(tok[1])
        return Raster.read(path if path.is_absolute() else base / path)
    raise ConfigError(f"physics.permeability: cannot read {text!r}")


def _read(path: Path) -> tuple[configparser.ConfigParser, dict]:
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), strict=True, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate key {exc.option!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: key outside any section") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{path}:{lineno}: cannot parse line") from None
    lines = _lines_of(text)
    for section in cp.sections():
        if section not in KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in cp[section]:
            if key not in KEYS[section]:
                line = lines.get((section, key), "?")
                raise ConfigError(f"{path}:{line}: unknown key {section}.{key}")
    return cp, lines


def parse_case_config(path: str | Path) -> LoadedConfig:
    """Read a config file (or a preset name) into a validated bundle."""
    if str(path) in PRESETS and not Path(path).exists():
        return LoadedConfig(preset(str(path)), OutputOptions())
    path = Path(path)
    cp, _ = _read(path)

    def get(section, key):
        return cp.get(section, key, fallback=None) if cp.has_section(section) else None

    base = None
    if get("domain", "preset") is not None:
        base = preset(get("domain", "preset").strip())

    try:
        bundle = _build(get, base, path.parent)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = OutputOptions(
        dir=get("output", "dir"),
        oracle_refine=_int(get("output", "oracle_refine") or "2", "output.oracle_refine"),
    )
    return LoadedConfig(bundle, out)


def _require(value, what):
    if value is None:
        raise ConfigError(f"{what} is required (no preset to inherit from)")
    return value


def _build(get, base: CaseBundle | None, folder: Path) -> CaseBundle:
    bc_ = base.case if base else None

    # physics
    tp_kw = dataclasses.asdict(bc_.transport) if bc_ else {}
    for key in ("D0", "D0_y", "alpha", "phi", "mu_phi", "C0"):
        if get("physics", key) is not None:
            tp_kw[key] = _float(get("physics", key), f"physics.{key}")
    perm = bc_.permeability if bc_ else None
    if get("physics", "permeability") is not None:
        perm = _permeability(get("physics", "permeability"), folder)
        if perm is not None:
            tp_kw["u"] = None
    if get("physics", "u") is not None:
        if get("physics", "permeability") not in (None, "none") and perm is not None:
            raise ConfigError("physics.u: a constant velocity and a permeability field exclude each other")
        tp_kw["u"] = _floats(get("physics", "u"), "physics.u")
        perm = None
    if "D0" not in tp_kw:
        raise ConfigError("physics.D0 is required (no preset to inherit from)")
    transport = TransportParams(**tp_kw)

    # domain
    dim = _int(get("domain", "dim"), "domain.dim") if get("domain", "dim") else _require(bc_ and bc_.dim, "domain.dim")
    L = _float(get("domain", "L"), "domain.L") if get("domain", "L") else _require(bc_ and bc_.L, "domain.L")
    T = _float(get("domain", "T"), "domain.T") if get("domain", "T") else _require(bc_ and bc_.T, "domain.T")
    W = _float(get("domain", "W"), "domain.W") if get("domain", "W") else (bc_.W if bc_ else 1.0)
    grid = bc_.grid if bc_ else (101, 101)
    if get("domain", "grid"):
        g = tuple(_int(v, "domain.grid") for v in get("domain", "grid").split())
        if len(g) != 2:
            raise ConfigError("domain.grid: expected 'nx ny'")
        grid = g
    snapshots = bc_.snapshots if bc_ else (T,)
    if get("domain", "snapshots"):
        snapshots = _floats(get("domain", "snapshots"), "domain.snapshots")
    oracle = get("domain", "oracle") or (bc_.oracle if bc_ else ("analytic_1d" if dim == 1 else "fdm"))
    if oracle not in ("analytic_1d", "analytic_2d", "fdm"):
        raise ConfigError(f"domain.oracle: unknown oracle {oracle!r}")

    faces = FACES[:2] if dim == 1 else FACES
    c_bc = dict(bc_.c_bc) if bc_ and bc_.dim == dim else {}
    p_bc = dict(bc_.p_bc) if bc_ and bc_.p_bc and perm is not None else ({} if perm is not None else None)
    for face in FACES:
        for field, target in (("C", c_bc), ("P", p_bc)):
            text = get("bc", f"{field}.{face}")
            if text is None:
                continue
            if face not in faces:
                raise ConfigError(f"bc.{field}.{face}: face does not exist in {dim}D")
            if target is None:
                raise ConfigError(f"bc.{field}.{face}: pressure conditions need a permeability field")
            target[face] = parse_bc(text, f"bc.{field}.{face}")
    for face in faces:
        if face not in c_bc:
            raise ConfigError(f"bc.C.{face} is required")
        if p_bc is not None and face not in p_bc:
            raise ConfigError(f"bc.P.{face} is required")
    anchors = bc_.anchors if bc_ else ()
    if get("bc", "anchors") is not None:
        anchors = _anchors(get("bc", "anchors"))
    c_initial = bc_.c_initial if bc_ else 0.0
    if get("physics", "c_initial") is not None:
        c_initial = _float(get("physics", "c_initial"), "physics.c_initial")

    case = CaseSpec(
        name=get("domain", "name") or (bc_.name if bc_ else "custom"),
        dim=dim, L=L, W=W, T=T, transport=transport, c_bc=c_bc, permeability=perm, p_bc=p_bc,
        c_initial=c_initial, anchors=anchors, grid=grid, snapshots=snapshots, oracle=oracle,
    )

    # network
    net_base = base.net if base else None
    hidden = net_base.hidden_widths if net_base else None
    if get("network", "hidden"):
        hidden = tuple(_int(v, "network.hidden") for v in get("network", "hidden").split())
    hidden = _require(hidden, "network.hidden")
    act = get("network", "activation") or (net_base.activation.value if net_base else "sine")
    try:
        act = Activation(act.lower())
    except ValueError:
        raise ConfigError(f"network.activation: expected sine or tanh, got {act!r}") from None
    omega0 = net_base.first_layer_frequency if net_base else 3.0
    if get("network", "omega0"):
        omega0 = _float(get("network", "omega0"), "network.omega0")
    net = NetworkConfig(case.input_dim, tuple(hidden), len(case.fields), act, omega0)

    # training
    tr = base.train if base else TrainOptions(Budget(1000, 1000))

    def pick(key, conv, default):
        v = get("training", key)
        return default if v is None else conv(v, f"training.{key}")

    budget = Budget(pick("n_pde", _int, tr.budget.n_pde),
                    pick("n_boundary_initial", _int, tr.budget.n_boundary_initial),
                    pick("n_data", _int, tr.budget.n_data))
    w = tr.weights
    weights = LossWeights(pick("w_i", _float, w.w_i), pick("w_b", _float, w.w_b),
                          pick("w_d", _float, w.w_d), pick("w_p", _float, w.w_p))
    lb = tr.lbfgs
    lbfgs = LBFGSOptions(
        memory=pick("memory", _int, lb.memory), max_iters=pick("max_iters", _int, lb.max_iters),
        tolerance=pick("tolerance", _float, lb.tolerance),
        grad_tolerance=pick("grad_tolerance", _float, lb.grad_tolerance),
        c1=lb.c1, c2=lb.c2, max_line_search=lb.max_line_search, max_step=lb.max_step,
    )
    if lbfgs.memory < 0 or lbfgs.max_iters < 0:
        raise ConfigError("training.memory and training.max_iters must be >= 0")
    train = TrainOptions(budget, weights, lbfgs, pick("warmup_steps", _int, tr.warmup_steps),
                         pick("warmup_lr", _float, tr.warmup_lr), pick("seed", _int, tr.seed))
    return CaseBundle(case, net, train)


def dump_case_config(bundle: CaseBundle, output: OutputOptions | None = None) -> str:
    """Config text that parses back into ``bundle`` (raster fields are not serializable)."""
    case, net, tr = bundle.case, bundle.net, bundle.train
    tp = case.transport

    def num(v):
        return repr(float(v))

    def bc_text(c: FaceBC):
        if not c.is_dirichlet:
            return f"neumann {num(c.value)}"
        s = f"dirichlet {num(c.value)}"
        if c.segment is not None:
            s += f" on {num(c.segment[0])}..{num(c.segment[1])} else {num(c.outside)}"
        return s

    lines = ["[domain]", f"name = {case.name}", f"dim = {case.dim}", f"L = {num(case.L)}",
             f"W = {num(case.W)}", f"T = {num(case.T)}", f"grid = {case.grid[0]} {case.grid[1]}",
             "snapshots = " + " ".join(num(t) for t in case.snapshots), f"oracle = {case.oracle}", "",
             "[physics]", f"D0 = {num(tp.D0)}", f"alpha = {num(tp.alpha)}",
             f"phi = {num(tp.phi)}", f"mu_phi = {num(tp.mu_phi)}", f"C0 = {num(tp.C0)}",
             f"c_initial = {num(case.c_initial)}"]
    if tp.D0_y is not None:
        lines.append(f"D0_y = {num(tp.D0_y)}")
    perm = case.permeability
    if perm is None:
        lines.append("u = " + " ".join(num(v) for v in tp.u))
    elif isinstance(perm, Homogeneous):
        lines.append(f"permeability = homogeneous {num(perm.k)}")
    elif isinstance(perm, Analytic):
        lines.append(f"permeability = analytic {perm.name} " + " ".join(num(p) for p in perm.params))
    else:
        raise ConfigError("raster permeability cannot be written inline; reference the raster file")
    lines += ["", "[network]", "hidden = " + " ".join(map(str, net.hidden_widths)),
              f"activation = {net.activation.value}", f"omega0 = {num(net.first_layer_frequency)}", "",
              "[training]", f"n_pde = {tr.budget.n_pde}", f"n_boundary_initial = {tr.budget.n_boundary_initial}",
              f"n_data = {tr.budget.n_data}", f"w_i = {num(tr.weights.w_i)}", f"w_b = {num(tr.weights.w_b)}",
              f"w_d = {num(tr.weights.w_d)}", f"w_p = {num(tr.weights.w_p)}",
              f"max_iters = {tr.lbfgs.max_iters}", f"memory = {tr.lbfgs.memory}",
              f"tolerance = {num(tr.lbfgs.tolerance)}", f"grad_tolerance = {num(tr.lbfgs.grad_tolerance)}",
              f"warmup_steps = {tr.warmup_steps}", f"warmup_lr = {num(tr.warmup_lr)}", f"seed = {tr.seed}",
              "", "[bc]"]
    for face in case.faces:
        lines.append(f"C.{face} = {bc_text(case.c_bc[face])}")
        if case.p_bc:
            lines.append(f"P.{face} = {bc_text(case.p_bc[face])}")
    if case.anchors:
        lines.append("anchors = " + "; ".join(f"{a.field} {num(a.x)} {num(a.y)} {num(a.value)}"
                                              for a in case.anchors))
    if output is not None:
        lines += ["", "[output]"]
        if output.dir:
            lines.append(f"dir = {output.dir}")
        lines.append(f"oracle_refine = {output.oracle_refine}")
    return "\n".join(lines) + "\n"
