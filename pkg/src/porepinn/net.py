"""Fully connected sine (or tanh) network with exact input-derivative jets.

Jets carry the value, the first derivative along every input coordinate and
the diagonal second derivatives. They are pushed forward layer by layer in
closed form; parameter gradients come from reverse mode (torch autograd) over
that jet program.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

DTYPE = torch.float64
FLATTEN_ORDER_VERSION = 1


class Activation(str, enum.Enum):
    SINE = "sine"
    TANH = "tanh"


class ConfigError(ValueError):
    """Invalid network or case configuration."""


class TrainingDivergence(FloatingPointError):
    """A loss term became NaN or infinite."""

    def __init__(self, term: str, value: float = float("nan")):
        super().__init__(f"non-finite loss term {term!r}: {value}")
        self.term = term
        self.value = value


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    activation: Activation = Activation.SINE
    first_layer_frequency: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        object.__setattr__(self, "activation", Activation(self.activation))
        if not self.hidden_widths:
            raise ConfigError("hidden_widths must be non-empty")
        if self.input_dim < 1 or self.output_dim < 1 or min(self.hidden_widths) < 1:
            raise ConfigError(f"all layer widths must be >= 1, got {self.widths}")
        if not self.first_layer_frequency > 0:
            raise ConfigError("first_layer_frequency must be positive")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]

    @property
    def n_params(self) -> int:
        return sum(n * m + n for n, m in self.layer_shapes)


@dataclass(frozen=True)
class ParameterSet:
    """Weights and biases per layer.

    Flatten order: for each layer in turn, W (row-major) then b.
    """

    config: NetworkConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        shapes = self.config.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ConfigError("layer count does not match config")
        for W, b, (n, m) in zip(self.weights, self.biases, shapes):
            if W.shape != (n, m) or b.shape != (n,):
                raise ConfigError(f"bad layer shape {W.shape}/{b.shape}, want {(n, m)}")

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts).astype(np.float64)

    @classmethod
    def unflatten(cls, config: NetworkConfig, vec: np.ndarray, seed: int | None = None) -> "ParameterSet":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (config.n_params,):
            raise ConfigError(f"expected {config.n_params} parameters, got {vec.shape}")
        weights, biases, i = [], [], 0
        for n, m in config.layer_shapes:
            weights.append(vec[i : i + n * m].reshape(n, m).copy())
            i += n * m
            biases.append(vec[i : i + n].copy())
            i += n
        return cls(config, tuple(weights), tuple(biases), seed)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.flatten(), other.flatten())


class Jet(NamedTuple):
    """value: (N, out); d1: (N, in, out); d2: (N, k, out) diagonal second
    derivatives of the leading k inputs (k = in unless requested otherwise);
    dxy: optional (N, out) mixed derivative of inputs 0 and 1.
    Works for numpy or torch arrays."""

    value: object
    d1: object
    d2: object
    dxy: object = None

    def component(self, k: int) -> "Jet":
        """Jet of output k alone, with the output axis dropped."""
        return Jet(self.value[:, k], self.d1[:, :, k],
                   None if self.d2 is None else self.d2[:, :, k],
                   None if self.dxy is None else self.dxy[:, k])


def init_network(config: NetworkConfig, seed: int) -> ParameterSet:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    shapes = config.layer_shapes
    for i, (n, m) in enumerate(shapes):
        if config.activation is Activation.SINE:
            if i == 0:
                bound = config.first_layer_frequency / m
            else:
                bound = np.sqrt(6.0 / m)
        else:
            bound = np.sqrt(6.0 / (n + m))
        weights.append(rng.uniform(-bound, bound, size=(n, m)))
        biases.append(np.zeros(n))
    return ParameterSet(config, tuple(weights), tuple(biases), seed)


def _layers(config: NetworkConfig, theta: torch.Tensor) -> list[tuple[torch.Tensor, torch.Tensor]]:
    out, i = [], 0
    for n, m in config.layer_shapes:
        W = theta[i : i + n * m].view(n, m)
        i += n * m
        out.append((W, theta[i : i + n]))
        i += n
    return out


def _act(kind: Activation):
    if kind is Activation.SINE:
        return torch.sin, torch.cos, lambda s, c: -s
    # tanh: s' = 1 - s^2, s'' = -2 s (1 - s^2)
    return torch.tanh, lambda z: 1 - torch.tanh(z) ** 2, lambda s, c: -2 * s * c


def _check_inputs(config: NetworkConfig, x) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(x, dtype=np.float64) if not torch.is_tensor(x) else x, dtype=DTYPE)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ConfigError(f"expected points with {config.input_dim} coordinates, got shape {tuple(x.shape)}")
    return x


def torch_forward(config: NetworkConfig, theta: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    layers = _layers(config, theta)
    act = _act(config.activation)[0]
    a = x
    for W, b in layers[:-1]:
        a = act(a @ W.T + b)
    W, b = layers[-1]
    return a @ W.T + b


def torch_jet(config: NetworkConfig, theta: torch.Tensor, x: torch.Tensor,
              order: int = 2, d2_axes: int | None = None, cross: bool = False) -> Jet:
    """Jet of the network at points x (N, in), differentiable w.r.t. theta.

    ``order=1`` skips second derivatives; ``d2_axes`` limits them to the
    leading inputs (spatial axes come before time); ``cross`` adds d2/dx0dx1.
    """
    layers = _layers(config, theta)
    f, df, ddf = _act(config.activation)
    n, d = x.shape
    k = 0 if order < 2 else (d if d2_axes is None else d2_axes)
    # channel stack: [d/dx_1..d/dx_d, d2/dx_1^2..d2/dx_k^2, (d2/dx0dx1)]
    ch = d + k + (1 if cross else 0)
    a = x
    da = torch.zeros(n, ch, d, dtype=x.dtype)
    da[:, :d, :] = torch.eye(d, dtype=x.dtype)
    for W, b in layers[:-1]:
        z = a @ W.T + b
        dz = da @ W.T
        s = f(z)
        c = df(z)[:, None, :]
        first = dz[:, :d, :]
        parts = [c * first]
        if k:
            parts.append(ddf(s[:, None, :], c) * first[:, :k] ** 2 + c * dz[:, d : d + k])
        if cross:
            parts.append(ddf(s[:, None, :], c) * first[:, 0:1] * first[:, 1:2] + c * dz[:, d + k :])
        a = s
        da = torch.cat(parts, dim=1) if len(parts) > 1 else parts[0]
    W, b = layers[-1]
    out = da @ W.T
    return Jet(a @ W.T + b, out[:, :d], out[:, d : d + k] if order >= 2 else None,
               out[:, d + k] if cross else None)


def _theta(params: ParameterSet) -> torch.Tensor:
    return torch.from_numpy(params.flatten())


def forward(params: ParameterSet, x_norm) -> np.ndarray:
    """Raw network outputs at normalized points; (N, out) or (out,) for one point."""
    single = np.ndim(x_norm) == 1
    x = _check_inputs(params.config, x_norm)
    with torch.no_grad():
        y = torch_forward(params.config, _theta(params), x).numpy()
    return y[0] if single else y


def forward_jet(params: ParameterSet, x_norm, cross: bool = False) -> Jet:
    """Exact value, gradient and diagonal Hessian at normalized points."""
    single = np.ndim(x_norm) == 1
    x = _check_inputs(params.config, x_norm)
    with torch.no_grad():
        jet = torch_jet(params.config, _theta(params), x, cross=cross)
    out = Jet(*(None if t is None else t.numpy() for t in jet))
    if single:
        out = Jet(*(None if t is None else t[0] for t in out))
    return out


class JetEvaluator:
    """Handle passed to loss functionals: maps point arrays to differentiable jets."""

    def __init__(self, config: NetworkConfig, theta: torch.Tensor):
        self.config = config
        self.theta = theta

    def jet(self, x, **kw) -> Jet:
        return torch_jet(self.config, self.theta, _check_inputs(self.config, x), **kw)

    def value(self, x) -> torch.Tensor:
        return torch_forward(self.config, self.theta, _check_inputs(self.config, x))


LossFunctional = Callable[[JetEvaluator], "torch.Tensor | dict[str, torch.Tensor]"]


def loss_gradient(params: ParameterSet | tuple[NetworkConfig, np.ndarray], loss: LossFunctional) -> tuple[float, np.ndarray]:
    """Evaluate ``loss`` and its gradient over the flattened parameters.

    ``loss`` may return a scalar tensor or a dict of labelled scalar terms that
    are summed; a non-finite term raises TrainingDivergence naming it.
    """
    if isinstance(params, ParameterSet):
        config, vec = params.config, params.flatten()
    else:
        config, vec = params
    theta = torch.tensor(vec, dtype=DTYPE, requires_grad=True)
    out = loss(JetEvaluator(config, theta))
    terms = out if isinstance(out, dict) else {"loss": out}
    total = None
    for name, term in terms.items():
        v = float(term.detach())
        if not np.isfinite(v):
            raise TrainingDivergence(name, v)
        total = term if total is None else total + term
    total.backward()
    return float(total.detach()), theta.grad.numpy().copy()


# -- checkpoints -----------------------------------------------------------

_MAGIC = b"PPNN"


def save_checkpoint(params: ParameterSet, path: str | Path) -> None:
    """Binary checkpoint: text header line then little-endian float64 vector."""
    c = params.config
    header = (
        f"version={FLATTEN_ORDER_VERSION} input_dim={c.input_dim} "
        f"hidden={','.join(map(str, c.hidden_widths))} output_dim={c.output_dim} "
        f"activation={c.activation.value} omega0={c.first_layer_frequency!r} "
        f"seed={params.seed if params.seed is not None else -1}"
    ).encode()
    vec = params.flatten()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(header)) + header)
        fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> ParameterSet:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", blob[4:8])
    fields = dict(kv.split("=", 1) for kv in blob[8 : 8 + hlen].decode().split())
    if int(fields["version"]) != FLATTEN_ORDER_VERSION:
        raise ValueError(f"{path}: unsupported flatten order version {fields['version']}")
    config = NetworkConfig(
        input_dim=int(fields["input_dim"]),
        hidden_widths=tuple(int(w) for w in fields["hidden"].split(",")),
        output_dim=int(fields["output_dim"]),
        activation=Activation(fields["activation"]),
        first_layer_frequency=float(fields["omega0"]),
    )
    seed = int(fields["seed"])
    vec = np.frombuffer(blob[8 + hlen :], dtype="<f8").astype(np.float64)
    return ParameterSet.unflatten(config, vec, None if seed < 0 else seed)


def count_params(widths: Sequence[int]) -> int:
    return sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1))
