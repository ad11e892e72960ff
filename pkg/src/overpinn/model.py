"""Fourier-feature MLP used as the PINN trial function.

Inputs are split into embedded coordinates ``x_e`` and pass-through
coordinates.  Features are ``[cos(B x_e), sin(B x_e), pass-through]`` and
feed a tanh MLP with a linear head.  ``B`` is fixed at initialisation:
Gaussian entries in ``gaussian`` mode, or axis-aligned integer wavenumbers in
``integer-periodic`` mode, which makes the network exactly 2*pi-periodic in
every embedded coordinate.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import tape
from .autodiff.jets import IndexSet, cos_jet, sin_jet

FORMAT_VERSION = 1
MAGIC = "overpinn-checkpoint"
EMBEDDING_MODES = ("gaussian", "integer-periodic")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 2
    output_dim: int = 1
    hidden_dim: int = 256
    hidden_layers: int = 4
    embedding_dim: int = 256
    embedding_scale: float = 1.0
    embedding_mode: str = "gaussian"
    embedded_inputs: tuple[int, ...] | None = None
    seed: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.embedded_inputs is None:
            object.__setattr__(self, "embedded_inputs", tuple(range(self.input_dim)))
        object.__setattr__(self, "embedded_inputs", tuple(int(i) for i in self.embedded_inputs))
        if min(self.input_dim, self.output_dim, self.hidden_dim, self.hidden_layers) < 1:
            raise ValueError("network dimensions must be positive")
        if self.embedding_dim < 0 or self.embedding_dim % 2:
            raise ValueError("embedding_dim must be even")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        if any(i < 0 or i >= self.input_dim for i in self.embedded_inputs):
            raise ValueError("embedded_inputs out of range")
        if self.embedding_mode == "integer-periodic" and self.embedded_inputs and \
                (self.embedding_dim // 2) % len(self.embedded_inputs):
            raise ValueError("embedding_dim/2 must be divisible by the number of embedded inputs")

    @property
    def passthrough_inputs(self) -> tuple[int, ...]:
        if self.embedding_dim == 0:
            return tuple(range(self.input_dim))
        return tuple(i for i in range(self.input_dim) if i not in self.embedded_inputs)

    @property
    def feature_dim(self) -> int:
        return self.embedding_dim + len(self.passthrough_inputs)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.feature_dim] + [self.hidden_dim] * self.hidden_layers + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    def parameter_count(self) -> int:
        b = (self.embedding_dim // 2) * len(self.embedded_inputs)
        return b + sum(o * i + o for o, i in self.layer_shapes())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["embedded_inputs"] = list(self.embedded_inputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NetworkConfig:
        d = dict(d)
        if d.get("embedded_inputs") is not None:
            d["embedded_inputs"] = tuple(d["embedded_inputs"])
        return cls(**d)


@dataclass
class Parameters:
    """Embedding matrix plus per-layer weights and biases.

    Flat layout order: ``B, W0, b0, W1, b1, ...``.  Weights and biases may be
    :class:`~overpinn.autodiff.tape.Var` objects while a loss is traced.
    """

    config: NetworkConfig
    B: np.ndarray
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def arrays(self) -> list:
        out = [self.B]
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.ravel(tape.value(a)) for a in self.arrays()])

    def trainable_mask(self) -> np.ndarray:
        mask = np.ones(self.config.parameter_count(), dtype=bool)
        mask[:self.B.size] = False
        return mask

    @classmethod
    def unflatten(cls, config: NetworkConfig, flat: np.ndarray) -> Parameters:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != config.parameter_count():
            raise ValueError(f"expected {config.parameter_count()} values, got {flat.size}")
        k = (config.embedding_dim // 2, len(config.embedded_inputs))
        pos = k[0] * k[1]
        B = flat[:pos].reshape(k).copy()
        Ws, bs = [], []
        for o, i in config.layer_shapes():
            Ws.append(flat[pos:pos + o * i].reshape(o, i).copy())
            pos += o * i
            bs.append(flat[pos:pos + o].copy())
            pos += o
        return cls(config, B, Ws, bs)

    def traced(self) -> Parameters:
        """Copy whose weights and biases are fresh tape leaves."""
        return Parameters(self.config, self.B,
                          [tape.Var(tape.value(W)) for W in self.weights],
                          [tape.Var(tape.value(b)) for b in self.biases])

    def gradient(self) -> np.ndarray:
        """Flat gradient of a traced copy after :func:`tape.backward` (zeros for B)."""
        parts = [np.zeros(self.B.size)]
        for W, b in zip(self.weights, self.biases):
            for a in (W, b):
                g = a.grad if isinstance(a, tape.Var) and a.grad is not None else np.zeros(np.shape(tape.value(a)))
                parts.append(np.ravel(g))
        return np.concatenate(parts)

    def copy(self) -> Parameters:
        return Parameters.unflatten(self.config, self.flatten())


def init(config: NetworkConfig) -> Parameters:
    """Deterministic initialisation: fixed embedding, Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    half = config.embedding_dim // 2
    ne = len(config.embedded_inputs)
    if config.embedding_mode == "gaussian":
        B = rng.normal(0.0, 1.0, size=(half, ne)) * config.embedding_scale
    else:
        B = np.zeros((half, ne))
        per = half // ne if ne else 0
        for c in range(ne):
            B[c * per:(c + 1) * per, c] = np.arange(1, per + 1)
    Ws, bs = [], []
    for o, i in config.layer_shapes():
        limit = np.sqrt(6.0 / (i + o))
        Ws.append(rng.uniform(-limit, limit, size=(o, i)))
        bs.append(np.zeros(o))
    return Parameters(config, B, Ws, bs)


def features_jet(params: Parameters, points: np.ndarray, index_set: IndexSet) -> np.ndarray:
    """Jet of the embedding features at ``points`` (N, d) -> (M, N, F); constant in the weights."""
    cfg = params.config
    Z = index_set.seed(points)
    parts = []
    if cfg.embedding_dim:
        Ze = Z[..., list(cfg.embedded_inputs)]
        A = np.empty(Z.shape[:-1] + (params.B.shape[0],))
        A[0] = Ze[0] @ params.B.T
        if len(index_set) > 1:
            A[1:] = Ze[1:] @ params.B.T
        parts += [cos_jet(A, index_set.table), sin_jet(A, index_set.table)]
    if cfg.passthrough_inputs:
        parts.append(Z[..., list(cfg.passthrough_inputs)])
    return np.concatenate(parts, axis=-1)


def network_jet(params: Parameters, points: np.ndarray, index_set: IndexSet):
    """Output jet (M, N, n_out); a tape Var when ``params`` is traced."""
    H = features_jet(params, points, index_set)
    n = len(params.weights)
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        H = tape.jet_linear(H, W, b)
        if k < n - 1:
            H = tape.tanh_jet(H, index_set.table)
    return H


def _check_points(params: Parameters, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != params.config.input_dim:
        raise ValueError(f"input dimension {pts.shape[-1]} != {params.config.input_dim}")
    return pts, single


def forward(params: Parameters, points) -> np.ndarray:
    """Network output at one point (d,) -> (n_out,) or a batch (N, d) -> (N, n_out)."""
    pts, single = _check_points(params, points)
    out = tape.value(network_jet(params, pts, IndexSet([], params.config.input_dim)))[0]
    return out[0] if single else out


def forward_traced(params: Parameters, x):
    """Plain forward pass built from elementwise tape ops (used for input adjoints)."""
    cfg = params.config
    parts = []
    if cfg.embedding_dim:
        xe = tape.getitem(x, (slice(None), list(cfg.embedded_inputs))) if isinstance(x, tape.Var) \
            else x[:, list(cfg.embedded_inputs)]
        a = tape.linear(xe, params.B)
        parts += [tape.cos(a), tape.sin(a)]
    if cfg.passthrough_inputs:
        parts.append(tape.getitem(x, (slice(None), list(cfg.passthrough_inputs)))
                     if isinstance(x, tape.Var) else x[:, list(cfg.passthrough_inputs)])
    h = tape.concat(parts, axis=-1)
    n = len(params.weights)
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = tape.linear(h, W, b)
        if k < n - 1:
            h = tape.tanh(h)
    return h


# checkpoints ---------------------------------------------------------------

def save(params: Parameters, path) -> None:
    """Header line (JSON) followed by the flat parameters as little-endian float64."""
    flat = params.flatten()
    header = {"format": MAGIC, "version": FORMAT_VERSION, "config": params.config.to_dict(),
              "seed": params.config.seed, "count": int(flat.size)}
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(flat.astype("<f8").tobytes())


def load(path) -> Parameters:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing checkpoint header")
    try:
        header = json.loads(raw[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != MAGIC:
        raise CheckpointError("not an overpinn checkpoint")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    try:
        config = NetworkConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid network config: {exc}") from exc
    blob = raw[nl + 1:]
    count = config.parameter_count()
    if header.get("count") != count:
        raise CheckpointError("parameter count does not match config")
    if len(blob) != 8 * count:
        raise CheckpointError(f"truncated checkpoint: {len(blob)} bytes for {count} parameters")
    return Parameters.unflatten(config, np.frombuffer(blob, dtype="<f8"))


def jet_labels(index_set: IndexSet, names: Sequence[str]) -> list[str]:
    return [index_set.label(c, names) for c in index_set]
