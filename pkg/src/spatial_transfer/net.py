"""Feed-forward ReLU network with hand-written backpropagation and Adam.

The default architecture maps the 139-dimensional basis embedding through
seven hidden layers of 100 ReLU units to one linear output.  All parameters
live in one contiguous float64 vector; ``NetworkParams.layers`` are views into
it, which keeps the optimizer a handful of vector operations per step.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArchitectureMismatch, DimensionMismatch, EmptyDataset, FormatError
from .numerics import derive_child

DEFAULT_DIMS = (139,) + (100,) * 7 + (1,)

MAGIC = b"SNTL"
FORMAT_VERSION = 1


@dataclass
class LayerParams:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)


class NetworkParams:
    """Weights and biases of every layer, backed by one flat vector."""

    def __init__(self, dims: Sequence[int], flat: np.ndarray | None = None):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) < 2:
            raise ValueError("a network needs at least an input and an output dimension")
        size = sum(o * i + o for i, o in zip(self.dims[:-1], self.dims[1:]))
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise DimensionMismatch(f"expected {size} parameters, got {flat.shape}")
        self.flat = flat
        self.layers = []
        pos = 0
        for i, o in zip(self.dims[:-1], self.dims[1:]):
            w = flat[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = flat[pos:pos + o]
            pos += o
            self.layers.append(LayerParams(w, b))

    @classmethod
    def from_layers(cls, layers: Sequence[LayerParams]) -> "NetworkParams":
        dims = [layers[0].weight.shape[1]]
        for k, layer in enumerate(layers):
            out_dim, in_dim = layer.weight.shape
            if in_dim != dims[-1] or layer.bias.shape != (out_dim,):
                raise DimensionMismatch(f"layer {k} is not chain-compatible")
            dims.append(out_dim)
        params = cls(dims)
        for dst, src in zip(params.layers, layers):
            dst.weight[...] = src.weight
            dst.bias[...] = src.bias
        return params

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.dims, self.flat.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.dims)

    @property
    def size(self) -> int:
        return self.flat.size

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.flat, other.flat)

    def __repr__(self):
        return f"NetworkParams(dims={self.dims}, size={self.size})"


def init_network(state: np.random.Generator, dims: Sequence[int] = DEFAULT_DIMS) -> NetworkParams:
    """He initialization: weights ~ N(0, 2 / in_dim), zero biases."""
    params = NetworkParams(dims)
    for layer in params.layers:
        out_dim, in_dim = layer.weight.shape
        layer.weight[...] = state.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim))
    return params


def forward(params: NetworkParams, x):
    """Network output for one input vector or a batch of row vectors.

    Returns ``(y, cache)``; ``cache`` holds each layer's input and
    pre-activation for :func:`backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != params.dims[0]:
        raise DimensionMismatch(f"network expects {params.dims[0]} inputs, got {h.shape[1]}")
    inputs, pre = [], []
    last = len(params.layers) - 1
    for k, layer in enumerate(params.layers):
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if k < last else z
    y = h[:, 0]
    return (float(y[0]) if single else y), (inputs, pre)


def predict(params: NetworkParams, x, chunk: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) <= chunk:
        return forward(params, x)[0]
    return np.concatenate([forward(params, x[i:i + chunk])[0] for i in range(0, len(x), chunk)])


def backward(params: NetworkParams, cache, residual, out: NetworkParams | None = None) -> NetworkParams:
    """Gradient of ``sum(0.5 * residual**2)`` with ``residual = y - target``.

    The ReLU derivative at exactly zero is taken as zero.  Pass ``out`` to
    write into an existing gradient buffer.
    """
    inputs, pre = cache
    grads = params.zeros_like() if out is None else out
    g = np.asarray(residual, dtype=np.float64).reshape(-1, 1)
    for k in range(len(params.layers) - 1, -1, -1):
        np.matmul(g.T, inputs[k], out=grads.layers[k].weight)
        np.sum(g, axis=0, out=grads.layers[k].bias)
        if k:
            g = (g @ params.layers[k].weight) * (pre[k - 1] > 0)
    return grads


# --------------------------------------------------------------------------
# optimization


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch_size: int = 64
    validation_fraction: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        # zero epochs is allowed: it is the identity fine-tune
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def _adam_update(theta, g, st: AdamState, cfg: TrainConfig, scratch):
    st.t += 1
    np.multiply(g, 1.0 - cfg.beta1, out=scratch)
    st.m *= cfg.beta1
    st.m += scratch
    np.multiply(g, g, out=scratch)
    scratch *= 1.0 - cfg.beta2
    st.v *= cfg.beta2
    st.v += scratch
    # lr * m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into scalars
    step = cfg.learning_rate / (1.0 - cfg.beta1**st.t)
    np.sqrt(st.v, out=scratch)
    scratch *= 1.0 / sqrt(1.0 - cfg.beta2**st.t)
    scratch += cfg.eps
    np.divide(st.m, scratch, out=scratch)
    scratch *= step
    theta -= scratch


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam step; returns new ``(params, state)`` and leaves the inputs untouched."""
    if grads.dims != params.dims or state.m.shape != params.flat.shape:
        raise DimensionMismatch("parameter, gradient and optimizer shapes differ")
    new = params.copy()
    st = AdamState(state.m.copy(), state.v.copy(), state.t)
    _adam_update(new.flat, grads.flat, st, cfg, np.empty_like(new.flat))
    return new, st


@dataclass
class TrainTrace:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_mse)

    def to_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        for i, tr in enumerate(self.train_mse):
            val = f"{self.val_mse[i]:.17g}" if self.val_mse else ""
            lines.append(f"{i + 1},{tr:.17g},{val}")
        return "\n".join(lines) + "\n"


def _mse(params, x, y) -> float:
    r = predict(params, x) - y
    return float(np.mean(r * r))


def validation_split(n: int, fraction: float, state: np.random.Generator):
    """Deterministic ``(train_idx, val_idx)``; no hold-out when it would leave either side empty."""
    n_val = int(np.floor(fraction * n))
    if n_val < 1 or n_val >= n:
        return np.arange(n), np.arange(0)
    perm = state.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(params: NetworkParams, design, targets, cfg: TrainConfig, state: np.random.Generator,
          record: bool = True):
    """Mini-batch Adam on the half mean squared error.

    Returns ``(trained_params, trace)``.  The input parameters are not
    modified.  Epoch ``k`` of the trace is the full-pass MSE after ``k``
    epochs of updates; ``record=False`` skips those passes and returns an
    empty trace (the parameters are the same either way).
    """
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDataset("no training rows")
    if x.shape != (len(y), params.dims[0]):
        raise DimensionMismatch(f"design has shape {x.shape}, expected ({len(y)}, {params.dims[0]})")
    train_idx, val_idx = validation_split(len(y), cfg.validation_fraction, derive_child(state, 0))
    shuffle = derive_child(state, 1)
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    theta = params.copy()
    grads = theta.zeros_like()
    opt = AdamState.fresh(theta.size)
    scratch = np.empty(theta.size)
    trace = TrainTrace()
    n = len(y_tr)
    for _ in range(cfg.epochs):
        order = shuffle.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            out, cache = forward(theta, x_tr[batch])
            backward(theta, cache, (out - y_tr[batch]) / len(batch), out=grads)
            _adam_update(theta.flat, grads.flat, opt, cfg, scratch)
        if not record:
            continue
        trace.train_mse.append(_mse(theta, x_tr, y_tr))
        if len(val_idx):
            trace.val_mse.append(_mse(theta, x_val, y_val))
    return theta, trace


# --------------------------------------------------------------------------
# persistence
#
# "SNTL" | u16 version | u16 layer count | per layer: u32 out, u32 in,
# out*in weights row-major, out biases (f64 little-endian) | u32 CRC32 of
# every preceding byte.


def weights_bytes(params: NetworkParams) -> bytes:
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(params.layers))]
    for layer in params.layers:
        out_dim, in_dim = layer.weight.shape
        parts.append(struct.pack("<II", out_dim, in_dim))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_weights(params: NetworkParams, path) -> None:
    Path(path).write_bytes(weights_bytes(params))


def parse_weights(blob: bytes, expected_dims: Sequence[int] | None = None) -> NetworkParams:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError("not a weight file (bad magic or too short)")
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    version, count = struct.unpack_from("<HH", payload, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported weight format version {version}")
    pos = 8
    layers = []
    try:
        for _ in range(count):
            out_dim, in_dim = struct.unpack_from("<II", payload, pos)
            pos += 8
            nw = out_dim * in_dim
            end = pos + 8 * (nw + out_dim)
            if end > len(payload):
                raise FormatError("weight file is truncated")
            w = np.frombuffer(payload, dtype="<f8", count=nw, offset=pos).reshape(out_dim, in_dim)
            b = np.frombuffer(payload, dtype="<f8", count=out_dim, offset=pos + 8 * nw)
            layers.append(LayerParams(w.astype(np.float64), b.astype(np.float64)))
            pos = end
    except struct.error as exc:
        raise FormatError("weight file is truncated") from exc
    if pos != len(payload):
        raise FormatError("trailing bytes after the last layer")
    if zlib.crc32(payload) != crc:
        raise FormatError("CRC mismatch")
    try:
        params = NetworkParams.from_layers(layers)
    except (DimensionMismatch, IndexError) as exc:
        raise FormatError(f"inconsistent layer dimensions: {exc}") from exc
    if expected_dims is not None and params.dims != tuple(expected_dims):
        raise ArchitectureMismatch(f"file holds architecture {params.dims}, expected {tuple(expected_dims)}")
    return params


def load_weights(path, expected_dims: Sequence[int] | None = None) -> NetworkParams:
    return parse_weights(Path(path).read_bytes(), expected_dims)
