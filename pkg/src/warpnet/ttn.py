"""Temporal transformer: trainable layers -> constraint layer -> resampler.

The trainable stack maps a sequence to an unconstrained vector ``v`` of
length ``T``.  The constraint layer turns ``v`` into a warp:

    u = v / |v|           (with v[0] forced to 0)
    d = u * u             (a point on the probability simplex)
    gamma = (T - 1) * cumsum(d)

and the input is resampled at ``gamma``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .resample import Sequence, resample_batch, resample_batch_backward
from .warp import ShapeError, WarpError, WarpFunction

EPS = 1e-8
PREFIX = "ttn."


class DegenerateVectorError(WarpError):
    pass


# -- constraint layer --------------------------------------------------------

def constraint_batch(v: np.ndarray, eps: float = EPS):
    """Map rows of ``v`` (B, T) to warps (B, T); returns ``(gamma, cache)``.

    ``eps`` is added to every density entry after the first (then
    renormalized) so no segment of the warp is exactly flat.
    """
    B, T = v.shape
    w = v.copy()
    w[:, 0] = 0.0
    norm = np.sqrt(np.sum(w * w, axis=1, keepdims=True))
    if np.any(norm == 0):
        raise DegenerateVectorError("v has an all-zero tail; cannot normalize")
    u = w / norm
    scale = 1.0 + (T - 1) * eps
    dens = (u * u + eps) / scale
    dens[:, 0] = 0.0
    gamma = (T - 1) * np.cumsum(dens, axis=1)
    gamma[:, -1] = T - 1
    return gamma, (u, norm, scale)


def constraint_batch_backward(dgamma: np.ndarray, cache) -> np.ndarray:
    u, norm, scale = cache
    T = u.shape[1]
    if dgamma.shape != u.shape:
        raise ShapeError(f"dgamma shape {dgamma.shape} != {u.shape}")
    ddens = (T - 1) * np.cumsum(dgamma[:, ::-1], axis=1)[:, ::-1]
    ddens[:, 0] = 0.0
    du = ddens * (2.0 * u / scale)
    dw = (du - u * np.sum(u * du, axis=1, keepdims=True)) / norm
    dw[:, 0] = 0.0
    return dw


def constraint_forward(v) -> WarpFunction:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ShapeError(f"v must be a vector of length >= 2, got shape {v.shape}")
    gamma, _ = constraint_batch(v[None])
    return WarpFunction(gamma[0])


def constraint_backward(v, dgamma) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    dgamma = np.asarray(dgamma, dtype=np.float64)
    if v.shape != dgamma.shape:
        raise ShapeError(f"v shape {v.shape} != dgamma shape {dgamma.shape}")
    _, cache = constraint_batch(v[None])
    return constraint_batch_backward(dgamma[None], cache)[0]


# -- full module -------------------------------------------------------------

@dataclass
class TTNConfig:
    output_length: int
    in_channels: int = 1
    conv_layers: list = field(default_factory=lambda: [(1, 8)])
    fc_layers: list = field(default_factory=list)
    activation: str = "tanh"
    identity_bias: float = 1.0

    def __post_init__(self):
        self.conv_layers = [tuple(int(v) for v in c) for c in self.conv_layers]
        self.fc_layers = [int(h) for h in self.fc_layers]
        if self.output_length < 2:
            raise ValueError(f"output_length must be >= 2, got {self.output_length}")

    @property
    def stack(self) -> nn.StackSpec:
        return nn.StackSpec(self.output_length, self.in_channels, self.conv_layers,
                            self.fc_layers, self.output_length, self.activation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_layers"] = [list(c) for c in self.conv_layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TTNConfig":
        return cls(**d)


@dataclass
class TTNOutput:
    warped: Sequence
    warp: WarpFunction
    raw_v: np.ndarray


def init_ttn(config: TTNConfig, rng: np.random.Generator) -> dict:
    """Random trainable layers with an output layer that emits the identity.

    Zero output weights and a constant positive bias tail give a uniform
    density, i.e. the identity warp, regardless of the input.
    """
    params = config.stack.init(rng, PREFIX)
    params[PREFIX + "out.w"][:] = 0.0
    bias = np.full(config.output_length, float(config.identity_bias))
    bias[0] = 0.0
    params[PREFIX + "out.b"] = bias
    return params


def ttn_forward_batch(X: np.ndarray, config: TTNConfig, params: dict):
    """Returns ``(Y, gamma, v, cache)`` for ``X`` of shape (B, T, N)."""
    if X.ndim != 3 or X.shape[1] != config.output_length or X.shape[2] != config.in_channels:
        raise ShapeError(
            f"TTN expects (B, {config.output_length}, {config.in_channels}), got {X.shape}")
    v, _, stack_cache = nn.stack_forward(config.stack, params, X, PREFIX)
    gamma, c_cache = constraint_batch(v)
    Y = resample_batch(X, gamma)
    return Y, gamma, v, (X, gamma, stack_cache, c_cache)


def ttn_backward_batch(dY: np.ndarray, config: TTNConfig, params: dict, cache,
                       need_dx: bool = True):
    """Returns ``(dX, grads)``; ``dX`` is None when ``need_dx`` is false."""
    X, gamma, stack_cache, c_cache = cache
    dX_direct, dgamma = resample_batch_backward(X, gamma, dY)
    dv = constraint_batch_backward(dgamma, c_cache)
    dX_stack, grads = nn.stack_backward(config.stack, params, stack_cache, dv,
                                        PREFIX, need_dx=need_dx)
    dX = dX_direct + dX_stack if need_dx else None
    return dX, grads


def ttn_forward(X: Sequence, config: TTNConfig, params: dict) -> TTNOutput:
    if X.T != config.output_length:
        raise ShapeError(f"sequence length {X.T} != TTN length {config.output_length}")
    Y, gamma, v, _ = ttn_forward_batch(X.frames[None], config, params)
    v = v[0].copy()
    v[0] = 0.0
    return TTNOutput(Sequence(Y[0], X.label), WarpFunction(gamma[0]), v)


def ttn_backward(X: Sequence, config: TTNConfig, params: dict, dwarped):
    """Per-sequence backward; returns ``(dX, dParams)``."""
    dwarped = np.asarray(dwarped, dtype=np.float64)
    if dwarped.shape != X.frames.shape:
        raise ShapeError(f"dwarped shape {dwarped.shape} != {X.frames.shape}")
    _, _, _, cache = ttn_forward_batch(X.frames[None], config, params)
    dX, grads = ttn_backward_batch(dwarped[None], config, params, cache)
    return dX[0], grads
