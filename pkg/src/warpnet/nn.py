"""Neural-network primitives with explicit forward and backward passes.

Arrays carry a leading batch axis.  Sequences are laid out as
``(batch, time, channels)``.  Gradients returned by the backward functions
are sums over the batch; the loss is what divides by the batch size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .warp import ShapeError

MAGIC = b"WARPNET1"


class CheckpointError(ValueError):
    pass


# -- initialization ---------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# -- 1-D convolution (stride 1, zero "same" padding) --------------------------

def _same_pad(K: int) -> tuple[int, int]:
    left = (K - 1) // 2
    return left, K - 1 - left


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlate ``x`` (B, T, Cin) with ``w`` (K, Cin, Cout), add ``b``.

    ``out[t] = sum_k x[t + k - left] @ w[k] + b`` with zeros outside ``x``;
    ``left = (K - 1) // 2``.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1] or b.shape != (w.shape[2],):
        raise ShapeError(f"conv1d shapes: x {x.shape}, w {w.shape}, b {b.shape}")
    K = w.shape[0]
    T = x.shape[1]
    left, right = _same_pad(K)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    out = np.broadcast_to(b, (x.shape[0], T, w.shape[2])).copy()
    for k in range(K):
        out += xp[:, k:k + T, :] @ w[k]
    return out


def conv1d_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray):
    """Return ``(dx, dw, db)`` for :func:`conv1d_forward`."""
    K = w.shape[0]
    B, T, _ = x.shape
    if dout.shape != (B, T, w.shape[2]):
        raise ShapeError(f"dout shape {dout.shape}, expected {(B, T, w.shape[2])}")
    left, right = _same_pad(K)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    d2 = dout.reshape(B * T, -1)
    for k in range(K):
        win = xp[:, k:k + T, :]
        dw[k] = win.reshape(B * T, -1).T @ d2
        dxp[:, k:k + T, :] += dout @ w[k].T
    db = d2.sum(axis=0)
    return dxp[:, left:left + T, :], dw, db


# -- dense ---------------------------------------------------------------------

def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"dense shapes: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w + b


def dense_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


# -- activations -------------------------------------------------------------

def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(y, dy):
    """Takes the forward *output* ``y``."""
    return dy * (1.0 - y * y)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(y, dy):
    return dy * (y > 0)


ACTIVATIONS = {
    "tanh": (tanh_forward, tanh_backward),
    "relu": (relu_forward, relu_backward),
}


# -- loss --------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``.

    A 1-D ``logits`` with an integer label is treated as a batch of one and
    returns a 1-D gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    if single:
        logits = logits[None]
    labels = np.atleast_1d(np.asarray(labels))
    B, C = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape}, expected {(B,)}")
    if np.any((labels < 0) | (labels >= C)):
        raise ValueError(f"label out of range for {C} classes: {labels}")
    z = logits - logits.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(B)
    loss = float(np.mean(logsumexp - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    grad /= B
    return loss, (grad[0] if single else grad)


# -- optimizers --------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str  # "adam" | "momentum"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    slots: dict = field(default_factory=dict)
    group_multiplier: dict = field(default_factory=dict)

    def multiplier(self, name: str) -> float:
        return self.group_multiplier.get(name, 1.0)


def sgd_momentum_step(params: dict, grads: dict, state: OptimizerState, base_lr: float) -> None:
    """``v <- mu v + g``; ``p <- p - lr * group_multiplier * v`` (in place)."""
    state.step += 1
    for name, p in params.items():
        v = state.slots.get(name)
        if v is None:
            v = state.slots[name] = np.zeros_like(p)
        v *= state.momentum
        v += grads[name]
        p -= (base_lr * state.multiplier(name)) * v


def adam_step(params: dict, grads: dict, state: OptimizerState, base_lr: float) -> None:
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in params.items():
        slot = state.slots.get(name)
        if slot is None:
            slot = state.slots[name] = (np.zeros_like(p), np.zeros_like(p))
        m, v = slot
        g = grads[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = base_lr * state.multiplier(name)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


OPTIMIZERS = {"adam": adam_step, "momentum": sgd_momentum_step}


# -- checkpoints -------------------------------------------------------------

def save_params(params: dict, path) -> None:
    """Write named float64 arrays in the ``WARPNET1`` container format.

    Layout after the 8-byte magic, repeated per parameter: u32 name length,
    UTF-8 name, u32 rank, rank x u64 dims, little-endian f64 payload.
    """
    chunks = [MAGIC]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> dict:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8
    out = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        out[name] = data.reshape(shape)
    return out


# -- conv/fc stacks ----------------------------------------------------------

@dataclass
class StackSpec:
    """Conv layers (feature maps, kernel) then hidden dense layers then a
    linear output layer.  Activations follow every layer except the output."""

    in_length: int
    in_channels: int
    conv_layers: list = field(default_factory=list)
    fc_layers: list = field(default_factory=list)
    out_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        self.conv_layers = [tuple(int(v) for v in c) for c in self.conv_layers]
        self.fc_layers = [int(h) for h in self.fc_layers]
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def shapes(self) -> dict:
        shapes = {}
        ch = self.in_channels
        for i, (maps, k) in enumerate(self.conv_layers):
            shapes[f"conv{i}.w"] = (k, ch, maps)
            shapes[f"conv{i}.b"] = (maps,)
            ch = maps
        width = self.in_length * ch
        for i, h in enumerate(self.fc_layers):
            shapes[f"fc{i}.w"] = (width, h)
            shapes[f"fc{i}.b"] = (h,)
            width = h
        shapes["out.w"] = (width, self.out_dim)
        shapes["out.b"] = (self.out_dim,)
        return shapes

    def init(self, rng: np.random.Generator, prefix: str = "") -> dict:
        params = {}
        for name, shape in self.shapes().items():
            if name.endswith(".b"):
                params[prefix + name] = np.zeros(shape)
            elif len(shape) == 3:
                k, cin, cout = shape
                params[prefix + name] = glorot_uniform(rng, shape, k * cin, k * cout)
            else:
                params[prefix + name] = glorot_uniform(rng, shape, *shape)
        return params


def stack_forward(spec: StackSpec, params: dict, x: np.ndarray, prefix: str = ""):
    """Run ``x`` (B, T, C) through the stack.

    Returns ``(out, features, cache)`` where ``features`` is the input to the
    output layer.
    """
    act, _ = ACTIVATIONS[spec.activation]
    cache = {"inputs": [], "outputs": []}
    h = x
    for i in range(len(spec.conv_layers)):
        cache["inputs"].append(h)
        h = act(conv1d_forward(h, params[f"{prefix}conv{i}.w"], params[f"{prefix}conv{i}.b"]))
        cache["outputs"].append(h)
    cache["conv_shape"] = h.shape
    h = h.reshape(h.shape[0], -1)
    for i in range(len(spec.fc_layers)):
        cache["inputs"].append(h)
        h = act(dense_forward(h, params[f"{prefix}fc{i}.w"], params[f"{prefix}fc{i}.b"]))
        cache["outputs"].append(h)
    cache["features"] = h
    out = dense_forward(h, params[f"{prefix}out.w"], params[f"{prefix}out.b"])
    return out, h, cache


def stack_backward(spec: StackSpec, params: dict, cache: dict, dout: np.ndarray,
                   prefix: str = "", need_dx: bool = True):
    """Return ``(dx, grads)``; ``grads`` keys carry ``prefix``."""
    _, act_back = ACTIVATIONS[spec.activation]
    grads = {}
    nconv = len(spec.conv_layers)
    dh, grads[prefix + "out.w"], grads[prefix + "out.b"] = dense_backward(
        cache["features"], params[prefix + "out.w"], dout)
    for i in reversed(range(len(spec.fc_layers))):
        layer = nconv + i
        dz = act_back(cache["outputs"][layer], dh)
        dh, grads[f"{prefix}fc{i}.w"], grads[f"{prefix}fc{i}.b"] = dense_backward(
            cache["inputs"][layer], params[f"{prefix}fc{i}.w"], dz)
    dh = dh.reshape(cache["conv_shape"])
    for i in reversed(range(nconv)):
        dz = act_back(cache["outputs"][i], dh)
        if i == 0 and not need_dx:
            _, grads[f"{prefix}conv{i}.w"], grads[f"{prefix}conv{i}.b"] = conv1d_backward(
                cache["inputs"][i], params[f"{prefix}conv{i}.w"], dz)
            dh = None
        else:
            dh, grads[f"{prefix}conv{i}.w"], grads[f"{prefix}conv{i}.b"] = conv1d_backward(
                cache["inputs"][i], params[f"{prefix}conv{i}.w"], dz)
    return dh, grads
