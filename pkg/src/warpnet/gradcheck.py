"""Central finite-difference checks for every hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .model import ClassifierConfig, build_model
from .resample import resample_batch, resample_batch_backward
from .ttn import TTNConfig, constraint_batch, constraint_batch_backward

TOL = 1e-4
KINK_MARGIN = 1e-3

# negative-control hook: run_all(corrupt=op) scales analytic gradients of op
_analytic_scale = 1.0


@dataclass
class CheckResult:
    op: str
    cases: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOL


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.ravel(analytic) * _analytic_scale
    n = np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-10)
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = f()
        flat[k] = old - h
        fm = f()
        flat[k] = old
        gf[k] = (fp - fm) / (2 * h)
    return g


def _away_from_integers(pos: np.ndarray) -> bool:
    frac = pos - np.floor(pos)
    interior = pos[..., 1:-1]
    fi = frac[..., 1:-1]
    return bool(np.all((fi > KINK_MARGIN) & (fi < 1 - KINK_MARGIN))) and interior.size > 0


def _random_positions(rng, B, T):
    while True:
        inc = rng.gamma(2.0, size=(B, T - 1))
        pos = np.concatenate([np.zeros((B, 1)), np.cumsum(inc, axis=1)], axis=1)
        pos *= (T - 1) / pos[:, -1:]
        if _away_from_integers(pos):
            return pos


def check_conv1d(rng, cases, h=1e-5):
    worst = 0.0
    for _ in range(cases):
        K = int(rng.integers(1, 9))
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = rng.standard_normal((2, 16, cin))
        w = rng.standard_normal((K, cin, cout))
        b = rng.standard_normal(cout)
        R = rng.standard_normal((2, 16, cout))

        def f():
            return float(np.sum(nn.conv1d_forward(x, w, b) * R))
        dx, dw, db = nn.conv1d_backward(x, w, R)
        for arr, an in ((x, dx), (w, dw), (b, db)):
            worst = max(worst, rel_error(an, numeric_grad(f, arr, h)))
    return worst


def check_dense(rng, cases, h=1e-6):
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal((3, 7))
        w = rng.standard_normal((7, 4))
        b = rng.standard_normal(4)
        R = rng.standard_normal((3, 4))

        def f():
            return float(np.sum(nn.dense_forward(x, w, b) * R))
        dx, dw, db = nn.dense_backward(x, w, R)
        for arr, an in ((x, dx), (w, dw), (b, db)):
            worst = max(worst, rel_error(an, numeric_grad(f, arr, h)))
    return worst


def check_activation(name, rng, cases, h=1e-6):
    fwd, bwd = nn.ACTIVATIONS[name]
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal(20)
        if name == "relu":
            x[np.abs(x) < KINK_MARGIN] += 0.1
        R = rng.standard_normal(20)

        def f():
            return float(np.sum(fwd(x) * R))
        an = bwd(fwd(x), R)
        worst = max(worst, rel_error(an, numeric_grad(f, x, h)))
    return worst


def check_softmax_ce(rng, cases, h=1e-6):
    worst = 0.0
    for _ in range(cases):
        C = int(rng.integers(2, 6))
        logits = 3 * rng.standard_normal((4, C))
        y = rng.integers(0, C, size=4)
        _, an = nn.softmax_cross_entropy(logits, y)

        def f():
            return nn.softmax_cross_entropy(logits, y)[0]
        worst = max(worst, rel_error(an, numeric_grad(f, logits, h)))
    return worst


def check_constraint(rng, cases, h=1e-6):
    worst = 0.0
    for _ in range(cases):
        T = int(rng.integers(3, 30))
        v = rng.standard_normal((1, T))
        R = rng.standard_normal((1, T))
        _, cache = constraint_batch(v)
        an = constraint_batch_backward(R, cache)

        def f():
            return float(np.sum(constraint_batch(v)[0] * R))
        worst = max(worst, rel_error(an, numeric_grad(f, v, h)))
    return worst


def check_resample(rng, cases, h=1e-6):
    worst = 0.0
    for _ in range(cases):
        X = rng.standard_normal((1, 20, 3))
        pos = _random_positions(rng, 1, 20)
        R = rng.standard_normal((1, 20, 3))
        dX, dPos = resample_batch_backward(X, pos, R)

        def f():
            return float(np.sum(resample_batch(X, pos) * R))
        worst = max(worst, rel_error(dX, numeric_grad(f, X, h)))
        # endpoints of a warp are pinned; only interior positions move
        num = numeric_grad(f, pos, h)
        worst = max(worst, rel_error(dPos[:, 1:-1], num[:, 1:-1]))
    return worst


def tiny_model(rng, seed: int, T: int = 20, N: int = 2):
    """Small TTN + classifier with a non-identity warp, for end-to-end checks."""
    ttn = TTNConfig(T, N, conv_layers=[(2, 3)], fc_layers=[4], activation="tanh")
    cls = ClassifierConfig(num_classes=3, conv_layers=[(3, 3)], fc_layers=[5],
                           activation="tanh")
    model = build_model(T, N, cls, ttn, seed=seed)
    for name, p in model.params.items():
        p[...] = 0.5 * rng.standard_normal(p.shape)
    model.params["ttn.out.b"] += 2.0
    return model


def check_end_to_end(rng, cases, h=1e-6, coords=120):
    worst = 0.0
    done = 0
    while done < cases:
        model = tiny_model(rng, int(rng.integers(1 << 30)))
        X = rng.standard_normal((2, model.T, model.N))
        y = rng.integers(0, 3, size=2)
        _, gamma, _ = model.warp(X)
        if not _away_from_integers(gamma):
            continue
        _, grads, dX = model.loss_and_grads(X, y, need_dx=True)
        arrays = [model.params[k] for k in model.params] + [X]
        analytic = [grads[k] for k in model.params] + [dX]
        sizes = np.array([a.size for a in arrays])
        # a random subset of coordinates keeps the cost per case bounded
        picks = rng.choice(sizes.sum(), size=min(coords, sizes.sum()), replace=False)
        owner = np.searchsorted(np.cumsum(sizes), picks, side="right")
        offset = picks - np.concatenate([[0], np.cumsum(sizes)])[owner]
        an = np.empty(len(picks))
        num = np.empty(len(picks))
        for n, (a_i, k) in enumerate(zip(owner, offset)):
            flat = arrays[a_i].reshape(-1)
            an[n] = analytic[a_i].reshape(-1)[k]
            old = flat[k]
            flat[k] = old + h
            fp = model.loss_and_grads(X, y)[0]
            flat[k] = old - h
            fm = model.loss_and_grads(X, y)[0]
            flat[k] = old
            num[n] = (fp - fm) / (2 * h)
        worst = max(worst, rel_error(an, num))
        done += 1
    return worst


CHECKS = {
    "conv1d": check_conv1d,
    "dense": check_dense,
    "tanh": lambda rng, n: check_activation("tanh", rng, n),
    "relu": lambda rng, n: check_activation("relu", rng, n),
    "softmax_cross_entropy": check_softmax_ce,
    "constraint": check_constraint,
    "resample": check_resample,
    "end_to_end": check_end_to_end,
}


def run_all(seed: int = 0, cases: int = 50, corrupt: str | None = None) -> list[CheckResult]:
    """Run every check.

    ``corrupt`` names an op whose analytic gradients are scaled by 1.01 before
    comparison, as a negative control.
    """
    global _analytic_scale
    if corrupt is not None and corrupt not in CHECKS:
        raise ValueError(f"unknown op {corrupt!r}; expected one of {sorted(CHECKS)}")
    results = []
    for i, (op, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, i])
        _analytic_scale = 1.01 if op == corrupt else 1.0
        try:
            err = fn(rng, cases)
        finally:
            _analytic_scale = 1.0
        results.append(CheckResult(op, cases, err))
    return results
