"""Differentiable temporal resampling by linear interpolation.

``Y[i] = X(pos[i])`` where ``pos`` is a warp in grid units.  The backward
pass routes ``dY`` to the two frames bracketing each position
(``max(0, 1 - |pos - tau|)`` weights) and to the position itself (the slope
of the interpolated segment).  At exactly integer positions the right-hand
segment is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .warp import ShapeError, WarpError, WarpFunction, validate

# positions this close to an integer are snapped onto it, so float round-off
# in a computed identity warp still reproduces the input bit for bit
SNAP_TOL = 1e-9


@dataclass
class Sequence:
    frames: np.ndarray  # (T, N)
    label: int | None = None

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2:
            raise ShapeError(f"frames must be (T, N), got shape {f.shape}")
        if f.shape[0] < 2 or f.shape[1] < 1:
            raise ShapeError(f"need T >= 2 and N >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ShapeError("frames contain non-finite values")
        self.frames = f

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def N(self) -> int:
        return self.frames.shape[1]


def _bracket(pos: np.ndarray, T: int):
    pos = np.clip(pos, 0.0, T - 1)
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < SNAP_TOL, near, pos)
    i0 = np.minimum(np.floor(pos).astype(np.intp), T - 2)
    return i0, pos - i0


def resample_batch(X: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Resample ``X`` of shape (B, T, N) at positions ``pos`` of shape (B, T)."""
    B, T, _ = X.shape
    if pos.shape != (B, T):
        raise ShapeError(f"positions shape {pos.shape} does not match {(B, T)}")
    i0, frac = _bracket(pos, T)
    rows = np.arange(B)[:, None]
    f = frac[..., None]
    # weighted form so frac of exactly 0 or 1 returns a stored frame bitwise
    return (1.0 - f) * X[rows, i0] + f * X[rows, i0 + 1]


def resample_batch_backward(X: np.ndarray, pos: np.ndarray, dY: np.ndarray):
    """Gradients of :func:`resample_batch`; returns ``(dX, dPos)``.

    Work is O(B*T*N): each output frame touches only its two bracketing
    input frames.
    """
    B, T, N = X.shape
    if dY.shape != X.shape or pos.shape != (B, T):
        raise ShapeError(f"shape mismatch: X {X.shape}, pos {pos.shape}, dY {dY.shape}")
    i0, frac = _bracket(pos, T)
    rows = np.arange(B)[:, None]
    slope = X[rows, i0 + 1] - X[rows, i0]
    dPos = np.sum(dY * slope, axis=-1)
    dX = np.zeros_like(X)
    flat = (rows * T + i0).ravel()
    dX2 = dX.reshape(B * T, N)
    np.add.at(dX2, flat, (dY * (1.0 - frac)[..., None]).reshape(-1, N))
    np.add.at(dX2, flat + 1, (dY * frac[..., None]).reshape(-1, N))
    return dX, dPos


def _check_pair(X: Sequence, w: WarpFunction):
    if X.T != w.length:
        raise ShapeError(f"sequence length {X.T} != warp length {w.length}")
    report = validate(w)
    if not report.valid:
        raise WarpError(f"invalid warp: {report}")


def warp_sequence(X: Sequence, w: WarpFunction) -> Sequence:
    _check_pair(X, w)
    Y = resample_batch(X.frames[None], w.values[None])[0]
    return Sequence(Y, X.label)


def grad_wrt_input(w: WarpFunction, i: int, tau: int) -> float:
    """Sensitivity of output frame ``i`` to input frame ``tau``."""
    T = w.length
    if not (0 <= i < T and 0 <= tau < T):
        raise IndexError(f"index out of range for T={T}: i={i}, tau={tau}")
    return max(0.0, 1.0 - abs(w.values[i] - tau))


def grad_wrt_warp(X: Sequence, w: WarpFunction, i: int, j: int) -> float:
    """Derivative of ``Y[i, j]`` with respect to the position ``w.values[i]``.

    Sum over frames inside the unit-width support: ``+X`` at and after the
    position, ``-X`` before it.  At integer positions the right-hand segment
    is taken (at the last frame, the left-hand one).
    """
    T, N = X.T, X.N
    if not (0 <= i < T and 0 <= j < N):
        raise IndexError(f"index out of range for (T, N)=({T}, {N}): i={i}, j={j}")
    i0, _ = _bracket(np.array([w.values[i]]), T)
    lo = int(i0[0])
    return float(X.frames[lo + 1, j] - X.frames[lo, j])


def resample_backward(X: Sequence, w: WarpFunction, dY: np.ndarray):
    """Per-sequence form; returns ``(dX, dPos)`` with shapes (T, N) and (T,)."""
    _check_pair(X, w)
    dY = np.asarray(dY, dtype=np.float64)
    if dY.shape != X.frames.shape:
        raise ShapeError(f"dY shape {dY.shape} != {X.frames.shape}")
    dX, dPos = resample_batch_backward(X.frames[None], w.values[None], dY[None])
    return dX[0], dPos[0]
