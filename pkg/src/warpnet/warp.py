"""Discrete order-preserving warping functions.

A warp of length ``T`` is stored as its values on the grid ``0 .. T-1`` in
grid units, so ``values[0] == 0`` and ``values[-1] == T - 1``.  The
derivative representation ("density") is normalized so that its mean is one,
with the leading entry fixed at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENDPOINT_TOL = 1e-9
MONOTONE_TOL = 1e-9


class WarpError(ValueError):
    """Raised for invalid warp inputs (length, domain, shape, degenerate)."""


class ShapeError(ValueError):
    """Raised when array shapes or lengths do not agree."""


@dataclass(frozen=True)
class WarpFunction:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise WarpError(f"warp values must be 1-D, got shape {v.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.length


@dataclass(frozen=True)
class WarpDerivative:
    density: np.ndarray

    def __post_init__(self):
        d = np.array(self.density, dtype=np.float64)
        d.flags.writeable = False
        object.__setattr__(self, "density", d)

    @property
    def length(self) -> int:
        return self.density.shape[0]


@dataclass
class Violation:
    kind: str  # "endpoint" | "monotonicity" | "range" | "length" | "finite"
    index: int
    message: str


@dataclass
class ValidityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid

    def first(self, kind: str) -> Violation | None:
        for v in self.violations:
            if v.kind == kind:
                return v
        return None

    def __str__(self):
        if self.valid:
            return "valid"
        return "; ".join(v.message for v in self.violations)


def validate(w: WarpFunction) -> ValidityReport:
    """Check endpoints, monotonicity and range; never raises."""
    v = np.asarray(w.values)
    T = v.shape[0]
    report = ValidityReport()
    if T < 2:
        report.violations.append(Violation("length", 0, f"length {T} < 2"))
        return report
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        i = int(bad[0])
        report.violations.append(Violation("finite", i, f"non-finite value at index {i}"))
        return report
    if abs(v[0]) > ENDPOINT_TOL:
        report.violations.append(
            Violation("endpoint", 0, f"values[0] = {v[0]!r}, expected 0"))
    if abs(v[-1] - (T - 1)) > ENDPOINT_TOL:
        report.violations.append(
            Violation("endpoint", T - 1, f"values[{T - 1}] = {v[-1]!r}, expected {T - 1}"))
    drops = np.flatnonzero(np.diff(v) < -MONOTONE_TOL)
    if drops.size:
        i = int(drops[0]) + 1
        report.violations.append(
            Violation("monotonicity", i, f"values[{i}] < values[{i - 1}]"))
    out = np.flatnonzero((v < -ENDPOINT_TOL) | (v > T - 1 + ENDPOINT_TOL))
    if out.size:
        i = int(out[0])
        report.violations.append(
            Violation("range", i, f"values[{i}] = {v[i]!r} outside [0, {T - 1}]"))
    return report


def _require_valid(w: WarpFunction, what: str = "warp"):
    report = validate(w)
    if not report.valid:
        raise WarpError(f"invalid {what}: {report}")


def interp_grid(values: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linearly interpolate ``values`` (sampled on 0..T-1) at ``pos``.

    Positions are clamped into range.  Integer positions return the stored
    sample exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[0]
    pos = np.clip(np.asarray(pos, dtype=np.float64), 0.0, T - 1)
    i0 = np.minimum(np.floor(pos).astype(np.intp), T - 2)
    frac = pos - i0
    return (1.0 - frac) * values[i0] + frac * values[i0 + 1]


def identity_warp(T: int) -> WarpFunction:
    if T < 2:
        raise WarpError(f"warp length must be >= 2, got {T}")
    return WarpFunction(np.arange(T, dtype=np.float64))


def derivative_of(w: WarpFunction) -> WarpDerivative:
    _require_valid(w)
    T = w.length
    steps = np.concatenate([[0.0], np.diff(w.values)])
    steps = np.maximum(steps, 0.0)  # round-off inside MONOTONE_TOL
    return WarpDerivative(steps * (T / steps.sum()))


def warp_from_derivative(d: WarpDerivative) -> WarpFunction:
    dens = d.density
    T = dens.shape[0]
    if T < 2:
        raise WarpError(f"warp length must be >= 2, got {T}")
    if np.any(dens < 0):
        raise WarpError(f"negative density at index {int(np.flatnonzero(dens < 0)[0])}")
    total = dens.sum()
    if total <= 0:
        raise WarpError("degenerate density: all entries are zero")
    values = (T - 1) * np.cumsum(dens) / total
    values[0] = 0.0
    values[-1] = T - 1
    return WarpFunction(values)


def compose(g1: WarpFunction, g2: WarpFunction) -> WarpFunction:
    """Return ``g1 o g2``, i.e. ``t -> g1(g2(t))``."""
    if g1.length != g2.length:
        raise ShapeError(f"length mismatch: {g1.length} vs {g2.length}")
    _require_valid(g1, "g1")
    _require_valid(g2, "g2")
    return WarpFunction(interp_grid(g1.values, g2.values))


def invert(w: WarpFunction) -> WarpFunction:
    """Generalized inverse; flat segments resolve to their left edge."""
    _require_valid(w)
    v = np.maximum.accumulate(w.values)
    T = w.length
    targets = np.arange(T, dtype=np.float64)
    k = np.searchsorted(v, targets, side="left")
    k = np.minimum(k, T - 1)
    out = k.astype(np.float64)
    hit = v[k] > targets
    kk = k[hit]
    lo = v[kk - 1]
    out[hit] = (kk - 1) + (targets[hit] - lo) / (v[kk] - lo)
    out[0] = 0.0
    out[-1] = T - 1
    return WarpFunction(out)


def mean_warp(warps: list[WarpFunction]) -> WarpFunction:
    if len(warps) == 0:
        raise WarpError("mean_warp of an empty list")
    T = warps[0].length
    for w in warps:
        if w.length != T:
            raise ShapeError(f"length mismatch: {w.length} vs {T}")
        _require_valid(w)
    values = np.mean(np.stack([w.values for w in warps]), axis=0)
    values[0] = 0.0
    values[-1] = T - 1
    return WarpFunction(values)


def random_warp(T: int, roughness: float, rng: np.random.Generator) -> WarpFunction:
    """Sample a warp from normalized gamma increments (shape ``1/roughness``).

    Small roughness concentrates the increments and the warp approaches the
    identity.
    """
    if T < 2:
        raise WarpError(f"warp length must be >= 2, got {T}")
    if not roughness > 0:
        raise WarpError(f"roughness must be positive, got {roughness}")
    inc = rng.gamma(1.0 / roughness, size=T - 1)
    if inc.sum() <= 0:  # all increments underflowed
        return identity_warp(T)
    return warp_from_derivative(WarpDerivative(np.concatenate([[0.0], inc])))


def affine_warp(a: float, b: float, T: int) -> WarpFunction:
    if not a > 0:
        raise WarpError(f"affine slope must be positive, got {a}")
    if T < 2:
        raise WarpError(f"warp length must be >= 2, got {T}")
    values = np.clip(a * np.arange(T, dtype=np.float64) + b, 0.0, T - 1)
    values[0] = 0.0
    values[-1] = T - 1
    return WarpFunction(values)


def save_warp_csv(w: WarpFunction, path) -> None:
    lines = ["gamma"] + [repr(float(x)) for x in w.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_warp_csv(path) -> WarpFunction:
    lines = Path(path).read_text().split()
    if not lines or lines[0] != "gamma":
        raise WarpError(f"{path}: expected header 'gamma'")
    return WarpFunction(np.array([float(x) for x in lines[1:]]))
