"""Synthetic datasets, the affine-distortion protocol, and dataset file I/O.

Signals live on the normalized grid ``t_k = k / T``.  Templates:

* ``gauss2``           -- Gaussian bumps centered at 0.55 (class 0) or 0.45
                          (class 1), amplitude ~ U[0.5, 1.5]
* ``nwave_vs_gauss``   -- biphasic N-wave (class 0) vs. a Gaussian bump
                          (class 1), each randomly warped
* ``mixture_vs_gauss`` -- two-component Gaussian mixture (class 0) vs. the
                          single Gaussian with the same mean and variance
                          (class 1), each randomly warped

All samples get additive i.i.d. Gaussian noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .resample import Sequence, resample_batch
from .warp import ShapeError, affine_warp, random_warp

WIDTH = 0.08
KINDS = ("gauss2", "nwave_vs_gauss", "mixture_vs_gauss", "custom")


class ParseError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # (S, T, N)
    y: np.ndarray  # (S,)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 3:
            raise ShapeError(f"dataset X must be (S, T, N), got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ShapeError(f"{self.X.shape[0]} sequences but labels shape {self.y.shape}")
        if np.any(self.y < 0):
            raise ValueError("labels must be non-negative class indices")

    def __len__(self):
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def N(self) -> int:
        return self.X.shape[2]

    @property
    def num_classes(self) -> int:
        return int(self.metadata.get("num_classes", int(self.y.max()) + 1 if len(self) else 0))

    @property
    def sequences(self) -> list[Sequence]:
        return [Sequence(x, int(c)) for x, c in zip(self.X, self.y)]


@dataclass
class GenSpec:
    kind: str = "gauss2"
    T: int = 100
    train_count: int = 8000
    test_count: int = 2000
    noise_sigma: float = 0.2
    warp_roughness: float = 0.5
    seed: int = 0
    warped: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.train_count <= 0 or self.test_count <= 0:
            raise ValueError("sample counts must be positive")
        if self.train_count % 2 or self.test_count % 2:
            raise ValueError("sample counts must be even for an exact class balance")
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")


def _gauss(t, center, width=WIDTH):
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def grid(T: int) -> np.ndarray:
    return np.arange(T) / T


def nwave(t):
    return _gauss(t, 0.35) - _gauss(t, 0.65)


def gauss_bump(t):
    return _gauss(t, 0.5)


MIX_CENTERS = (0.35, 0.65)


def mixture(t):
    return _gauss(t, MIX_CENTERS[0]) + _gauss(t, MIX_CENTERS[1])


def matched_gauss(t):
    """Single Gaussian with the mixture's mean, variance and area."""
    mean = np.mean(MIX_CENTERS)
    var = WIDTH ** 2 + np.var(MIX_CENTERS)
    sd = np.sqrt(var)
    return (2 * WIDTH / sd) * _gauss(t, mean, sd)


TEMPLATES = {
    "nwave_vs_gauss": (nwave, gauss_bump),
    "mixture_vs_gauss": (mixture, matched_gauss),
}


def _balanced_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    y = np.repeat([0, 1], n // 2)
    return rng.permutation(y)


def _streams(seed: int):
    train, test = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train), np.random.default_rng(test)


def _gen_gauss2(spec: GenSpec, n: int, rng) -> np.ndarray:
    y = _balanced_labels(n, rng)
    t = grid(spec.T)
    amp = rng.uniform(0.5, 1.5, size=n)
    centers = np.where(y == 0, 0.55, 0.45)
    X = amp[:, None] * _gauss(t[None, :], centers[:, None])
    X = X + spec.noise_sigma * rng.standard_normal(X.shape)
    return X[..., None], y


def _gen_templates(spec: GenSpec, n: int, rng):
    y = _balanced_labels(n, rng)
    T = spec.T
    t = grid(T)
    f0, f1 = TEMPLATES[spec.kind]
    X = np.empty((n, T))
    for i in range(n):
        f = f0 if y[i] == 0 else f1
        if spec.warped:
            gamma = random_warp(T, spec.warp_roughness, rng).values
            X[i] = f(gamma / T)
        else:
            X[i] = f(t)
    X = X + spec.noise_sigma * rng.standard_normal(X.shape)
    return X[..., None], y


def _generate(spec: GenSpec, expected_kind: tuple):
    if spec.kind not in expected_kind:
        raise ValueError(f"generator expects kind in {expected_kind}, got {spec.kind!r}")
    make = _gen_gauss2 if spec.kind == "gauss2" else _gen_templates
    meta = {"generator": spec.kind, "num_classes": 2, **asdict(spec)}
    out = []
    for split, n, rng in zip(("train", "test"), (spec.train_count, spec.test_count),
                             _streams(spec.seed)):
        X, y = make(spec, n, rng)
        out.append(Dataset(X, y, {**meta, "split": split}))
    return tuple(out)


def gen_dataset1(spec: GenSpec):
    """Gaussian bumps at two centers; returns ``(train, test)``."""
    return _generate(spec, ("gauss2",))


def gen_dataset2(spec: GenSpec):
    """Randomly warped N-waves vs. Gaussian bumps; returns ``(train, test)``."""
    return _generate(spec, ("nwave_vs_gauss",))


def gen_dataset_supp(spec: GenSpec):
    """Two-Gaussian mixture vs. matched single Gaussian; ``spec.warped`` toggles warping."""
    return _generate(spec, ("mixture_vs_gauss",))


def generate(spec: GenSpec):
    return {
        "gauss2": gen_dataset1,
        "nwave_vs_gauss": gen_dataset2,
        "mixture_vs_gauss": gen_dataset_supp,
    }[spec.kind](spec)


# -- length normalization and affine distortion ------------------------------

def resample_to_length(X: Sequence, target_T: int) -> Sequence:
    """Uniformly resample onto ``target_T`` frames by linear interpolation."""
    if target_T < 2:
        raise ValueError(f"target length must be >= 2, got {target_T}")
    if target_T == X.T:
        return Sequence(X.frames.copy(), X.label)
    pos = np.linspace(0.0, X.T - 1, target_T)
    T = X.T
    i0 = np.minimum(np.floor(pos).astype(np.intp), T - 2)
    frac = (pos - i0)[:, None]
    f = X.frames
    return Sequence(f[i0] + frac * (f[i0 + 1] - f[i0]), X.label)


def zero_pad(X: Sequence, target_T: int) -> Sequence:
    """Right-pad with zero frames (sequences already long enough are returned as-is)."""
    if target_T < 2:
        raise ValueError(f"target length must be >= 2, got {target_T}")
    if X.T >= target_T:
        return Sequence(X.frames.copy(), X.label)
    pad = np.zeros((target_T - X.T, X.N))
    return Sequence(np.vstack([X.frames, pad]), X.label)


PAYLOAD_LEN = 50
DISTORTED_LEN = 100
PAYLOAD_START = 25


def embed(X: np.ndarray) -> np.ndarray:
    """Place (S, 50, N) payloads at frames 25..74 of zero sequences of length 100."""
    S, T, N = X.shape
    if T != PAYLOAD_LEN:
        raise ShapeError(f"affine distortion expects sequences of length {PAYLOAD_LEN}, got {T}")
    out = np.zeros((S, DISTORTED_LEN, N))
    out[:, PAYLOAD_START:PAYLOAD_START + PAYLOAD_LEN] = X
    return out


def apply_affine_distortion(ds: Dataset, a_range=(0.75, 1.25), b_range=(0, 49),
                            seed: int = 0) -> Dataset:
    """Embed into length 100 and resample each sequence at ``a*t + b``.

    ``a`` is uniform on ``a_range``; ``b`` is a uniform integer in the
    inclusive ``b_range``.
    """
    padded = embed(ds.X)
    rng = np.random.default_rng(seed)
    S = len(ds)
    a = rng.uniform(a_range[0], a_range[1], size=S)
    b = rng.integers(b_range[0], b_range[1] + 1, size=S)
    pos = np.stack([affine_warp(a[i], b[i], DISTORTED_LEN).values for i in range(S)])
    X = resample_batch(padded, pos)
    meta = {**ds.metadata, "affine": {"a_range": list(a_range), "b_range": list(b_range),
                                      "seed": seed}}
    return Dataset(X, ds.y.copy(), meta)


# -- file I/O ----------------------------------------------------------------

def save_dataset(ds: Dataset, path) -> None:
    """CSV with header ``label,t0c0,t0c1,...`` plus a ``.json`` metadata sidecar."""
    path = Path(path)
    S, T, N = ds.X.shape
    header = ["label"] + [f"t{t}c{c}" for t in range(T) for c in range(N)]
    flat = ds.X.reshape(S, T * N)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for label, row in zip(ds.y, flat):
            w.writerow([int(label)] + [repr(float(x)) for x in row])
    meta = {**ds.metadata, "T": T, "N": N}
    meta.setdefault("num_classes", ds.num_classes)
    _sidecar(path).write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = {}
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "label":
        raise ParseError(f"{path}:1: expected header starting with 'label'")
    header = rows[0][1:]
    T, N = _parse_header(header, path)
    labels, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 1 + T * N:
            raise ParseError(f"{path}:{lineno}: expected {1 + T * N} fields, got {len(row)}")
        try:
            labels.append(int(row[0]))
            data.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    X = np.array(data, dtype=np.float64).reshape(len(data), T, N)
    return Dataset(X, np.array(labels, dtype=np.int64), meta)


def _parse_header(cols, path):
    if not cols:
        raise ParseError(f"{path}:1: header has no value columns")
    last = cols[-1]
    try:
        t_str, c_str = last[1:].split("c")
        T, N = int(t_str) + 1, int(c_str) + 1
    except ValueError:
        raise ParseError(f"{path}:1: bad column name {last!r}") from None
    expected = [f"t{t}c{c}" for t in range(T) for c in range(N)]
    if cols != expected:
        raise ParseError(f"{path}:1: header columns are not t0c0..t{T - 1}c{N - 1}")
    return T, N


def load_skeleton_csv(path, joints: int, labels_path=None, root_joint: int = 0) -> Dataset:
    """Read per-frame skeleton rows ``seq_id,frame,j0x,j0y,j0z,...``.

    Labels come from ``labels_path`` (``seq_id,label``; defaults to
    ``<stem>_labels.csv`` next to ``path``).  Each sequence is translated so
    ``root_joint`` in its first frame sits at the origin.  Sequences must all
    have the same frame count; use :func:`resample_to_length` or
    :func:`zero_pad` beforehand otherwise.
    """
    path = Path(path)
    if labels_path is None:
        labels_path = path.with_name(path.stem + "_labels.csv")
    width = 2 + 3 * joints
    frames: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}:1: empty file")
        if len(header) != width or header[:2] != ["seq_id", "frame"]:
            raise ParseError(f"{path}:1: expected header seq_id,frame + {3 * joints} joint columns")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                frame = int(row[1])
                coords = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            frames.setdefault(row[0], []).append((frame, coords))
    labels = {}
    with Path(labels_path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"{labels_path}:{lineno}: expected seq_id,label")
            try:
                labels[row[0]] = int(row[1])
            except ValueError as exc:
                raise ParseError(f"{labels_path}:{lineno}: {exc}") from None
    seqs, ys = [], []
    for sid, rows in frames.items():
        rows.sort(key=lambda r: r[0])
        arr = np.array([c for _, c in rows], dtype=np.float64)
        root = arr[0, 3 * root_joint:3 * root_joint + 3]
        arr = (arr.reshape(len(rows), joints, 3) - root).reshape(len(rows), 3 * joints)
        if sid not in labels:
            raise ParseError(f"{labels_path}: no label for sequence {sid!r}")
        seqs.append(arr)
        ys.append(labels[sid])
    lengths = {s.shape[0] for s in seqs}
    if len(lengths) > 1:
        raise ShapeError(f"sequences have differing frame counts {sorted(lengths)}")
    X = np.stack(seqs) if seqs else np.zeros((0, 2, 3 * joints))
    return Dataset(X, np.array(ys), {"generator": "custom", "source": str(path),
                                     "joints": joints})
