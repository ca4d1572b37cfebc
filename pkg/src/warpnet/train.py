"""Joint training of the TTN and classifier, evaluation, and diagnostics."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset
from .model import Model
from .resample import Sequence, resample_batch
from .ttn import TTNOutput
from .warp import ShapeError, WarpError, invert, mean_warp

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    base_lr: float = 1e-4
    ttn_lr_ratio: float = 0.1
    iterations: int = 1000
    batch_size: int = 32
    lr_schedule: list = field(default_factory=list)  # [(iteration, multiplier)]
    seed: int = 0
    eval_every: int = 100
    momentum: float = 0.9

    def __post_init__(self):
        if self.optimizer not in nn.OPTIMIZERS:
            raise ConfigError(f"optimizer: unknown kind {self.optimizer!r}")
        if not self.base_lr > 0:
            raise ConfigError(f"base_lr: must be positive, got {self.base_lr}")
        if not 0 <= self.ttn_lr_ratio <= 1:
            raise ConfigError(f"ttn_lr_ratio: must lie in [0, 1], got {self.ttn_lr_ratio}")
        if self.iterations <= 0:
            raise ConfigError(f"iterations: must be positive, got {self.iterations}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size: must be positive, got {self.batch_size}")
        self.lr_schedule = sorted((int(i), float(m)) for i, m in self.lr_schedule)

    def lr_multiplier(self, iteration: int) -> float:
        mult = 1.0
        for start, m in self.lr_schedule:
            if iteration >= start:
                mult = m
        return mult


@dataclass
class RunHistory:
    iterations: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_accuracy: list = field(default_factory=list)
    checkpoint: str | None = None

    def record(self, iteration, loss, acc):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("history iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.train_loss.append(float(loss))
        self.test_accuracy.append(float(acc))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "train_loss", "test_accuracy"])
            for row in zip(self.iterations, self.train_loss, self.test_accuracy):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def _check_shapes(model: Model, ds: Dataset, name: str):
    if ds.X.shape[1:] != (model.T, model.N):
        raise ConfigError(f"{name}: dataset shape {ds.X.shape[1:]} does not match model input "
                          f"{(model.T, model.N)}")
    if len(ds) and ds.y.max() >= model.classifier.num_classes:
        raise ConfigError(f"{name}: label {ds.y.max()} >= num_classes "
                          f"{model.classifier.num_classes}")


def train(model: Model, train_ds: Dataset, test_ds: Dataset | None, cfg: TrainConfig,
          first_loss: list | None = None):
    """Minibatch training in place; returns ``(model, history)``.

    Batches are drawn from shuffled epochs using a stream seeded by
    ``cfg.seed``, independent of the model's initialization streams.  If
    ``first_loss`` is a list, the loss of the first minibatch is appended.
    """
    _check_shapes(model, train_ds, "train")
    if test_ds is not None:
        _check_shapes(model, test_ds, "test")
    step = nn.OPTIMIZERS[cfg.optimizer]
    state = nn.OptimizerState(cfg.optimizer, momentum=cfg.momentum,
                              group_multiplier=model.param_groups(cfg.ttn_lr_ratio))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))
    history = RunHistory()
    n = len(train_ds)
    order = rng.permutation(n)
    cursor = 0
    running = []
    for it in range(1, cfg.iterations + 1):
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        loss, grads, _ = model.loss_and_grads(train_ds.X[idx], train_ds.y[idx])
        if not np.isfinite(loss):
            raise DivergenceError(it, loss)
        if first_loss is not None and it == 1:
            first_loss.append(loss)
        running.append(loss)
        step(model.params, grads, state, cfg.base_lr * cfg.lr_multiplier(it - 1))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            acc = evaluate_accuracy(model, test_ds) if test_ds is not None else float("nan")
            history.record(it, float(np.mean(running)), acc)
            log.debug("iter %d loss %.4f acc %.4f", it, history.train_loss[-1], acc)
            running = []
    return model, history


def evaluate_accuracy(model: Model, ds: Dataset) -> float:
    """Fraction of argmax-correct predictions (ties go to the lower class index)."""
    if len(ds) == 0:
        return float("nan")
    return float(np.mean(model.predict(ds.X) == ds.y))


def accuracy_from_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(scores, axis=1) == labels))


# -- clustering --------------------------------------------------------------

def kmeans(features: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """Lloyd's algorithm from a random partition.

    Empty clusters are re-seeded with the point farthest from its centroid.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of points {n}")
    assign = rng.integers(0, k, size=n)
    sq = np.sum(X * X, axis=1)
    for _ in range(max_iter):
        centers = np.zeros((k, X.shape[1]))
        counts = np.bincount(assign, minlength=k)
        np.add.at(centers, assign, X)
        nonempty = counts > 0
        centers[nonempty] /= counts[nonempty, None]
        for c in np.flatnonzero(~nonempty):
            d = sq - 2 * np.sum(X * centers[assign], axis=1) + np.sum(centers[assign] ** 2, axis=1)
            far = int(np.argmax(d))
            centers[c] = X[far]
            assign[far] = c
        dist = sq[:, None] - 2 * X @ centers.T + np.sum(centers * centers, axis=1)[None]
        new = np.argmin(dist, axis=1)
        if np.array_equal(new, assign):
            break
        assign = new
    return assign


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def contingency(labels: np.ndarray, clusters: np.ndarray) -> np.ndarray:
    _, li = np.unique(labels, return_inverse=True)
    _, ci = np.unique(clusters, return_inverse=True)
    table = np.zeros((li.max() + 1, ci.max() + 1))
    np.add.at(table, (li, ci), 1)
    return table


def purity_homogeneity_completeness(labels, clusters):
    """Scores for one clustering; 0/0 in homogeneity or completeness counts as 1."""
    table = contingency(np.asarray(labels), np.asarray(clusters))  # classes x clusters
    n = table.sum()
    purity = table.max(axis=0).sum() / n
    h_class = _entropy(table.sum(axis=1))
    h_clust = _entropy(table.sum(axis=0))
    h_class_given_clust = sum(table[:, j].sum() / n * _entropy(table[:, j])
                              for j in range(table.shape[1]))
    h_clust_given_class = sum(table[i].sum() / n * _entropy(table[i])
                              for i in range(table.shape[0]))
    hom = 1.0 if h_class == 0 else 1.0 - h_class_given_clust / h_class
    comp = 1.0 if h_clust == 0 else 1.0 - h_clust_given_class / h_clust
    return float(purity), float(hom), float(comp)


def clustering_metrics(features, labels, k: int, runs: int = 100, seed: int = 0):
    """k-means ``runs`` times; returns mean ``(purity, homogeneity, completeness)``."""
    features = np.asarray(features, dtype=np.float64).reshape(len(labels), -1)
    if k < 1 or runs < 1:
        raise ConfigError(f"need k >= 1 and runs >= 1, got k={k}, runs={runs}")
    if k > len(labels):
        raise ConfigError(f"k={k} exceeds the number of points {len(labels)}")
    scores = []
    for seq in np.random.SeedSequence(seed).spawn(runs):
        clusters = kmeans(features, k, np.random.default_rng(seq))
        scores.append(purity_homogeneity_completeness(labels, clusters))
    return tuple(float(x) for x in np.mean(scores, axis=0))


# -- discriminative-warp diagnostics -----------------------------------------

def sequence_distance(X1, X2) -> float:
    a = X1.frames if isinstance(X1, Sequence) else np.asarray(X1, dtype=np.float64)
    b = X2.frames if isinstance(X2, Sequence) else np.asarray(X2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


@dataclass
class PairStats:
    pairs: int = 0
    mean_pre: float = 0.0
    mean_post: float = 0.0
    satisfied: int = 0  # intra: post < pre; inter: post > pre

    @property
    def fraction(self) -> float:
        return self.satisfied / self.pairs if self.pairs else float("nan")


@dataclass
class WarpReport:
    intra: dict  # class -> PairStats
    inter: PairStats
    total_pairs: int

    def to_dict(self) -> dict:
        return {
            "intra": {str(c): {**asdict(s), "fraction": s.fraction} for c, s in self.intra.items()},
            "inter": {**asdict(self.inter), "fraction": self.inter.fraction},
            "total_pairs": self.total_pairs,
        }

    def __str__(self):
        lines = []
        for c, s in self.intra.items():
            lines.append(f"intra class {c}: pairs={s.pairs} pre={s.mean_pre:.4f} "
                         f"post={s.mean_post:.4f} closer={s.satisfied}/{s.pairs}")
        s = self.inter
        lines.append(f"inter-class: pairs={s.pairs} pre={s.mean_pre:.4f} "
                     f"post={s.mean_post:.4f} farther={s.satisfied}/{s.pairs}")
        return "\n".join(lines)


def discriminative_warp_report(model: Model, ds: Dataset, pairs_per_class: int = 100,
                               seed: int = 0) -> WarpReport:
    """Compare pairwise distances before and after the TTN.

    For each class, ``pairs_per_class`` intra-class pairs; for each pair of
    classes, ``pairs_per_class`` inter-class pairs.  Intra pairs count as
    satisfied when they move closer, inter pairs when they move apart.
    """
    rng = np.random.default_rng(seed)
    Y, _, _ = model.warp(ds.X)
    classes = np.unique(ds.y)
    members = {c: np.flatnonzero(ds.y == c) for c in classes}

    def stats(i, j, intra):
        pre = np.sqrt(np.sum((ds.X[i] - ds.X[j]) ** 2, axis=(1, 2)))
        post = np.sqrt(np.sum((Y[i] - Y[j]) ** 2, axis=(1, 2)))
        ok = post < pre if intra else post > pre
        return PairStats(len(i), float(pre.mean()), float(post.mean()), int(ok.sum()))

    intra = {}
    for c in classes:
        m = members[c]
        if len(m) < 2:
            continue
        i = rng.choice(m, pairs_per_class)
        j = rng.choice(m, pairs_per_class)
        same = i == j
        while np.any(same):
            j[same] = rng.choice(m, int(same.sum()))
            same = i == j
        intra[int(c)] = stats(i, j, True)
    ii, jj = [], []
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            ii.append(rng.choice(members[classes[a]], pairs_per_class))
            jj.append(rng.choice(members[classes[b]], pairs_per_class))
    inter = stats(np.concatenate(ii), np.concatenate(jj), False) if ii else PairStats()
    total = sum(s.pairs for s in intra.values()) + inter.pairs
    return WarpReport(intra, inter, total)


def mean_warp_postprocess(outputs: list[TTNOutput]) -> list[Sequence]:
    """Re-warp every TTN output by the inverse of the mean predicted warp."""
    if not outputs:
        raise WarpError("mean_warp_postprocess needs at least one output")
    inv = invert(mean_warp([o.warp for o in outputs]))
    return [Sequence(resample_batch(o.warped.frames[None], inv.values[None])[0], o.warped.label)
            for o in outputs]
