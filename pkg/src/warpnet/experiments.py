"""Reproducible experiment protocols shared by the CLI, scripts and tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, GenSpec, apply_affine_distortion, generate
from .model import ClassifierConfig, Model, build_model
from .train import (TrainConfig, clustering_metrics, evaluate_accuracy, train)
from .ttn import TTNConfig

# roughness of the random warps for the mixture-vs-Gaussian table
SUPP_ROUGHNESS = 1.0
# offsets beyond 24 push part of the 50-frame payload off the 100-frame grid
AFFINE_A_RANGE = (0.75, 1.25)
AFFINE_B_RANGE = (0, 24)


def synthetic_ttn(T: int, N: int = 1) -> TTNConfig:
    """One conv layer (1 map, width 8) and one dense layer producing ``v``."""
    return TTNConfig(T, N, conv_layers=[(1, 8)], fc_layers=[], activation="tanh")


def synthetic_train_config(seed: int, **overrides) -> TrainConfig:
    return TrainConfig(**{"optimizer": "adam", "base_lr": 1e-4, "ttn_lr_ratio": 0.1,
                          "iterations": 1000, "batch_size": 32, "seed": seed, **overrides})


@dataclass
class RunResult:
    model: Model
    accuracy: float
    history: object


def fit(train_ds: Dataset, test_ds: Dataset, ttn: TTNConfig | None,
        cfg: TrainConfig, classifier: ClassifierConfig | None = None,
        model_seed: int | None = None) -> RunResult:
    classifier = classifier or ClassifierConfig(num_classes=train_ds.num_classes)
    seed = cfg.seed if model_seed is None else model_seed
    model = build_model(train_ds.T, train_ds.N, classifier, ttn, seed=seed)
    model, history = train(model, train_ds, test_ds, cfg)
    return RunResult(model, evaluate_accuracy(model, test_ds), history)


def paired_runs(spec: GenSpec, seeds, cfg_factory=synthetic_train_config):
    """Vanilla and TTN accuracy for each seed; the seed drives data and model."""
    vanilla, ttn = [], []
    for s in seeds:
        tr, te = generate(replace(spec, seed=s))
        cfg = cfg_factory(s)
        vanilla.append(fit(tr, te, None, cfg).accuracy)
        ttn.append(fit(tr, te, synthetic_ttn(spec.T), cfg).accuracy)
    return np.array(vanilla), np.array(ttn)


def supp_table(seeds=range(1, 11), roughness: float = SUPP_ROUGHNESS) -> dict:
    """Accuracy (percent, mean and std) for unwarped/warped x vanilla/TTN."""
    table = {}
    for warped in (False, True):
        spec = GenSpec(kind="mixture_vs_gauss", warped=warped, warp_roughness=roughness)
        v, t = paired_runs(spec, seeds)
        row = "Warped" if warped else "Unwarped"
        table[row] = {"Vanilla": (100 * v.mean(), 100 * v.std()),
                      "TTN": (100 * t.mean(), 100 * t.std()),
                      "runs": {"Vanilla": (100 * v).tolist(), "TTN": (100 * t).tolist()}}
    return table


def warp_class_distances(gamma: np.ndarray, labels: np.ndarray):
    """Mean pairwise l2 distance between warps: ``(intra_class, inter_class)``."""
    d = np.sqrt(np.maximum(
        np.sum(gamma ** 2, 1)[:, None] + np.sum(gamma ** 2, 1)[None] - 2 * gamma @ gamma.T, 0))
    same = labels[:, None] == labels[None]
    off = ~np.eye(len(labels), dtype=bool)
    return float(d[same & off].mean()), float(d[~same].mean())


@dataclass
class Dataset1Result:
    vanilla: list = field(default_factory=list)
    ttn: list = field(default_factory=list)
    intra: list = field(default_factory=list)
    inter: list = field(default_factory=list)


def dataset1_study(seeds=range(5), sample: int = 500) -> Dataset1Result:
    out = Dataset1Result()
    for s in seeds:
        tr, te = generate(GenSpec(kind="gauss2", seed=s))
        cfg = synthetic_train_config(s)
        out.vanilla.append(fit(tr, te, None, cfg).accuracy)
        run = fit(tr, te, synthetic_ttn(tr.T), cfg)
        out.ttn.append(run.accuracy)
        _, gamma, _ = run.model.warp(te.X[:sample])
        intra, inter = warp_class_distances(gamma, te.y[:sample])
        out.intra.append(intra)
        out.inter.append(inter)
    return out


def support_intervals(X: np.ndarray, tol: float = 1e-12):
    """First and last frame with any channel above ``tol`` in magnitude, per sample."""
    active = np.any(np.abs(X) > tol, axis=2)
    first = np.argmax(active, axis=1)
    last = X.shape[1] - 1 - np.argmax(active[:, ::-1], axis=1)
    return first, last


def support_spread(X: np.ndarray) -> dict:
    """Cross-sample spread of the nonzero support interval."""
    first, last = support_intervals(X)
    mid = 0.5 * (first + last)
    return {"first_std": float(first.std()), "last_std": float(last.std()),
            "midpoint_std": float(mid.std()), "midpoint_var": float(mid.var()),
            "width_mean": float((last - first).mean())}


def build_datasets(spec: GenSpec, a_range=None, b_range=None):
    """Generate ``spec``; with ranges given, embed and affinely distort both splits.

    The distortion streams derive from ``spec.seed`` so one seed fixes everything.
    """
    tr, te = generate(spec)
    if a_range is None and b_range is None:
        return tr, te
    a_range = AFFINE_A_RANGE if a_range is None else tuple(a_range)
    b_range = AFFINE_B_RANGE if b_range is None else tuple(b_range)
    streams = np.random.SeedSequence([spec.seed, 0xAFF]).generate_state(2)
    tr = apply_affine_distortion(tr, a_range, b_range, seed=int(streams[0]))
    te = apply_affine_distortion(te, a_range, b_range, seed=int(streams[1]))
    return tr, te


def affine_spec(seed: int, train_count: int = 8000, test_count: int = 2000) -> GenSpec:
    """Unwarped length-50 mixture-vs-Gaussian data, the payload for distortion."""
    return GenSpec(kind="mixture_vs_gauss", T=50, train_count=train_count,
                   test_count=test_count, seed=seed, warped=False)


def affine_datasets(seed: int, train_count: int = 8000, test_count: int = 2000,
                    a_range=AFFINE_A_RANGE, b_range=AFFINE_B_RANGE):
    """Length-50 mixture-vs-Gaussian data embedded in 100 frames and affinely warped."""
    return build_datasets(affine_spec(seed, train_count, test_count), a_range, b_range)


def affine_train_config(seed: int) -> TrainConfig:
    """Classifier at 1e-3, TTN at one tenth of that, Adam, 1000 iterations."""
    return synthetic_train_config(seed, base_lr=1e-3)


@dataclass
class AffineResult:
    vanilla_accuracy: float
    ttn_accuracy: float
    vanilla_clusters: tuple
    ttn_clusters: tuple
    input_spread: dict
    output_spread: dict
    ttn_model: Model = None


def affine_study(seed: int = 0, kmeans_runs: int = 100, cluster_sample: int = 1000) -> AffineResult:
    tr, te = affine_datasets(seed)
    cfg = affine_train_config(seed)
    van = fit(tr, te, None, cfg)
    ttn = fit(tr, te, synthetic_ttn(tr.T), cfg)
    Xs, ys = te.X[:cluster_sample], te.y[:cluster_sample]
    k = te.num_classes
    vc = clustering_metrics(van.model.features(Xs), ys, k, kmeans_runs, seed=seed)
    tc = clustering_metrics(ttn.model.features(Xs), ys, k, kmeans_runs, seed=seed)
    warped, _, _ = ttn.model.warp(te.X)
    return AffineResult(van.accuracy, ttn.accuracy, vc, tc, support_spread(te.X),
                        support_spread(warped), ttn.model)
