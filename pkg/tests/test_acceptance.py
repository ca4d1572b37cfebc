"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
in a summary section at the end of the run (and immediately with ``-s``).
Criterion 2 has two parts, reported on one line.
"""

import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from warpnet import gradcheck
from warpnet.cli import main
from warpnet.data import GenSpec, generate
from warpnet.experiments import (dataset1_study, supp_table, synthetic_train_config,
                                 synthetic_ttn)
from warpnet.model import build_model
from warpnet.train import train
from warpnet.ttn import constraint_batch
from warpnet.warp import (WarpFunction, compose, derivative_of, identity_warp, invert,
                          random_warp, validate, warp_from_derivative)

# pinned tolerances
C1_VANILLA_WARPED = (94.3, 98.3)
C1_TTN_WARPED = (97.0, 100.0)
C1_MIN_GAIN = 1.5
C3_MIN_GAIN = 3.0
C4_TOL = 1e-4
C4_CASES = 50
C4_BUDGET_S = 60.0
C5_SAMPLES = 10_000
C5_DUALITY_TOL = 1e-9
C5_INVERSE_TOL = 2.0


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- 1: mixture-vs-Gaussian table ---------------------------------------------

def test_criterion_1_supplement_table():
    table = supp_table(seeds=range(1, 11))
    uv, ut = table["Unwarped"]["Vanilla"][0], table["Unwarped"]["TTN"][0]
    wv, wt = table["Warped"]["Vanilla"][0], table["Warped"]["TTN"][0]
    checks = [round(uv, 2) == 100.0, round(ut, 2) == 100.0,
              C1_VANILLA_WARPED[0] <= wv <= C1_VANILLA_WARPED[1],
              C1_TTN_WARPED[0] <= wt <= C1_TTN_WARPED[1],
              wt - wv >= C1_MIN_GAIN]
    detail = (f"unwarped {uv:.2f}/{ut:.2f}, warped vanilla {wv:.2f} "
              f"+/- {table['Warped']['Vanilla'][1]:.2f}, TTN {wt:.2f} "
              f"+/- {table['Warped']['TTN'][1]:.2f} (gain {wt - wv:+.2f})")
    assert record(1, all(checks), detail), detail


# -- 2: dataset-1 discriminativity ---------------------------------------------

@pytest.fixture(scope="module")
def dataset1():
    return dataset1_study(seeds=range(5))


def test_criterion_2_dataset1(dataset1):
    r = dataset1
    gain = 100 * (np.mean(r.ttn) - np.mean(r.vanilla))
    acc_ok = gain > 0
    warp_ok = np.mean(r.inter) > np.mean(r.intra)
    detail = (f"accuracy vanilla {100 * np.mean(r.vanilla):.2f}% TTN {100 * np.mean(r.ttn):.2f}% "
              f"(gain {gain:+.2f}, needs > 0: {'ok' if acc_ok else 'not met'}); "
              f"warp distance inter {np.mean(r.inter):.2f} vs intra {np.mean(r.intra):.2f} "
              f"({'ok' if warp_ok else 'not met'})")
    record(2, acc_ok and warp_ok, detail)
    assert warp_ok, detail
    assert acc_ok, detail


# -- 3 and 7: affine distortion through the command line -------------------------

@pytest.fixture(scope="module")
def affine_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("affine")
    seed = "0"

    def run(*argv):
        assert main([str(a) for a in argv]) == 0, argv

    run("gen", "--kind", "mixture_vs_gauss", "--unwarped", "--t", 50, "--affine",
        "--a-range", "0.75,1.25", "--b-range", "0,24", "--seed", seed, "--out", root / "data")
    common = ["--data-dir", root / "data", "--base-lr", 1e-3, "--ttn-lr-ratio", 0.1,
              "--iterations", 1000, "--seed", seed]
    run("train", *common, "--out", root / "ttn")
    run("train", *common, "--no-ttn", "--out", root / "vanilla")
    out = {}
    for name in ("ttn", "vanilla"):
        run("eval", "--checkpoint", root / name / "checkpoint.bin",
            "--data", root / "data" / "test.csv", "--kmeans", 2, "--runs", 100,
            "--out", root / name / "eval")
        run("dump-warps", "--checkpoint", root / name / "checkpoint.bin",
            "--data", root / "data" / "test.csv", "--out", root / name / "warps")
        out[name] = {
            "summary": json.loads((root / name / "summary.json").read_text()),
            "eval": json.loads((root / name / "eval" / "eval.json").read_text()),
            "stats": json.loads((root / name / "warps" / "warps_stats.json").read_text()),
        }
    return out


def test_criterion_3_affine_realignment(affine_run):
    acc_t = affine_run["ttn"]["summary"]["final_accuracy_pct"]
    acc_v = affine_run["vanilla"]["summary"]["final_accuracy_pct"]
    stats = affine_run["ttn"]["stats"]
    s_in, s_out = stats["input"]["midpoint_std"], stats["warped"]["midpoint_std"]
    ok = acc_t - acc_v >= C3_MIN_GAIN and s_out < s_in
    detail = (f"accuracy TTN {acc_t:.2f}% vs vanilla {acc_v:.2f}% (gain {acc_t - acc_v:+.2f}); "
              f"support midpoint std {s_in:.2f} -> {s_out:.2f}")
    assert record(3, ok, detail), detail


def test_criterion_7_clustering(affine_run):
    t = affine_run["ttn"]["eval"]["clustering"]
    v = affine_run["vanilla"]["eval"]["clustering"]
    keys = ("purity", "homogeneity", "completeness")
    ok = all(t[k] > v[k] for k in keys)
    detail = ", ".join(f"{k} {v[k]:.3f} -> {t[k]:.3f}" for k in keys)
    assert record(7, ok, detail), detail


# -- 4: gradient suite --------------------------------------------------------------

def test_criterion_4_gradients():
    start = time.perf_counter()
    results = gradcheck.run_all(seed=0, cases=C4_CASES)
    elapsed = time.perf_counter() - start
    worst = max(results, key=lambda r: r.max_rel_error)
    ok = all(r.max_rel_error < C4_TOL and r.cases >= C4_CASES for r in results) \
        and elapsed < C4_BUDGET_S
    detail = (f"{len(results)} ops x {C4_CASES} cases, worst {worst.op} "
              f"{worst.max_rel_error:.2e}, {elapsed:.1f}s")
    assert record(4, ok, detail), detail


# -- 5: warp-group properties ---------------------------------------------------------

def test_criterion_5_warp_group():
    rng = np.random.default_rng(0)
    T = 50
    v = rng.standard_normal((C5_SAMPLES, T))
    gamma, _ = constraint_batch(v)
    valid = all(validate(WarpFunction(g)).valid for g in gamma)

    laws, duality, inverse = True, 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(2, 120))
        w = random_warp(n, float(rng.choice([0.1, 0.5, 1.0, 2.0])), rng)
        ident = identity_warp(n)
        laws &= np.array_equal(compose(w, ident).values, w.values)
        laws &= np.array_equal(compose(ident, w).values, w.values)
        duality = max(duality, np.max(np.abs(warp_from_derivative(derivative_of(w)).values
                                             - w.values)))
        strict = WarpFunction(np.concatenate([[0.0], np.cumsum(
            0.1 + (n - 1) * 0.9 * rng.dirichlet(np.ones(n - 1)))]))
        strict = WarpFunction(np.r_[strict.values[:-1], n - 1.0])
        inverse = max(inverse, np.max(np.abs(compose(strict, invert(strict)).values
                                             - np.arange(n))))
    ok = valid and laws and duality <= C5_DUALITY_TOL and inverse < C5_INVERSE_TOL
    detail = (f"{C5_SAMPLES} constraint outputs valid={valid}, identity laws exact={laws}, "
              f"duality max err {duality:.1e}, inverse law max err {inverse:.1e}")
    assert record(5, ok, detail), detail


# -- 6: baseline equivalence -------------------------------------------------------------

def test_criterion_6_baseline_equivalence():
    tr, te = generate(GenSpec(kind="mixture_vs_gauss", warp_roughness=1.0, seed=1))
    cfg = synthetic_train_config(1, ttn_lr_ratio=0.0)
    base, _ = train(build_model(tr.T, tr.N, seed=1), tr, te, cfg)
    frozen, _ = train(build_model(tr.T, tr.N, ttn=synthetic_ttn(tr.T), seed=1), tr, te, cfg)
    same_logits = np.array_equal(base.predict_logits(te.X), frozen.predict_logits(te.X))
    same_pred = np.array_equal(base.predict(te.X), frozen.predict(te.X))
    detail = f"logits bitwise equal={same_logits}, predictions equal={same_pred}"
    assert record(6, same_logits and same_pred, detail), detail
