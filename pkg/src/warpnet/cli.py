"""``warpnet`` command line: gen, train, eval, dump-warps, gradcheck.

Exit codes are 0 on success, 1 on runtime failure and 2 on usage or
configuration errors.  ``WARPNET_THREADS`` caps the BLAS thread pools; it is
applied before numpy is first imported.
"""

from __future__ import annotations

import os

_threads = os.environ.get("WARPNET_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict, fields  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import experiments, gradcheck, nn  # noqa: E402
from .data import GenSpec, load_dataset, save_dataset  # noqa: E402
from .model import ClassifierConfig, Model, build_model  # noqa: E402
from .train import (ConfigError, DivergenceError, TrainConfig, clustering_metrics,  # noqa: E402
                    discriminative_warp_report, evaluate_accuracy, mean_warp_postprocess, train)
from .resample import Sequence  # noqa: E402
from .ttn import TTNConfig, TTNOutput  # noqa: E402
from .warp import WarpFunction  # noqa: E402

TRAIN_CSV, TEST_CSV, META_JSON = "train.csv", "test.csv", "meta.json"
CHECKPOINT, HISTORY, SUMMARY = "checkpoint.bin", "history.csv", "summary.json"
WARPS_CSV, WARPS_STATS, EVAL_JSON = "warps.csv", "warps_stats.json", "eval.json"

# config "data" keys mirror the gen flags
DATA_KEYS = {"kind": "kind", "t": "T", "train_n": "train_count", "test_n": "test_count",
             "noise": "noise_sigma", "roughness": "warp_roughness", "warped": "warped"}
CONFIG_KEYS = {"data", "data_dir", "ttn", "classifier", "train", "seed", "out"}


def _pct(x: float) -> float:
    return round(100.0 * float(x), 2)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- gen ---------------------------------------------------------------------

def _affine_ranges(data: dict):
    aff = data.get("affine")
    if not aff:
        return None, None
    if aff is True:
        aff = {}
    return (aff.get("a_range", experiments.AFFINE_A_RANGE),
            aff.get("b_range", experiments.AFFINE_B_RANGE))


def _spec_from_data(data: dict, seed: int) -> GenSpec:
    unknown = set(data) - set(DATA_KEYS) - {"affine", "seed"}
    if unknown:
        raise ConfigError(f"data.{sorted(unknown)[0]}: unknown field")
    kwargs = {DATA_KEYS[k]: v for k, v in data.items() if k in DATA_KEYS}
    try:
        return GenSpec(seed=int(data.get("seed", seed)), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data: {exc}") from None


def cmd_gen(args) -> int:
    data = {"kind": args.kind, "t": args.t, "train_n": args.train_n, "test_n": args.test_n,
            "noise": args.noise, "roughness": args.roughness, "warped": args.warped}
    if args.affine:
        data["affine"] = {"a_range": args.a_range, "b_range": args.b_range}
    spec = _spec_from_data(data, args.seed)
    tr, te = experiments.build_datasets(spec, *_affine_ranges(data))
    out = _out_dir(args.out)
    save_dataset(tr, out / TRAIN_CSV)
    save_dataset(te, out / TEST_CSV)
    meta = {"spec": asdict(spec), "affine": data.get("affine"), "T": tr.T, "N": tr.N,
            "train_count": len(tr), "test_count": len(te), "num_classes": tr.num_classes}
    _dump_json(out / META_JSON, meta)
    print(f"wrote {len(tr)} train / {len(te)} test sequences of length {tr.T} "
          f"({spec.kind}, seed {spec.seed}) to {out}")
    return 0


# -- train -------------------------------------------------------------------

def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return seeds


def _section(config: dict, name: str, cls, **extra):
    raw = config.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown field")
    try:
        return cls(**{**raw, **extra})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(config) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    return config


def resolve_config(args) -> dict:
    config = load_config(args.config) if args.config else {}
    if args.data_dir is not None:
        config["data_dir"] = args.data_dir
    if args.no_ttn:
        config["ttn"] = None
    elif "ttn" not in config:
        config["ttn"] = {}
    if args.out is not None:
        config["out"] = args.out
    if "out" not in config:
        raise ConfigError("out: no output directory (use --out or the config field)")
    train_over = {k: getattr(args, k) for k in
                  ("iterations", "base_lr", "optimizer", "batch_size", "ttn_lr_ratio")
                  if getattr(args, k) is not None}
    config["train"] = {**(config.get("train") or {}), **train_over}
    if args.seeds is not None:
        config["seeds"] = args.seeds
    else:
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError(f"seed: expected an integer, got {seed!r}")
        config["seeds"] = [seed]
    return config


def _datasets_for(config: dict, seed: int):
    if config.get("data_dir"):
        d = Path(config["data_dir"])
        for name in (TRAIN_CSV, TEST_CSV):
            if not (d / name).exists():
                raise ConfigError(f"data_dir: {d / name} does not exist")
        return load_dataset(d / TRAIN_CSV), load_dataset(d / TEST_CSV)
    data = config.get("data") or {}
    if not isinstance(data, dict):
        raise ConfigError("data: expected an object")
    spec = _spec_from_data(data, seed)
    return experiments.build_datasets(spec, *_affine_ranges(data))


def _model_for(config: dict, tr, seed: int) -> Model:
    classifier = _section(config, "classifier", ClassifierConfig)
    if classifier.num_classes < tr.num_classes:
        raise ConfigError(f"classifier.num_classes: {classifier.num_classes} < "
                          f"{tr.num_classes} classes in the data")
    ttn = None
    if config.get("ttn") is not None:
        ttn = _section(config, "ttn", TTNConfig, output_length=tr.T, in_channels=tr.N)
    return build_model(tr.T, tr.N, classifier, ttn, seed=seed)


def cmd_train(args) -> int:
    config = resolve_config(args)
    out = _out_dir(config["out"])
    runs = []
    first_model = None
    histories = []
    for seed in config["seeds"]:
        tr, te = _datasets_for(config, seed)
        cfg = _section(config, "train", TrainConfig, seed=seed)
        model = _model_for(config, tr, seed)
        model, history = train(model, tr, te, cfg)
        acc = evaluate_accuracy(model, te)
        runs.append({"seed": seed, "accuracy": acc, "accuracy_pct": _pct(acc)})
        histories.append((seed, history))
        if first_model is None:
            first_model = model
        print(f"seed {seed}: test accuracy {_pct(acc):.2f}%")
    nn.save_params(first_model.params, out / CHECKPOINT)
    with (out / HISTORY).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "iteration", "train_loss", "test_accuracy"])
        for seed, h in histories:
            for row in zip(h.iterations, h.train_loss, h.test_accuracy):
                w.writerow([seed, row[0], repr(row[1]), repr(row[2])])
    accs = np.array([r["accuracy"] for r in runs])
    summary = {
        "architecture": first_model.architecture(),
        "checkpoint_seed": config["seeds"][0],
        "config": {k: v for k, v in config.items() if k != "out"},
        "runs": runs,
        "final_accuracy": runs[0]["accuracy"],
        "final_accuracy_pct": runs[0]["accuracy_pct"],
        "mean_accuracy_pct": _pct(accs.mean()),
        "std_accuracy_pct": _pct(accs.std()),
    }
    _dump_json(out / SUMMARY, summary)
    print(f"accuracy over {len(runs)} run(s): {summary['mean_accuracy_pct']:.2f} "
          f"+/- {summary['std_accuracy_pct']:.2f}%")
    return 0


# -- eval / dump-warps ---------------------------------------------------------

def load_model(checkpoint, summary=None) -> Model:
    checkpoint = Path(checkpoint)
    summary = Path(summary) if summary else checkpoint.parent / SUMMARY
    if not summary.exists():
        raise ConfigError(f"summary: {summary} not found (needed for the architecture)")
    arch = json.loads(summary.read_text())["architecture"]
    return Model.from_architecture(arch, nn.load_params(checkpoint))


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint, args.summary)
    ds = load_dataset(args.data)
    acc = evaluate_accuracy(model, ds)
    report = {"accuracy": acc, "accuracy_pct": _pct(acc)}
    print(f"accuracy: {_pct(acc):.2f}%")
    if args.kmeans is not None:
        p, h, c = clustering_metrics(model.features(ds.X), ds.y, args.kmeans, args.runs,
                                     seed=args.seed)
        report["clustering"] = {"k": args.kmeans, "runs": args.runs, "purity": p,
                                "homogeneity": h, "completeness": c}
        print(f"clustering (k={args.kmeans}, {args.runs} runs): purity {p:.4f} "
              f"homogeneity {h:.4f} completeness {c:.4f}")
    if args.warp_report:
        wr = discriminative_warp_report(model, ds, args.pairs, seed=args.seed)
        report["warp_report"] = wr.to_dict()
        print(wr)
    if args.out:
        _dump_json(_out_dir(args.out) / EVAL_JSON, report)
    return 0


def cmd_dump_warps(args) -> int:
    model = load_model(args.checkpoint, args.summary)
    ds = load_dataset(args.data)
    Y, gamma, v = model.warp(ds.X)
    post = None
    if args.postprocess:
        outputs = [TTNOutput(Sequence(Y[i], int(ds.y[i])), WarpFunction(gamma[i]), v[i])
                   for i in range(len(ds))]
        post = np.stack([s.frames for s in mean_warp_postprocess(outputs)])
    S, T, N = ds.X.shape
    out = _out_dir(args.out)
    header = (["sample", "label", "t"] + [f"x{c}" for c in range(N)] + ["v", "gamma"]
              + [f"warped{c}" for c in range(N)])
    if post is not None:
        header += [f"post{c}" for c in range(N)]
    with (out / WARPS_CSV).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(S):
            for t in range(T):
                row = [i, int(ds.y[i]), t, *map(repr, ds.X[i, t].tolist()), repr(float(v[i, t])),
                       repr(float(gamma[i, t])), *map(repr, Y[i, t].tolist())]
                if post is not None:
                    row += list(map(repr, post[i, t].tolist()))
                w.writerow(row)
    stats = {"input": experiments.support_spread(ds.X), "warped": experiments.support_spread(Y)}
    if post is not None:
        stats["postprocessed"] = experiments.support_spread(post)
    _dump_json(out / WARPS_STATS, stats)
    print(f"wrote {S * T} rows to {out / WARPS_CSV}; support midpoint std "
          f"{stats['input']['midpoint_std']:.3f} -> {stats['warped']['midpoint_std']:.3f}")
    return 0


def read_warps_csv(path) -> dict:
    """Parse a ``warps.csv`` back into arrays keyed by column, shaped ``(S, T)``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=np.float64)
    T = int(body[:, 2].max()) + 1
    return {name: body[:, k].reshape(-1, T) for k, name in enumerate(header)}


# -- gradcheck ---------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(seed=args.seed, cases=args.cases, corrupt=args.corrupt)
    for r in results:
        print(f"{r.op:<24s} max_rel_error {r.max_rel_error:.3e} "
              f"{'PASS' if r.passed else 'FAIL'}")
    failed = [r.op for r in results if not r.passed]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


# -- parser ------------------------------------------------------------------

def _pair(kind):
    def parse(text):
        try:
            lo, hi = (kind(x) for x in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
        return [lo, hi]
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="warpnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--kind", required=True, choices=["gauss2", "nwave_vs_gauss",
                                                     "mixture_vs_gauss"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--t", type=int, default=100)
    g.add_argument("--train-n", type=int, default=8000)
    g.add_argument("--test-n", type=int, default=2000)
    g.add_argument("--noise", type=float, default=0.2)
    g.add_argument("--roughness", type=float, default=0.5)
    g.add_argument("--warped", dest="warped", action="store_true", default=True)
    g.add_argument("--unwarped", dest="warped", action="store_false")
    g.add_argument("--affine", action="store_true",
                   help="embed into 100 frames and apply a random affine warp")
    g.add_argument("--a-range", type=_pair(float), default=list(experiments.AFFINE_A_RANGE))
    g.add_argument("--b-range", type=_pair(int), default=list(experiments.AFFINE_B_RANGE))
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model (optionally over a seed sweep)")
    t.add_argument("--config")
    t.add_argument("--out")
    t.add_argument("--data-dir")
    t.add_argument("--no-ttn", action="store_true")
    t.add_argument("--seed", type=int)
    t.add_argument("--seeds", type=_parse_seeds, help="e.g. 1-10 or 1,3,5")
    t.add_argument("--iterations", type=int)
    t.add_argument("--base-lr", type=float)
    t.add_argument("--optimizer", choices=sorted(nn.OPTIMIZERS))
    t.add_argument("--batch-size", type=int)
    t.add_argument("--ttn-lr-ratio", type=float)
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a checkpoint"),
                                 ("dump-warps", cmd_dump_warps, "export TTN warps as CSV")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--summary", help="summary.json holding the architecture "
                                         "(default: next to the checkpoint)")
        e.add_argument("--data", required=True, help="dataset CSV")
        e.add_argument("--out", required=name == "dump-warps")
        e.set_defaults(func=func)
        if name == "eval":
            e.add_argument("--kmeans", type=int, metavar="K")
            e.add_argument("--runs", type=int, default=100)
            e.add_argument("--warp-report", action="store_true")
            e.add_argument("--pairs", type=int, default=100)
            e.add_argument("--seed", type=int, default=0)
        else:
            e.add_argument("--postprocess", action="store_true")

    c = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cases", type=int, default=50)
    c.add_argument("--corrupt", choices=sorted(gradcheck.CHECKS), help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"warpnet {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"warpnet {args.command}: training diverged at iteration {exc.iteration} "
              f"(loss {exc.loss})", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"warpnet {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
