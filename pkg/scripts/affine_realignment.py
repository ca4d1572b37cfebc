"""Affine-distortion experiment: accuracy, clustering and support realignment."""

import argparse

from warpnet.experiments import affine_study

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kmeans-runs", type=int, default=100)
    args = ap.parse_args()
    r = affine_study(args.seed, kmeans_runs=args.kmeans_runs)
    print(f"accuracy: vanilla {100 * r.vanilla_accuracy:.2f}%  TTN {100 * r.ttn_accuracy:.2f}%")
    for name, v, t in zip(("purity", "homogeneity", "completeness"),
                          r.vanilla_clusters, r.ttn_clusters):
        print(f"{name:>12s}: vanilla {v:.3f}  TTN {t:.3f}")
    print(f"support midpoint std: input {r.input_spread['midpoint_std']:.2f}  "
          f"warped {r.output_spread['midpoint_std']:.2f}")
