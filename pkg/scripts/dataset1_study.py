"""Two-Gaussian dataset: accuracy with and without a TTN, and warp class dependence."""

import argparse

import numpy as np

from warpnet.experiments import dataset1_study

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    res = dataset1_study(range(args.seeds))
    for s, (v, t, a, e) in enumerate(zip(res.vanilla, res.ttn, res.intra, res.inter)):
        print(f"seed {s}: vanilla {100 * v:.2f}%  TTN {100 * t:.2f}%  "
              f"warp distance intra {a:.2f} inter {e:.2f}")
    print(f"mean improvement {100 * (np.mean(res.ttn) - np.mean(res.vanilla)):+.2f} points")
