"""Mixture-vs-Gaussian table: vanilla vs TTN, unwarped vs warped, 10 seeds.

Usage: python3 scripts/supp_table.py [--seeds 10]
"""

import argparse
import json

from warpnet.experiments import supp_table

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    table = supp_table(seeds=range(1, args.seeds + 1))
    print(f"{'':10s}{'Vanilla':>18s}{'TTN':>18s}")
    for row in ("Unwarped", "Warped"):
        cells = [f"{m:.2f} +/- {s:.2f}" for m, s in (table[row]["Vanilla"], table[row]["TTN"])]
        print(f"{row:10s}{cells[0]:>18s}{cells[1]:>18s}")
    print(json.dumps({r: table[r]["runs"] for r in table}, indent=1))
