"""Median detection time of the noiseless search against bin count.

Bands are (W, 2W) with W just under 4 N beta, so each design has exactly N bins.

    python3 scripts/qss_scaling.py --bins 8 16 32 --trials 20
"""

import argparse
import math

import numpy as np

from qssense.qss import DEFAULT_GAMMA, QssConfig, design_oracle, qss_subband_solve
from qssense.signal import AcSignal, khz


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bins", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--b-min-khz", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    cfg = QssConfig()
    b = khz(args.b_min_khz)
    beta = cfg.beta(b, 1.0)
    medians = []
    print("N  degree  rounds  success  median_tau_ms")
    for n in args.bins:
        width = 0.99 * 4 * n * beta
        band = (width, 2 * width)
        design = design_oracle(b, band, cfg)
        rng = np.random.default_rng([args.seed, n])
        hits, times = 0, []
        for _ in range(args.trials):
            sig = AcSignal(b * rng.uniform(1.0, DEFAULT_GAMMA), rng.uniform(*band), rng.uniform(0, 2 * math.pi))
            out = qss_subband_solve(b, band, sig, cfg, rng)
            hits += out.detected
            times.append(out.elapsed)
        medians.append(float(np.median(times)))
        print(f"{n:<3d}{design.degree:>7d}{design.rounds:>8d}{hits / args.trials:>9.2f}{medians[-1]:>15.4g}")
    if len(args.bins) > 1:
        slope = np.polyfit(np.log(args.bins), np.log(medians), 1)[0]
        print(f"log-log slope of median time vs N: {slope:.3f}")


if __name__ == "__main__":
    main()
