"""Optimised dQSS improvement I against signal strength, one row per (n_Q, B).

    python3 scripts/dqss_improvement_curve.py --nq 4 6 --t2-ms 1000 --b-khz 0.1 1 10
"""

import argparse
import csv
import sys

import numpy as np

from qssense.dqss import NvRegister, optimize
from qssense.signal import khz, to_khz


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nq", type=int, nargs="+", default=[4, 6])
    p.add_argument("--t2-ms", type=float, default=1000.0)
    p.add_argument("--b-khz", type=float, nargs="+", default=list(np.geomspace(0.1, 30.0, 6)))
    p.add_argument("--sample", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    out = csv.writer(sys.stdout)
    out.writerow(["n_Q", "T2_ms", "B_khz", "N_G", "B_R0_khz", "I"])
    for n_q in args.nq:
        reg = NvRegister.default(n_q, t2_ms=args.t2_ms)
        for b_khz in args.b_khz:
            res = optimize(reg, khz(b_khz), sample=args.sample, rng=np.random.default_rng(args.seed))
            out.writerow([n_q, args.t2_ms, f"{b_khz:.4g}", res.n_g, f"{to_khz(res.b_r0):.4g}", f"{res.improvement:.4f}"])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
