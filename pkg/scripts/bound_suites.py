"""Worst observed mean/bound ratio of each sensing limit over random instances.

    python3 scripts/bound_suites.py --instances 200
"""

import argparse
import math

import numpy as np

from qssense.limits import (
    avg_distinguishability,
    avg_qfi,
    csp_bound,
    csp_distinguishability,
    long_time_bound,
    qfi_bound,
    random_modulations,
    random_protocol,
    short_time_bound,
)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    b, m = 1.0, args.samples
    worst = {"short-time": 0.0, "long-time": 0.0, "classical": 0.0, "fisher": 0.0}
    for _ in range(args.instances):
        n_s, n_a = int(rng.integers(1, 4)), int(rng.integers(0, 3))
        width = 200.0 * n_s * b
        lo = rng.uniform(0.0, width)

        t = rng.uniform(0.05, 1.0) / (n_s * b)
        est = avg_distinguishability(random_protocol(n_s, n_a, t, 10.0 / t, rng), b, (lo, lo + width), m, rng)
        worst["short-time"] = max(worst["short-time"], est.mean / short_time_bound(n_s, b, width))

        k = int(rng.integers(1, 5))
        t = k / (n_s * b)
        est = avg_distinguishability(random_protocol(n_s, n_a, t, 10.0 * k / t, rng), b, (lo, lo + width * k**2), m, rng)
        worst["long-time"] = max(worst["long-time"], est.mean / long_time_bound(n_s, b, width * k**2, t))

        t = rng.uniform(0.1, 3.0)
        est = csp_distinguishability(random_modulations(n_s, int(rng.integers(1, 17)), rng), t, b, (lo, lo + width), m, rng)
        worst["classical"] = max(worst["classical"], est.mean / csp_bound(n_s, b, width, t))

        est = avg_qfi(random_protocol(n_s, n_a, t, 10.0 / t, rng), (lo, lo + width), m, rng)
        worst["fisher"] = max(worst["fisher"], est.mean / qfi_bound(n_s, width, t))
    for name, ratio in worst.items():
        print(f"{name:<11s} worst mean/bound {ratio:.3f}")
    if not math.isfinite(max(worst.values())) or max(worst.values()) > 1:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
