"""ESU error and angle gap against the scaled duration x = (|d|^3 T / B^2)^(1/2).

Small x is the sudden regime where the error grows; it peaks near |d| T ~ 10 and falls steeply after.

    python3 scripts/esu_error_sweep.py --ratio 0.1 --x 2 4 8 16 32 64
"""

import argparse

from qssense.esu import EsuParams, esu_error, simulate_esu, theta_dynamical


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--detuning", type=float, default=2.0)
    p.add_argument("--ratio", type=float, default=0.1, help="B / |detuning|")
    p.add_argument("--omega", type=float, default=1000.0)
    p.add_argument("--x", type=float, nargs="+", default=[2, 4, 8, 16, 32, 64])
    args = p.parse_args(argv)

    d, b = args.detuning, args.ratio * abs(args.detuning)
    print("x       dT        eps        angle_gap")
    for x in args.x:
        params = EsuParams(b, args.omega, args.omega + d, x**2 * b**2 / abs(d) ** 3)
        theta, eps = esu_error(simulate_esu(params, 0.7))
        print(f"{x:<8.3g}{abs(d) * params.duration:<10.3g}{eps:<11.3e}{abs(theta - theta_dynamical(params)):.2e}")


if __name__ == "__main__":
    main()
