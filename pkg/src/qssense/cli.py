"""Command-line front end.

Every numeric flag also accepts ``sweep:<lo>:<hi>:<lin|log>:<count>``; several
sweeps expand to their Cartesian product. Each point gets the seed
``SeedSequence(root, spawn_key=(index,))`` and results are written in point
order, so identical argv and seed give byte-identical files:

* ``<out>/<name>.csv``: one row per point, 12 significant digits;
* ``<out>/<name>.jsonl``: one run record per point with the resolved config.

Exit status is 0 on success, 2 on a configuration error and 3 when a bound or
correctness check fails.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3
JOBS_ENV = "QSSENSE_JOBS"


class ConfigError(ValueError):
    """Invalid flags, sweep specs or config files."""


@dataclass(frozen=True)
class Sweep:
    lo: float
    hi: float
    spacing: str
    count: int

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        parts = text.split(":")
        if len(parts) != 5 or parts[0] != "sweep":
            raise ConfigError(f"bad sweep spec {text!r}; expected sweep:<lo>:<hi>:<lin|log>:<count>")
        try:
            lo, hi, count = float(parts[1]), float(parts[2]), int(parts[4])
        except ValueError as exc:
            raise ConfigError(f"bad sweep spec {text!r}") from exc
        if parts[3] not in ("lin", "log") or count < 1:
            raise ConfigError(f"bad sweep spec {text!r}")
        if parts[3] == "log" and not (lo > 0 and hi > 0):
            raise ConfigError("log sweeps need positive endpoints")
        return cls(lo, hi, parts[3], count)

    def values(self) -> list[float]:
        grid = np.geomspace(self.lo, self.hi, self.count) if self.spacing == "log" else np.linspace(
            self.lo, self.hi, self.count)
        return [float(v) for v in grid]


def _numeric(kind):
    def parse(text: str):
        try:
            if isinstance(text, str) and text.startswith("sweep:"):
                return Sweep.parse(text)
            return kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc) if isinstance(exc, ConfigError) else
                                             f"expected a number or sweep spec, got {text!r}") from exc
    parse.__name__ = kind.__name__
    return parse


def point_seed(root: int, index: int) -> int:
    """64-bit seed for sweep point ``index`` under ``root``."""
    return int(np.random.SeedSequence(root, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def expand(params: dict) -> list[dict]:
    """Cartesian product over the swept entries, first swept flag slowest."""
    keys = [k for k, v in params.items() if isinstance(v, Sweep)]
    grids = [params[k].values() for k in keys]
    points = []
    for combo in itertools.product(*grids):
        p = dict(params)
        p.update(zip(keys, combo))
        points.append(p)
    return points


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return "" if value is None else str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


# kernels: each takes (params, seed) and returns (csv row dict, extra record dict)

def _khz(x):
    from .signal import khz
    return float(khz(x))


def _random_in_band(params, rng, lo_khz, hi_khz):
    from .signal import AcSignal
    if not params.get("signal_b_khz"):
        return None
    f = params.get("signal_f_khz")
    f = rng.uniform(lo_khz, hi_khz) if f is None else f
    return AcSignal(_khz(params["signal_b_khz"]), _khz(f), rng.uniform(0, 2 * math.pi))


def run_conventional(params, seed):
    from .conventional import scan_solve
    from .signal import SensingProblem
    rng = np.random.default_rng(seed)
    prob = SensingProblem(_khz(params["b_min_khz"]), _khz(params["f_lo_khz"]), _khz(params["f_hi_khz"]),
                          int(params["n_sensors"]))
    hits, times, scale = 0, [], []
    for _ in range(int(params["trials"])):
        sig = _random_in_band(params, rng, params["f_lo_khz"], params["f_hi_khz"])
        out = scan_solve(prob, sig, rng, repetitions=int(params["repetitions"]))
        hits += out.detected
        times.append(out.elapsed)
        scale.append(out.info["scaling_constant"])
    row = {"detect_rate": hits / int(params["trials"]), "median_time_ms": float(np.median(times)),
           "mean_scaling_constant": float(np.mean(scale))}
    return row, {}


def _qss_config(params):
    from .qss import QssConfig
    return QssConfig(repetitions=int(params["repetitions"]), x0=float(params["x0"]))


def run_qss(params, seed):
    from .qss import qss_solve, qss_subband_solve
    from .signal import SensingProblem
    rng = np.random.default_rng(seed)
    cfg = _qss_config(params)
    b = _khz(params["b_min_khz"])
    lo, hi = _khz(params["f_lo_khz"]), _khz(params["f_hi_khz"])
    hits, times, info = 0, [], {}
    for _ in range(int(params["trials"])):
        sig = _random_in_band(params, rng, params["f_lo_khz"], params["f_hi_khz"])
        if params["mode"] == "full":
            out = qss_solve(SensingProblem(b, lo, hi), sig, cfg, rng)
        else:
            out = qss_subband_solve(b, (lo, hi), sig, cfg, rng)
        hits += out.detected
        times.append(out.elapsed)
        info = out.info
    row = {"detect_rate": hits / int(params["trials"]), "median_time_ms": float(np.median(times)),
           "n_bins": info.get("n_bins"), "degree": info.get("degree")}
    return row, {"design": {k: v for k, v in info.items() if k not in ("found", "marked")}}


def run_qss_noisy(params, seed):
    from .qss import qss_noisy_solve
    from .signal import SensingProblem
    rng = np.random.default_rng(seed)
    cfg = _qss_config(params)
    prob = SensingProblem(_khz(params["b_min_khz"]), _khz(params["f_lo_khz"]), _khz(params["f_hi_khz"]))
    hits, times, info = 0, [], {}
    for _ in range(int(params["trials"])):
        sig = _random_in_band(params, rng, params["f_lo_khz"], params["f_hi_khz"])
        out = qss_noisy_solve(prob, sig, float(params["gamma_per_ms"]), cfg, rng, c_prime=float(params["c_prime"]))
        hits += out.detected
        times.append(out.elapsed)
        info = out.info
    row = {"detect_rate": hits / int(params["trials"]), "median_time_ms": float(np.median(times)),
           "chunks": info.get("chunks"), "votes": info.get("votes")}
    return row, {"plan": {k: info.get(k) for k in ("window", "chunk_width", "chunks", "votes")}}


def _register(params):
    from .dqss import NvRegister
    if params.get("register"):
        reg = NvRegister.load(params["register"])
        t2 = params.get("t2_ms")
        return reg if t2 is None else reg.with_t2(float(t2))
    t2 = params.get("t2_ms")
    return NvRegister.default(int(params["nq"]), None if not t2 else float(t2), float(params["delta0_khz"]))


def _dqss_row(reg, params, b, n_g, b_r0, imp):
    t2 = None if reg.gamma == 0 else 1.0 / reg.gamma
    return {"B_khz": params["b_khz"], "T2_ms": t2, "n_Q": reg.n_q, "N_G": n_g, "B_R0_khz": b_r0 / (2 * math.pi),
            "I_mean": imp.improvement, "I_var": imp.variance}


def run_dqss(params, seed):
    from .dqss import improvement, optimize
    rng = np.random.default_rng(seed)
    reg = _register(params)
    b = _khz(params["b_khz"])
    sample = None if not params.get("sample") else int(params["sample"])
    if params.get("n_g") is None or params.get("b_r0_khz") is None:
        best = optimize(reg, b, sample=sample, rng=np.random.default_rng(point_seed(seed, 0)))
        n_g, b_r0 = best.n_g, best.b_r0
    else:
        n_g, b_r0 = int(params["n_g"]), _khz(params["b_r0_khz"])
    imp = improvement(reg, b, n_g, b_r0, sample=sample, rng=np.random.default_rng(point_seed(seed, 0)))
    return _dqss_row(reg, params, b, n_g, b_r0, imp), {"k_stars": imp.k_stars}


def run_dqss_optimize(params, seed):
    from .dqss import ansatz_b_r0, optimize
    reg = _register(params)
    b = _khz(params["b_khz"])
    sample = None if not params.get("sample") else int(params["sample"])
    grid = None
    if params.get("grid"):
        grid = _khz(np.geomspace(0.01, 50.0, int(params["grid"])))
    best = optimize(reg, b, grid, sample=sample, rng=np.random.default_rng(seed))
    ans = ansatz_b_r0(reg.n_q, b)
    gi = int(np.argmin(np.abs(np.log(best.b_r0_grid) - math.log(ans))))
    t2 = None if reg.gamma == 0 else 1.0 / reg.gamma
    row = {"B_khz": params["b_khz"], "T2_ms": t2, "n_Q": reg.n_q, "N_G": best.n_g,
           "B_R0_khz": best.b_r0 / (2 * math.pi), "I_mean": best.improvement,
           "ansatz_B_R0_khz": ans / (2 * math.pi), "ansatz_cell_hit": bool(best.b_r0 == best.b_r0_grid[gi])}
    return row, {"table": best.table, "b_r0_grid_khz": best.b_r0_grid / (2 * math.pi)}


def run_limits(params, seed):
    from . import limits as L
    from .qdyn import DephasingSpec
    rng = np.random.default_rng(seed)
    checks = ["short-time", "long-time", "qfi", "csp", "lindblad"] if params["check"] == "all" else [params["check"]]
    ns, nq = int(params["n_sensors"]), int(params["n_ancillas"])
    samples, count = int(params["samples"]), int(params["protocols"])
    b, width = 1.0, float(params["width"]) * ns
    verdicts = {}
    for name in checks:
        worst, ok = 0.0, True
        for _ in range(count):
            lo = rng.uniform(0.0, width)
            if name == "short-time":
                t = rng.uniform(0.05, 1.0) / (ns * b)
                put = L.random_protocol(ns, nq, t, float(params["gate_rate"]) / t, rng)
                est, bound = L.avg_distinguishability(put, b, (lo, lo + width), samples, rng), L.short_time_bound(ns, b, width)
            elif name == "long-time":
                k = int(rng.integers(2, 6))
                t = k / (ns * b)
                put = L.random_protocol(ns, nq, t, float(params["gate_rate"]) * k / t, rng)
                wide = width * k**2
                est, bound = L.avg_distinguishability(put, b, (lo, lo + wide), samples, rng), L.long_time_bound(ns, b, wide, t)
            elif name == "qfi":
                t = rng.uniform(0.1, 3.0)
                put = L.random_protocol(ns, nq, t, float(params["gate_rate"]) / t, rng)
                est, bound = L.avg_qfi(put, (lo, lo + width), samples, rng), L.qfi_bound(ns, width, t)
            elif name == "csp":
                t = rng.uniform(0.1, 3.0)
                chi = L.random_modulations(ns, int(rng.integers(1, 17)), rng)
                est, bound = L.csp_distinguishability(chi, t, b, (lo, lo + width), samples, rng), L.csp_bound(ns, b, width, t)
            else:
                dist, bound = _lindblad_instance(rng, L, DephasingSpec)
                est = L.Estimate(dist, 0.0, 1)
            ok = ok and est.below(bound)
            worst = max(worst, (est.mean - 3 * est.stderr) / bound if bound > 0 else 0.0)
        verdicts[name] = {"ok": ok, "worst_ratio": worst, "instances": count}
    row = {name: v["ok"] for name, v in verdicts.items()}
    row.update({f"{name}_worst_ratio": v["worst_ratio"] for name, v in verdicts.items()})
    return row, {"verdicts": verdicts, "ok": all(v["ok"] for v in verdicts.values())}


def _lindblad_instance(rng, L, spec_cls):
    from scipy.stats import unitary_group
    h0 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h0 = 0.5 * (h0 + h0.conj().T)
    h1 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h1 = 0.5 * (h1 + h1.conj().T)
    psi = unitary_group.rvs(4, random_state=rng)[:, 0]
    rho = np.outer(psi, psi.conj())
    rate = float(rng.uniform(0.01, 0.3))
    return L.lindblad_bound_check(lambda t: h0 + math.cos(t) * h1, [spec_cls(rate, (0, 1))],
                                  float(rng.uniform(0.1, 2.0)), rho)


def run_oracle(params, seed):
    from .oracle_synth import BooleanFunctionSpec, ideal_oracle, register_oracle, sensor_fidelity, synth_oracle
    n, m = int(params["n"]), int(params["m"])
    if params.get("table"):
        specs = [BooleanFunctionSpec.from_bits(n, m, params["table"])]
    else:
        total = 2 ** (2**n * m)
        if total > 256:
            raise ConfigError("enumerating every function is limited to 256 tables; pass --table")
        width = 2**n * m
        specs = [BooleanFunctionSpec.from_bits(n, m, format(c, f"0{width}b")) for c in range(total)]
    steps = None if not params.get("trotter_steps") else int(params["trotter_steps"])
    worst_dev, worst_fid, reports = 0.0, 1.0, []
    for spec in specs:
        res = synth_oracle(spec, float(params["omega0"]), steps)
        dev = float(np.max(np.abs(register_oracle(res) - ideal_oracle(spec))))
        fid = sensor_fidelity(res)
        worst_dev, worst_fid = max(worst_dev, dev), min(worst_fid, fid)
        reports.append({"table": "".join(str(b) for row in spec.table for b in row), "max_dev": dev, "fidelity": fid})
    ok = worst_dev < 1e-4 and worst_fid > 1 - 1e-6
    return {"functions": len(specs), "max_dev": worst_dev, "min_fidelity": worst_fid, "ok": ok}, {
        "functions": reports, "ok": ok}


KERNELS = {
    "conventional": run_conventional,
    "qss": run_qss,
    "qss-noisy": run_qss_noisy,
    "dqss": run_dqss,
    "dqss-optimize": run_dqss_optimize,
    "limits": run_limits,
    "oracle": run_oracle,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="root seed (64-bit)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--name", default=None, help="file stem (default: the subcommand)")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")


def _band_flags(p, lo=1000.0, hi=2000.0):
    num = _numeric(float)
    p.add_argument("--b-min-khz", type=num, default=1.0)
    p.add_argument("--f-lo-khz", type=num, default=lo)
    p.add_argument("--f-hi-khz", type=num, default=hi)
    p.add_argument("--signal-b-khz", type=num, default=0.0, help="0 means no signal")
    p.add_argument("--signal-f-khz", type=num, default=None, help="default: uniform in the band per trial")
    p.add_argument("--trials", type=_numeric(int), default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qssense", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    num, inum = _numeric(float), _numeric(int)

    p = sub.add_parser("conventional", help="bin-by-bin CPMG scan")
    _band_flags(p, 10.0, 40.0)
    p.add_argument("--n-sensors", type=inum, default=1)
    p.add_argument("--repetitions", type=inum, default=7)

    for name, helptext in (("qss", "search-based detection"), ("qss-noisy", "search with a dephasing sensor")):
        p = sub.add_parser(name, help=helptext)
        _band_flags(p, 650.0, 1300.0)
        p.add_argument("--repetitions", type=inum, default=3)
        p.add_argument("--x0", type=num, default=100.0)
        if name == "qss":
            p.add_argument("--mode", choices=("subband", "full"), default="subband")
        else:
            p.add_argument("--gamma-per-ms", type=num, default=1e-10)
            p.add_argument("--c-prime", type=num, default=0.05)

    for name in ("dqss", "dqss-optimize"):
        p = sub.add_parser(name, help="discrete search on an NV register" if name == "dqss" else
                           "full (B_R0, N_G) optimisation table")
        p.add_argument("--nq", type=inum, default=4)
        p.add_argument("--t2-ms", type=num, default=None)
        p.add_argument("--b-khz", type=num, default=1.0)
        p.add_argument("--delta0-khz", type=num, default=0.0)
        p.add_argument("--register", default=None, help="register JSON (n_Q, couplings_khz, delta0_khz, t2_ms)")
        p.add_argument("--sample", type=inum, default=8, help="signal frequencies per evaluation (0 = all)")
        if name == "dqss":
            p.add_argument("--n-g", type=inum, default=None)
            p.add_argument("--b-r0-khz", type=num, default=None)
        else:
            p.add_argument("--grid", type=inum, default=16, help="log-spaced B_R0 cells over 0.01-50 kHz")

    p = sub.add_parser("limits", help="bound suites on random protocols")
    p.add_argument("--check", choices=("short-time", "long-time", "qfi", "csp", "lindblad", "all"), default="all")
    p.add_argument("--samples", type=inum, default=500)
    p.add_argument("--protocols", type=inum, default=20)
    p.add_argument("--n-sensors", type=inum, default=1)
    p.add_argument("--n-ancillas", type=inum, default=1)
    p.add_argument("--width", type=num, default=200.0, help="band width in units of n_S B")
    p.add_argument("--gate-rate", type=num, default=10.0, help="mean gates per window")

    p = sub.add_parser("oracle", help="Boolean oracle synthesis")
    p.add_argument("--n", type=inum, default=2)
    p.add_argument("--m", type=inum, default=1)
    p.add_argument("--table", default=None, help="truth-table bitstring (default: every function)")
    p.add_argument("--table-file", default=None, help="file holding the bitstring")
    p.add_argument("--omega0", type=num, default=1.0)
    p.add_argument("--trotter-steps", type=inum, default=None)

    p = sub.add_parser("sweep", help="run a sweep described in a JSON file")
    p.add_argument("config", help='JSON: {"command": ..., "args": {"flag": value | "sweep:..."}}')

    for action in sub.choices.values():
        _add_common(action)
    return parser


def _resolve(args: argparse.Namespace) -> tuple[str, dict]:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "out", "name", "jobs")}
    if args.command == "oracle" and params.pop("table_file", None):
        params["table"] = Path(args.table_file).read_text().strip()
    if args.command == "sweep":
        raise AssertionError("sweep is resolved before dispatch")
    return args.command, params


def _sweep_argv(path: str, common: list[str]) -> list[str]:
    try:
        spec = json.loads(Path(path).read_text())
        command, flags = spec["command"], spec.get("args", {})
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed sweep config {path}: {exc}") from exc
    if command not in KERNELS:
        raise ConfigError(f"unknown command {command!r} in sweep config")
    argv = [command]
    for key, value in flags.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv + common


def _execute(task):
    command, params, seed = task
    return KERNELS[command](params, seed)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        if args.command == "sweep":
            common = ["--seed", str(args.seed), "--out", args.out, "--name", args.name or "sweep"]
            if args.jobs is not None:
                common += ["--jobs", str(args.jobs)]
            return run(_sweep_argv(args.config, common))
        command, params = _resolve(args)
        points = expand(params)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"qssense: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, "1") or 1)
    tasks = [(command, p, point_seed(args.seed, i)) for i, p in enumerate(points)]
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_execute, tasks))
        else:
            results = [_execute(t) for t in tasks]
    except (ConfigError, ValueError) as exc:
        print(f"qssense: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"qssense: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or command
    swept = [k for k, v in params.items() if isinstance(v, Sweep)]
    rows = [row for row, _ in results]
    columns = ["index", "seed"] + swept + [c for c in rows[0] if c not in swept]
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for i, (task, row) in enumerate(zip(tasks, rows)):
            values = {"index": i, "seed": task[2], **{k: task[1][k] for k in swept}, **row}
            fh.write(",".join(fmt(values.get(c)) for c in columns) + "\n")
    failed = False
    with open(out / f"{stem}.jsonl", "w") as fh:
        for i, (task, (row, extra)) in enumerate(zip(tasks, results)):
            record = {"command": command, "index": i, "root_seed": args.seed, "seed": task[2],
                      "config": {k: v for k, v in task[1].items()}, "result": row, **extra}
            failed = failed or extra.get("ok") is False
            fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")
    return EXIT_CHECK if failed else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
