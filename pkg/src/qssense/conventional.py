"""Conventional detection: the CPMG subroutine, the quasi-static Ramsey variant
and the bin-by-bin linear scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qdyn import propagate_z_commuting
from .signal import TWO_PI, AcSignal, Modulation, SensingProblem, filter_function, ramsey_filter

__all__ = [
    "CpmgPlan",
    "ProtocolOutcome",
    "cpmg_plan",
    "cpmg_phase",
    "cpmg_subroutine",
    "quasi_static_solve",
    "ramsey_phase",
    "scan_plan",
    "scan_solve",
    "verify_band",
]


@dataclass
class ProtocolOutcome:
    """Detection verdict plus a ``(label, duration, outcome)`` transcript."""

    detected: bool = False
    transcript: list[tuple[str, float, int | None]] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def elapsed(self) -> float:
        return math.fsum(d for _, d, _ in self.transcript)

    def extend(self, other: "ProtocolOutcome", prefix: str = "") -> None:
        self.transcript.extend((prefix + lab, d, z) for lab, d, z in other.transcript)
        self.detected = self.detected or other.detected


@dataclass(frozen=True)
class CpmgPlan:
    """Pulse count, duration and bin half-width for one target frequency."""

    target: float
    b_min: float
    pulses: int
    duration: float
    beta: float


def cpmg_plan(b_min: float, target: float) -> CpmgPlan:
    """``P = 2 ceil(w_t/B_min)``, ``T = P pi / w_t``, bin width ``beta = w_t / P``."""
    if not (b_min > 0 and target > 0):
        raise ValueError("b_min and target must be positive")
    half = math.ceil(target / b_min)
    pulses = 2 * half
    beta = target / pulses
    if target - beta / 2 < b_min * (1 - 1e-12):
        raise ValueError("target frequency too low for the CPMG subroutine (need w_t - beta/2 >= B_min)")
    return CpmgPlan(target, b_min, pulses, pulses * math.pi / target, beta)


def cpmg_phase(plan: CpmgPlan, signal: AcSignal, start, coupling: float = 1.0):
    """Accumulated Z angle for sequences starting at ``start`` (vectorised, filter-function form)."""
    start = np.asarray(start, dtype=float)
    w = signal.angular_frequency
    chi = filter_function(plan.pulses, plan.target, w)
    return coupling * signal.strength * plan.duration * chi * np.cos(signal.phase + w * (start + plan.duration / 2))


def cpmg_subroutine(
    b_min: float,
    target: float,
    signal: AcSignal | None,
    repetitions: int,
    rng: np.random.Generator,
    *,
    coupling: float = 1.0,
    clock: float = 0.0,
    abort_on_yes: bool = False,
    closed_form: bool = False,
) -> ProtocolOutcome:
    """Repeat {random wait, CPMG sensing, X-basis readout} ``repetitions`` times.

    The answer is YES when any readout returns 1. ``clock`` is the absolute time
    at which the subroutine starts; the signal phase is referenced to zero.
    ``closed_form`` takes the phase from the filter function instead of the
    piecewise time-domain integral (same value, far fewer operations).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    plan = cpmg_plan(b_min, target)
    out = ProtocolOutcome(info={"pulses": plan.pulses, "duration": plan.duration, "beta": plan.beta})
    now = clock
    for _ in range(repetitions):
        wait = rng.uniform(0.0, TWO_PI / b_min)
        now += wait
        if closed_form:
            theta = 0.0 if signal is None else float(cpmg_phase(plan, signal, now, coupling))
        else:
            mod = Modulation.cpmg(target, plan.pulses, start=now)
            theta = propagate_z_commuting(signal, coupling, (now, now + plan.duration), mod)
        z = int(rng.random() < math.sin(theta) ** 2)
        now += plan.duration
        out.transcript.append(("wait", wait, None))
        out.transcript.append(("cpmg", plan.duration, z))
        if z:
            out.detected = True
            if abort_on_yes:
                break
    return out


def quasi_static_solve(
    b_min: float,
    omega_min: float,
    signal: AcSignal | None,
    repetitions: int,
    rng: np.random.Generator,
    *,
    coupling: float = 1.0,
    clock: float = 0.0,
    abort_on_yes: bool = False,
) -> ProtocolOutcome:
    """Ramsey variant for slow tones ``omega_min < w <= B_min``: wait, then sense for ``pi/B_min``."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not (b_min > 0 and omega_min > 0):
        raise ValueError("b_min and omega_min must be positive")
    if signal is not None and signal.strength > 0 and not (omega_min < signal.angular_frequency <= b_min * (1 + 1e-12)):
        raise ValueError("quasi-static protocol needs omega_min < w <= B_min")
    return _ramsey_runs(b_min, omega_min, signal, repetitions, rng, coupling, clock, abort_on_yes)


def ramsey_phase(b_min: float, signal: AcSignal, start, coupling: float = 1.0):
    """Closed-form Ramsey angle ``B T chi_R(w) cos(phi + w t_s + w T/2)`` (vectorised)."""
    duration = math.pi / b_min
    w = signal.angular_frequency
    start = np.asarray(start, dtype=float)
    return coupling * signal.strength * duration * ramsey_filter(w, duration) * np.cos(
        signal.phase + w * (start + duration / 2)
    )


def scan_plan(problem: SensingProblem) -> tuple[float, np.ndarray]:
    """Common bin width and bin centres covering the CPMG part of the band.

    Frequencies up to the collective ``n_S B_min`` are left to the Ramsey
    variant; the rest is tiled with the smallest per-target ``beta`` found
    over the band, so every bin keeps the filter bound.
    """
    b_eff = problem.n_sensors * problem.b_min
    lo = max(problem.omega_min, b_eff)
    if lo >= problem.omega_max:
        return 0.0, np.empty(0)
    probe = np.linspace(lo, problem.omega_max, 2049)
    # beta(w_t) = w_t / (2 ceil(w_t/b)) dips just above multiples of b
    mults = np.arange(math.ceil(lo / b_eff), math.floor(problem.omega_max / b_eff) + 1) * b_eff
    probe = np.concatenate((probe, mults * (1 + 1e-9)))
    probe = probe[(probe >= lo) & (probe <= problem.omega_max)]
    beta = float(np.min(probe / (2 * np.ceil(probe / b_eff))))
    count = math.ceil((problem.omega_max - lo) / beta - 1e-12)
    centres = lo + (np.arange(count) + 0.5) * beta
    return beta, centres


def scan_solve(
    problem: SensingProblem,
    signal: AcSignal | None,
    rng: np.random.Generator,
    *,
    repetitions: int = 7,
    abort_on_yes: bool = True,
) -> ProtocolOutcome:
    """Linear scan: the Ramsey variant for the slow end, then one CPMG run per bin."""
    b_eff = problem.n_sensors * problem.b_min
    out = ProtocolOutcome()
    clock = 0.0
    strength = None if signal is None else AcSignal(problem.n_sensors * signal.strength, signal.angular_frequency, signal.phase)
    if problem.omega_min < b_eff:
        # an out-of-range tone still acts on the sensor during the Ramsey windows
        part = _ramsey_runs(b_eff, problem.omega_min, strength, repetitions, rng, 1.0, clock, abort_on_yes)
        out.extend(part, "slow:")
        clock += part.elapsed
        if out.detected and abort_on_yes:
            return _finish(out, problem)
    beta, centres = scan_plan(problem)
    for j, centre in enumerate(centres):
        part = cpmg_subroutine(b_eff, centre, strength, repetitions, rng, clock=clock, abort_on_yes=abort_on_yes)
        out.extend(part, f"bin{j}:")
        clock += part.elapsed
        if part.detected:
            out.info["bin"] = j
            if abort_on_yes:
                break
    out.info["beta"] = beta
    out.info["bins"] = len(centres)
    return _finish(out, problem)


def verify_band(
    b_min: float,
    lo: float,
    hi: float,
    signal: AcSignal | None,
    repetitions: int,
    rng: np.random.Generator,
    *,
    clock: float = 0.0,
    closed_form: bool = True,
) -> ProtocolOutcome:
    """Conventional check of ``[lo, hi]``: CPMG bins tiled across it, stopping at the first YES."""
    beta, centres = scan_plan(SensingProblem(b_min, lo, hi))
    if len(centres) == 0:
        raise ValueError("band lies below the CPMG range")
    out = ProtocolOutcome(info={"beta": beta, "bins": len(centres)})
    for centre in centres:
        part = cpmg_subroutine(b_min, centre, signal, repetitions, rng, clock=clock + out.elapsed,
                               abort_on_yes=True, closed_form=closed_form)
        out.extend(part)
        if part.detected:
            break
    return out


def _ramsey_runs(b_eff, omega_min, signal, repetitions, rng, coupling, clock, abort_on_yes):
    duration = math.pi / b_eff
    out = ProtocolOutcome(info={"duration": duration})
    now = clock
    for _ in range(repetitions):
        wait = rng.uniform(0.0, TWO_PI / omega_min)
        now += wait
        theta = propagate_z_commuting(signal, coupling, (now, now + duration), Modulation.constant())
        z = int(rng.random() < math.sin(theta) ** 2)
        now += duration
        out.transcript.append(("wait", wait, None))
        out.transcript.append(("ramsey", duration, z))
        if z:
            out.detected = True
            if abort_on_yes:
                break
    return out


def _finish(out: ProtocolOutcome, problem: SensingProblem) -> ProtocolOutcome:
    b_eff = problem.n_sensors * problem.b_min
    unit = math.ceil(problem.bandwidth / b_eff) / b_eff
    out.info["scaling_constant"] = out.elapsed / unit
    return out
