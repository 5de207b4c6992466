"""Search-based sensing: bin geometry, the QSP-digitised sensing oracle, Grover
search with conventional verification, strength/frequency decomposition and
the short-window variant for noisy sensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .conventional import ProtocolOutcome, scan_solve, verify_band
from .esu import esu_angle, dynamical_angle
from .qdyn import block_superoperators
from .qsp import QspPhases, approx_shifted_sign, eval_cqsp_blocks, symmetrize, synth_phases
from .signal import AcSignal, SensingProblem, bump_integral

__all__ = [
    "BinLayout",
    "OracleDesign",
    "QssConfig",
    "Subproblem",
    "decompose_subproblems",
    "design_oracle",
    "grover_search",
    "make_bins",
    "qss_noisy_solve",
    "qss_solve",
    "qss_subband_solve",
]

DEFAULT_GAMMA = math.sqrt(19.0 / 18.0)


@dataclass(frozen=True)
class BinLayout:
    """``n_bins`` two-piece bins over ``[omega_min, omega_min + 4 n_bins beta]``.

    Bin ``k`` (0-based) owns quarters ``4k, 4k+2`` (odd parity) or
    ``4k+1, 4k+3`` (even parity); its centre sits between its two pieces.
    """

    omega_min: float
    beta: float
    n_bins: int
    parity: str

    def __post_init__(self) -> None:
        if self.parity not in ("odd", "even"):
            raise ValueError("parity must be 'odd' or 'even'")
        if self.n_bins < 1 or self.n_bins & (self.n_bins - 1):
            raise ValueError("n_bins must be a power of two")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def offset(self) -> int:
        return 0 if self.parity == "odd" else 1

    @property
    def omega_max(self) -> float:
        return self.omega_min + 4 * self.n_bins * self.beta

    def centers(self) -> np.ndarray:
        return self.omega_min + (4 * np.arange(self.n_bins) + 1.5 + self.offset) * self.beta

    def center(self, k: int) -> float:
        return self.omega_min + (4 * k + 1.5 + self.offset) * self.beta

    def intervals(self, k: int) -> tuple[tuple[float, float], tuple[float, float]]:
        first = self.omega_min + (4 * k + self.offset) * self.beta
        return (first, first + self.beta), (first + 2 * self.beta, first + 3 * self.beta)

    def bin_of(self, omega: float) -> int | None:
        """Index of the bin containing ``omega`` (quarters are half-open), or None."""
        q = math.floor((omega - self.omega_min) / self.beta)
        if q < 0 or q >= 4 * self.n_bins or (q - self.offset) % 2:
            return None
        return q // 4


def make_bins(omega_min: float, omega_max: float, beta: float, parity: str) -> BinLayout:
    """Layout with ``N`` the next power of two covering the band (padding goes upward)."""
    width = omega_max - omega_min
    if not beta > 0:
        raise ValueError("beta must be positive")
    if width < 4 * beta * (1 - 1e-12):
        raise ValueError("band narrower than one bin (need |band| >= 4 beta)")
    need = max(1, math.ceil(width / (4 * beta) - 1e-9))
    return BinLayout(omega_min, beta, 1 << (need - 1).bit_length(), parity)


@dataclass(frozen=True)
class QssConfig:
    """Knobs of the search protocol.

    ``c_beta=None`` picks ``beta`` so that ``B/|delta| <= ratio_cap`` at the
    worst in-bin point; ``c_t=None`` picks ``T`` so that the largest promised
    marked angle equals ``theta_cap``. Explicit values follow the asymptotic
    schedule ``beta = C_beta B_min sqrt(ln x)``, ``T = C_T beta / B_min^2``.
    """

    gamma: float = DEFAULT_GAMMA
    c_beta: float | None = None
    c_t: float | None = None
    ratio_cap: float = 0.1
    theta_cap: float = math.pi / 4
    eps1: float = 0.05
    eps2: float = 0.05
    eps3: float = 0.05
    repetitions: int = 3
    x0: float = 100.0
    check_repetitions: int = 12
    gap_margin: float = 0.05
    stop_on_yes: bool = False

    def __post_init__(self) -> None:
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if self.repetitions < 1 or self.check_repetitions < 1:
            raise ValueError("repetition counts must be positive")
        if not 0 < self.theta_cap <= math.pi / 2:
            raise ValueError("theta_cap must lie in (0, pi/2]")
        if not 0 <= self.gap_margin < 0.5:
            raise ValueError("gap_margin must lie in [0, 0.5)")

    def paper_c_t(self) -> float:
        """``pi / (2 I gamma^2)`` with ``I`` the bump's mean value."""
        return math.pi / (2 * bump_integral(1) * self.gamma**2)

    def beta(self, b_min: float, width: float) -> float:
        if self.c_beta is None:
            return 2 * self.gamma * b_min / self.ratio_cap
        x = width / b_min
        return self.c_beta * b_min * math.sqrt(max(math.log(x), 1e-12))

    def duration(self, b_min: float, beta: float) -> float:
        if self.c_t is not None:
            return self.c_t * beta / b_min**2
        # the dynamical angle is linear in T at fixed B/delta
        per_time = float(dynamical_angle(self.gamma * b_min, beta / 2, 1.0))
        return self.theta_cap / per_time


@dataclass(frozen=True)
class OracleDesign:
    """Everything about the oracle that does not depend on the signal."""

    b_min: float
    band: tuple[float, float]
    beta: float
    duration: float
    n_bins: int
    x_star: float
    delta: float
    eps_qsp: float
    phases: QspPhases
    angle_bounds: tuple[float, float, float, float]

    @property
    def degree(self) -> int:
        return self.phases.degree

    @property
    def rounds(self) -> int:
        return int(math.floor(math.pi * math.sqrt(self.n_bins) / 4))

    @property
    def search_time(self) -> float:
        return self.rounds * self.degree * self.duration

    def layouts(self) -> tuple[BinLayout, BinLayout]:
        lo, hi = self.band
        return make_bins(lo, hi, self.beta, "odd"), make_bins(lo, hi, self.beta, "even")

    def error_proxy(self, esu_error: float = 0.0) -> float:
        """``sqrt(N) (sqrt(2 eps_QSP) + L eps_ESU)``."""
        return math.sqrt(self.n_bins) * (math.sqrt(2 * self.eps_qsp) + self.degree * esu_error)


def design_oracle(b_min: float, band: tuple[float, float], config: QssConfig) -> OracleDesign:
    """Bins, ESU duration and QSP phases for one subband."""
    lo, hi = map(float, band)
    beta = config.beta(b_min, hi - lo)
    layout = make_bins(lo, hi, beta, "odd")
    t = config.duration(b_min, beta)
    g = config.gamma
    # counter-rotating partner: w + w_k >= w >= |band|
    shift = float(dynamical_angle(g * b_min, hi - lo, t))
    marked_lo = float(dynamical_angle(b_min, 1.5 * beta, t)) - shift
    marked_hi = float(dynamical_angle(g * b_min, 0.5 * beta, t)) + shift
    other_hi = float(dynamical_angle(g * b_min, 2.5 * beta, t)) + shift
    if not (other_hi < marked_lo and marked_hi <= math.pi / 2):
        raise ValueError("promised angle gap is empty for this configuration")
    c_marked, c_other = math.cos(marked_lo), math.cos(other_hi)
    gap = c_other - c_marked
    x_star = 0.5 * (c_marked + c_other)
    delta = gap * (1 - 2 * config.gap_margin)
    eps_qsp = config.eps1**2 / (2 * layout.n_bins)
    phases = _phases(round(x_star, 15), round(delta, 15), eps_qsp)
    return OracleDesign(b_min, (lo, hi), beta, t, layout.n_bins, x_star, delta, eps_qsp, phases,
                        (marked_lo, marked_hi, other_hi, shift))


@lru_cache(maxsize=64)
def _phases(x_star: float, delta: float, eps_qsp: float) -> QspPhases:
    q = approx_shifted_sign(x_star, delta, eps_qsp / 5)
    return synth_phases(symmetrize(q))


def signal_angles(design: OracleDesign, layout: BinLayout, signal: AcSignal | None) -> np.ndarray:
    """Digitised ESU angle for every bin of ``layout``."""
    if signal is None or signal.strength == 0.0:
        return np.zeros(layout.n_bins)
    return esu_angle(signal.strength, signal.angular_frequency, layout.centers(), design.duration)


def _z_blocks(angles: np.ndarray) -> np.ndarray:
    out = np.zeros((len(angles), 2, 2), dtype=complex)
    out[:, 0, 0] = np.exp(-1j * angles)
    out[:, 1, 1] = np.exp(1j * angles)
    return out


def grover_amplitudes(oracle_blocks: np.ndarray, rounds: int) -> np.ndarray:
    """Final ``(N, 2)`` amplitudes of register (x) sensor after ``rounds`` of ``R_s O``."""
    n = oracle_blocks.shape[0]
    psi = np.zeros((n, 2), dtype=complex)
    psi[:, 0] = 1 / math.sqrt(n)
    for _ in range(rounds):
        psi = np.einsum("kij,kj->ki", oracle_blocks, psi)
        psi = 2 * psi.mean(axis=0, keepdims=True) - psi
    return psi


def grover_search(oracle_blocks, n_bins: int, rng: np.random.Generator, rounds: int | None = None) -> int:
    """Run ``floor(pi sqrt(N)/4)`` rounds from ``|s>|0>`` and sample the register."""
    blocks = np.asarray(oracle_blocks, dtype=complex)
    if blocks.ndim == 2:
        blocks = _dense_to_blocks(blocks, n_bins)
    if n_bins < 1 or n_bins & (n_bins - 1) or blocks.shape[0] != n_bins:
        raise ValueError("n_bins must be a power of two matching the oracle")
    rounds = int(math.floor(math.pi * math.sqrt(n_bins) / 4)) if rounds is None else rounds
    probs = register_distribution(grover_amplitudes(blocks, rounds))
    return int(rng.choice(n_bins, p=probs))


def register_distribution(psi: np.ndarray) -> np.ndarray:
    p = np.sum(np.abs(psi) ** 2, axis=1)
    return p / p.sum()


def _dense_to_blocks(u: np.ndarray, n: int) -> np.ndarray:
    if u.shape != (2 * n, 2 * n):
        raise ValueError("dense oracle must be 2N x 2N")
    idx = np.arange(n)
    return u.reshape(n, 2, n, 2)[idx, :, idx, :]


def _verify(design, layout, k, signal, config, rng, clock):
    out = ProtocolOutcome()
    for lo, hi in layout.intervals(k):
        part = verify_band(design.b_min, lo, hi, signal, config.check_repetitions, rng, clock=clock + out.elapsed)
        out.extend(part)
        if part.detected:
            break
    return out


def qss_subband_solve(
    b_min: float,
    band: tuple[float, float],
    signal: AcSignal | None,
    config: QssConfig,
    rng: np.random.Generator,
    *,
    dephasing: float = 0.0,
) -> ProtocolOutcome:
    """Solve the restricted problem on one subband: Grover over odd and even bins,
    each candidate checked conventionally; YES only on a verified detection.

    ``dephasing`` is the rate ``Gamma`` of a ``sqrt(Gamma) Z`` jump on the
    sensor during the oracle; verification stays noiseless.
    """
    lo, hi = map(float, band)
    if (hi - lo) / b_min < config.x0:
        out = scan_solve(SensingProblem(b_min, lo, hi), signal, rng)
        out.info["fallback"] = True
        return out
    design = design_oracle(b_min, (lo, hi), config)
    out = ProtocolOutcome(info={
        "fallback": False, "n_bins": design.n_bins, "beta": design.beta, "duration": design.duration,
        "degree": design.degree, "rounds": design.rounds, "x_star": design.x_star, "delta": design.delta,
        "eps_qsp": design.eps_qsp, "error_proxy": design.error_proxy(), "found": [], "marked": {},
    })
    for layout in design.layouts():
        out.info["marked"][layout.parity] = None if signal is None else layout.bin_of(signal.angular_frequency)
    for rep in range(config.repetitions):
        for layout in design.layouts():
            angles = signal_angles(design, layout, signal)
            if dephasing > 0:
                probs = _noisy_register_distribution(design, angles, dephasing)
            else:
                oracle = eval_cqsp_blocks(design.phases, _z_blocks(angles))
                probs = register_distribution(grover_amplitudes(oracle, design.rounds))
            k = int(rng.choice(design.n_bins, p=probs))
            out.transcript.append((f"grover-{layout.parity}", design.search_time, k))
            check = _verify(design, layout, k, signal, config, rng, out.elapsed)
            out.extend(check, f"check-{layout.parity}{k}:")
            out.info["found"].append((layout.parity, k, bool(check.detected)))
            if check.detected and config.stop_on_yes:
                return out
    return out


def _noisy_register_distribution(design: OracleDesign, angles: np.ndarray, rate: float) -> np.ndarray:
    rho = noisy_grover_state(design, angles, rate)
    n = design.n_bins
    idx = np.arange(n)
    p = np.real(np.trace(rho[idx, idx], axis1=-2, axis2=-1))
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def noisy_grover_state(design: OracleDesign, angles: np.ndarray, rate: float, rounds: int | None = None) -> np.ndarray:
    """Register-sensor density blocks ``(N, N, 2, 2)`` after Grover with a dephasing sensor."""
    n = design.n_bins
    rounds = design.rounds if rounds is None else rounds
    h = _z_blocks(np.zeros(n))
    h[:, 0, 0], h[:, 1, 1] = angles / design.duration, -angles / design.duration
    left = np.broadcast_to(h[:, None], (n, n, 2, 2))
    right = np.broadcast_to(h[None, :], (n, n, 2, 2))
    sup = block_superoperators(left, right, 2 * rate, design.duration)
    rho = np.zeros((n, n, 2, 2), dtype=complex)
    rho[:, :, 0, 0] = 1.0 / n
    refl = 2.0 / n * np.ones((n, n)) - np.eye(n)
    phis = design.phases.angles
    rx = np.array([[[math.cos(p), -1j * math.sin(p)], [-1j * math.sin(p), math.cos(p)]] for p in phis])
    for _ in range(rounds):
        rho = rx[0] @ rho @ rx[0].conj().T
        for r in rx[1:]:
            rho = np.einsum("klij,klj->kli", sup, rho.reshape(n, n, 4)).reshape(n, n, 2, 2)
            rho = r @ rho @ r.conj().T
        rho = np.einsum("ak,klij,lb->abij", refl, rho, refl)
    return rho


def pure_grover_state(design: OracleDesign, angles: np.ndarray, rounds: int | None = None) -> np.ndarray:
    psi = grover_amplitudes(eval_cqsp_blocks(design.phases, _z_blocks(angles)),
                            design.rounds if rounds is None else rounds)
    return np.einsum("ki,lj->klij", psi, psi.conj())


@dataclass(frozen=True)
class Subproblem:
    """One restricted instance: strengths ``[b_lo, b_hi]`` and band ``[omega_lo, omega_hi]``."""

    b_lo: float
    b_hi: float
    omega_lo: float
    omega_hi: float
    kind: str  # "qss" or "conventional"

    def contains(self, b: float, omega: float) -> bool:
        return self.b_lo <= b <= self.b_hi and self.omega_lo <= omega <= self.omega_hi


def decompose_subproblems(problem: SensingProblem, gamma: float = DEFAULT_GAMMA) -> list[Subproblem]:
    """Strength shells ``[g^(i-1), g^i] B_min`` times octave bands, plus a conventional
    instance for strengths beyond the last shell."""
    b_min, w_lo, w_hi = problem.b_min, problem.omega_min, problem.omega_max
    x = problem.bandwidth / b_min
    i_max = max(1, math.ceil(math.log(x) / math.log(gamma) - 1e-12))
    j_max = max(1, math.ceil(math.log2(w_hi / w_lo) - 1e-12))
    octaves = [(w_lo * 2 ** (j - 1), min(w_lo * 2**j, w_hi)) for j in range(1, j_max + 1)]
    subs = [
        Subproblem(b_min * gamma ** (i - 1), b_min * gamma**i, a, b, "qss")
        for i in range(1, i_max + 1)
        for a, b in octaves
    ]
    subs.append(Subproblem(b_min * gamma**i_max, math.inf, w_lo, w_hi, "conventional"))
    return subs


def subproblem_budget(subs: list[Subproblem]) -> tuple[float, float]:
    """``sum B_i^(-3/2) sqrt(|band_j|)`` and its geometric-series bound."""
    qss = [s for s in subs if s.kind == "qss"]
    total = math.fsum(s.b_lo**-1.5 * math.sqrt(s.omega_hi - s.omega_lo) for s in qss)
    b_min = min(s.b_lo for s in qss)
    gamma = qss[0].b_hi / qss[0].b_lo
    widths = {(s.omega_lo, s.omega_hi) for s in qss}
    bound = b_min**-1.5 * gamma**1.5 / (gamma**1.5 - 1) * math.fsum(math.sqrt(b - a) for a, b in widths)
    return total, bound


def qss_solve(problem: SensingProblem, signal: AcSignal | None, config: QssConfig, rng: np.random.Generator) -> ProtocolOutcome:
    """Full problem: every restricted instance in turn, YES as soon as one verifies."""
    out = ProtocolOutcome(info={"instances": 0})
    n_s = problem.n_sensors
    eff = None if signal is None else AcSignal(n_s * signal.strength, signal.angular_frequency, signal.phase)
    for sub in decompose_subproblems(problem, config.gamma):
        out.info["instances"] += 1
        if sub.kind == "conventional":
            part = scan_solve(SensingProblem(n_s * sub.b_lo, sub.omega_lo, sub.omega_hi), eff, rng)
        else:
            part = qss_subband_solve(n_s * sub.b_lo, (sub.omega_lo, sub.omega_hi), eff, config, rng)
        out.extend(part, f"[{sub.kind} {sub.b_lo:.4g} {sub.omega_lo:.4g}-{sub.omega_hi:.4g}]")
        if out.detected:
            break
    return out


@dataclass(frozen=True)
class NoisyPlan:
    window: float
    chunk_width: float
    chunks: list[tuple[float, float]] = field(default_factory=list)
    votes: int = 1


def noisy_plan(problem: SensingProblem, rate: float, config: QssConfig | None = None, *, c: float | None = None,
               c_prime: float = 0.05, vote_factor: float = 2.0) -> NoisyPlan:
    """Window ``T_noise = c'/(Gamma n_S)`` and the chunk width probed inside it.

    With ``c`` given the width is ``c (n_S B_min)^3 T_noise^2``. Otherwise it is
    the widest power-of-two bin count whose odd and even searches fit in the
    window under ``config``.
    """
    if not rate > 0:
        raise ValueError("dephasing rate must be positive")
    n_s, b = problem.n_sensors, problem.b_min
    window = c_prime / (rate * n_s)
    if c is not None:
        width = c * (n_s * b) ** 3 * window**2
    else:
        config = QssConfig() if config is None else config
        beta = config.beta(n_s * b, problem.bandwidth)
        best, n = None, 2
        while 2 * n * beta < problem.bandwidth:  # stop once the previous size covers the band
            if 4 * n * beta < config.x0 * n_s * b:
                n *= 2
                continue
            try:
                trial = design_oracle(n_s * b, (problem.omega_min, problem.omega_min + 4 * n * beta), config)
            except ValueError:  # narrow bands lose the angle gap to the counter-rotating term
                n *= 2
                continue
            if 2 * trial.search_time > window:
                break
            best, n = n, 2 * n
        if best is None:
            raise ValueError("no search fits inside the noise window; lower the dephasing rate")
        width = 4 * best * beta
    width = min(width, problem.bandwidth)
    count = max(1, math.ceil(problem.bandwidth / width - 1e-9))
    edges = problem.omega_min + width * np.arange(count + 1)
    edges[-1] = max(edges[-1], problem.omega_max)
    chunks = [(float(edges[j]), float(edges[j + 1])) for j in range(count)]
    votes = max(1, math.ceil(vote_factor * math.log(count + 1)))
    return NoisyPlan(window, width, chunks, votes)


def qss_noisy_solve(
    problem: SensingProblem,
    signal: AcSignal | None,
    rate: float,
    config: QssConfig,
    rng: np.random.Generator,
    *,
    c: float | None = None,
    c_prime: float = 0.05,
    vote_factor: float = 2.0,
    threshold: float = 1.0 / 3.0,
) -> ProtocolOutcome:
    """Cover the band in short chunks, each searched ``O(log #chunks)`` times with a
    dephasing sensor; a chunk says YES when the accepting fraction reaches ``threshold``."""
    plan = noisy_plan(problem, rate, config, c=c, c_prime=c_prime, vote_factor=vote_factor)
    n_s = problem.n_sensors
    eff = None if signal is None else AcSignal(n_s * signal.strength, signal.angular_frequency, signal.phase)
    cfg = replace(config, repetitions=1, stop_on_yes=False)
    out = ProtocolOutcome(info={"window": plan.window, "chunk_width": plan.chunk_width,
                                "chunks": len(plan.chunks), "votes": plan.votes, "accept_fraction": []})
    for lo, hi in plan.chunks:
        yes = 0
        for _ in range(plan.votes):
            part = qss_subband_solve(n_s * problem.b_min, (lo, hi), eff, cfg, rng, dephasing=rate * n_s)
            yes += int(part.detected)
            out.transcript.extend(part.transcript)
        frac = yes / plan.votes
        out.info["accept_fraction"].append(frac)
        if frac >= threshold:
            out.detected = True
            break
    return out
