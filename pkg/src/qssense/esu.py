"""Elementary sensing unit: a bump-ramped, frame-rotated coupling that turns an
unknown-phase tone into a phase-independent Z rotation whose angle depends on
the detuning between the tone and a bin centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .qdyn import I2, X, Y, Z, ControlSchedule, _ordered_product, evolve_converged, expm_2x2
from .signal import Modulation, bump_chi

# constants appearing in the angle and validity statements of the ESU bound
ANGLE_ERROR_CONST = 3 * math.pi / math.e
VALIDITY_RATIO = 3 * math.e / (4 * math.pi**2)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


@dataclass(frozen=True)
class EsuParams:
    """One ESU block: tone ``(strength, signal_frequency)`` against bin centre ``bin_center``."""

    strength: float
    signal_frequency: float
    bin_center: float
    duration: float
    pulse_resolution: int = 1024

    def __post_init__(self) -> None:
        if not (self.strength >= 0 and self.duration > 0 and self.signal_frequency > 0):
            raise ValueError("need strength >= 0, duration > 0 and signal_frequency > 0")
        if self.bin_center < 0:
            raise ValueError("bin centre must be non-negative")
        if not 0 < abs(self.detuning) <= self.signal_frequency:
            raise ValueError("need 0 < |bin_center - signal_frequency| <= signal_frequency")
        if self.pulse_resolution < 2:
            raise ValueError("pulse_resolution must be >= 2")

    @property
    def detuning(self) -> float:
        return self.bin_center - self.signal_frequency

    def chi(self, t):
        return bump_chi(np.clip(np.asarray(t, dtype=float) / self.duration, 0.0, 1.0))


def esu_hamiltonian(params: EsuParams, phase: float):
    """Vectorised ``H(t) = B chi(t) cos(w t + phi) (cos(w_k t) X - sin(w_k t) Y)``."""
    b, w, wk = params.strength, params.signal_frequency, params.bin_center

    def h(t):
        t = np.asarray(t, dtype=float)
        amp = b * params.chi(t) * np.cos(w * t + phase)
        c, s = np.cos(wk * t), np.sin(wk * t)
        return amp[:, None, None] * (c[:, None, None] * X - s[:, None, None] * Y)

    return h


def rwa_hamiltonian(params: EsuParams, phase: float):
    """Co-rotating part ``(B/2) chi(t) (cos(d t - phi) X - sin(d t - phi) Y)``."""
    b, d = params.strength, params.detuning

    def h(t):
        t = np.asarray(t, dtype=float)
        amp = 0.5 * b * params.chi(t)
        arg = d * t - phase
        return amp[:, None, None] * (np.cos(arg)[:, None, None] * X - np.sin(arg)[:, None, None] * Y)

    return h


def _initial_steps(params: EsuParams) -> int:
    fastest = params.signal_frequency + params.bin_center
    return int(max(256, 2 ** math.ceil(math.log2(16 * fastest * params.duration / (2 * math.pi) + 1))))


def simulate_esu(params: EsuParams, phase: float, *, tol: float = 1e-10, max_steps: int = 2**22) -> np.ndarray:
    """Propagator of one ESU block over ``[0, T]`` with a step-doubling certificate."""
    if params.strength == 0:
        return I2.copy()
    u, _, _ = evolve_converged(
        esu_hamiltonian(params, phase), params.duration, tol=tol, steps=_initial_steps(params) // 2,
        max_steps=max_steps, vectorized=True,
    )
    return u


def simulate_rwa(params: EsuParams, phase: float, *, tol: float = 1e-10, max_steps: int = 2**22) -> np.ndarray:
    if params.strength == 0:
        return I2.copy()
    steps = max(128, 2 ** math.ceil(math.log2(16 * abs(params.detuning) * params.duration / (2 * math.pi) + 1)))
    u, _, _ = evolve_converged(
        rwa_hamiltonian(params, phase), params.duration, tol=tol, steps=steps, max_steps=max_steps, vectorized=True
    )
    return u


def theta_dynamical(params: EsuParams) -> float:
    """``(d/2) integral sqrt(1 + (B chi/d)^2) dt - d T/2``, the dynamical phase angle."""
    d, b = params.detuning, params.strength
    if b == 0:
        return 0.0

    def excess(s):
        z2 = (b * float(bump_chi(s)) / d) ** 2
        # sqrt(1 + z^2) - 1 without cancellation
        return z2 / (math.sqrt(1.0 + z2) + 1.0)

    val, _ = integrate.quad(excess, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return 0.5 * d * params.duration * val


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(512)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_CHI = bump_chi(_GL_S)


def dynamical_angle(strength: float, detuning, duration: float):
    """Vectorised dynamical angle on a fixed 512-point Gauss-Legendre rule.

    Uses ``sgn(d) (T/2) integral (B chi)^2 / (sqrt(d^2 + (B chi)^2) + |d|) ds``,
    which is finite at ``d = 0``.
    """
    d = np.asarray(detuning, dtype=float)
    bc = strength * _GL_CHI
    ad = np.abs(d)[..., None]
    den = np.sqrt(ad**2 + bc**2) + ad
    integrand = np.divide(bc**2, den, out=np.zeros(np.broadcast_shapes(den.shape, bc.shape)), where=den > 0)
    val = 0.5 * duration * (integrand @ _GL_WEIGHTS) * 0.5
    return np.where(d < 0, -val, val)


def esu_angle(strength: float, signal_frequency: float, bin_center, duration: float):
    """Digitised angle including the counter-rotating partner at ``w_k + w``."""
    wk = np.asarray(bin_center, dtype=float)
    return dynamical_angle(strength, wk - signal_frequency, duration) + dynamical_angle(
        strength, wk + signal_frequency, duration
    )


def esu_error(u: np.ndarray) -> tuple[float, float]:
    """Closest Z rotation: ``(theta*, min_{theta, alpha} ||U - e^{i alpha} e^{-i theta Z}||)``.

    Writing ``U = e^{i g} [[a, -b*], [b, a*]]`` the optimum is ``theta* = -arg a``
    with error ``sqrt(2 - 2|a|) = |b| sqrt(2 / (1 + |a|))``; the second form keeps
    precision when the error is tiny. Rotations by ``theta`` and ``theta + pi``
    differ by a global sign, so ``theta*`` is reported in ``(-pi/2, pi/2]``.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError("esu_error expects a 2x2 unitary")
    g = 0.5 * np.angle(np.linalg.det(u))
    a = u[0, 0] * np.exp(-1j * g)
    mag = min(abs(a), 1.0)
    off = 0.5 * (abs(u[1, 0]) + abs(u[0, 1]))
    err = off * math.sqrt(2.0 / (1.0 + mag)) if mag > 0.5 else math.sqrt(max(2.0 - 2.0 * mag, 0.0))
    if mag < 1e-12:
        theta = _grid_theta(u)
    else:
        theta = -float(np.angle(a))
    theta = (theta + math.pi / 2) % math.pi - math.pi / 2
    if theta == -math.pi / 2:
        theta = math.pi / 2
    return theta, float(err)


def _grid_theta(u: np.ndarray) -> float:
    # |a| = 0: every theta is equally far; pick the grid-refined minimiser for definiteness
    def dist(th):
        rot = np.diag([np.exp(-1j * th), np.exp(1j * th)])
        return np.linalg.norm(u - rot, 2)

    grid = np.linspace(-math.pi, math.pi, 721)
    th0 = grid[int(np.argmin([dist(t) for t in grid]))]
    res = optimize.minimize_scalar(dist, bounds=(th0 - 0.01, th0 + 0.01), method="bounded")
    return float(res.x)


def build_esu_schedule(params: EsuParams) -> ControlSchedule:
    """Gate sequence turning ``B cos(w t + phi) Z`` into the ESU Hamiltonian.

    Interval ``j`` of width ``T/P`` runs forward for ``(1 + chi(t_j)) dt/2`` and
    backward (X-toggled) for the rest; frame gates ``R(t) = e^{i w_k t Z/2} H``
    wrap each interval.
    """
    p, t_total = params.pulse_resolution, params.duration
    dt = t_total / p
    starts = np.arange(p) * dt
    chis = params.chi(starts)
    frames = [_frame(params.bin_center, t) for t in starts]
    gates: list[tuple[float, np.ndarray]] = [(0.0, frames[0].conj().T)]
    for j in range(p):
        gates.append((starts[j] + (1 + chis[j]) * dt / 2, X.copy()))
        close = frames[j] @ X
        if j + 1 < p:
            gates.append(((j + 1) * dt, frames[j + 1].conj().T @ close))
        else:
            gates.append((t_total, close))
    return ControlSchedule(t_total, tuple(gates), Modulation.constant())


def _frame(wk: float, t: float) -> np.ndarray:
    return np.diag([np.exp(0.5j * wk * t), np.exp(-0.5j * wk * t)]) @ HADAMARD


def schedule_propagator(schedule: ControlSchedule, strength: float, frequency: float, phase: float) -> np.ndarray:
    """Exact propagator of ``B cos(w t + phi) Z`` interleaved with the schedule's gates."""
    times = np.array([t for t, _ in schedule.gates])
    gates = np.array([g for _, g in schedule.gates])
    edges = np.concatenate(([0.0], times))
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    theta = strength * 2 * np.cos(frequency * 0.5 * (a + b) + phase) * half * np.sinc(frequency * half / math.pi)
    free = np.zeros((len(theta), 2, 2), dtype=complex)
    free[:, 0, 0] = np.exp(-1j * theta)
    free[:, 1, 1] = np.exp(1j * theta)
    steps = gates @ free  # free evolution up to each gate, then the gate
    u = _ordered_product(steps)
    tail = schedule.duration - times[-1]
    if tail > 0:
        u = expm_2x2(strength * math.cos(frequency * (times[-1] + tail / 2) + phase) * Z, tail) @ u
    return u


def pulse_error_bound(params: EsuParams) -> float:
    """``(B T^2 (lambda + w) + B w_k T^2 / 2) / P`` with ``lambda = sup |chi'(t)|``."""
    s = np.linspace(1e-3, 1 - 1e-3, 20001)
    slope = np.max(np.abs(np.gradient(bump_chi(s), s))) / params.duration
    b, t, p = params.strength, params.duration, params.pulse_resolution
    return (b * t**2 * (slope + params.signal_frequency) + b * params.bin_center * t**2 / 2) / p
