"""Numerical checks of the distinguishability, Fisher-information and dephasing
inequalities that bound every sensing protocol.

A protocol under test is a gate list on ``n_S`` sensors plus ``n_Q`` ancillas
(sensors are the most significant qubits). The signal couples as
``B cos(w t + phi) sum_i Z_i``, which is diagonal, so evolution between gates is
an exact phase and whole batches of ``(w, phi)`` samples run at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import unitary_group

from .qdyn import Z, ConvergenceError, ControlSchedule, DephasingSpec, lindblad_evolve, trace_distance

MAX_SENSORS = 3
MAX_ANCILLAS = 3

__all__ = [
    "Estimate",
    "ProtocolUnderTest",
    "avg_distinguishability",
    "avg_qfi",
    "csp_bound",
    "csp_distinguishability",
    "lindblad_bound_check",
    "long_time_bound",
    "qfi_bound",
    "qfi_estimate",
    "qfi_tangent",
    "random_modulations",
    "random_protocol",
    "short_time_bound",
]


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo mean with its standard error."""

    mean: float
    stderr: float
    samples: int

    def below(self, bound: float, sigmas: float = 3.0) -> bool:
        """One-sided check ``mean <= bound + sigmas * stderr``."""
        return self.mean <= bound + sigmas * self.stderr

    @classmethod
    def of(cls, values: np.ndarray) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = len(values)
        err = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(values)), err, n)


@dataclass(frozen=True)
class ProtocolUnderTest:
    """Gates ``V_j`` at times ``t_j`` on ``n_sensors + n_ancillas`` qubits, run from ``|0...0>``."""

    n_sensors: int
    n_ancillas: int
    schedule: ControlSchedule

    def __post_init__(self) -> None:
        if not (1 <= self.n_sensors <= MAX_SENSORS and 0 <= self.n_ancillas <= MAX_ANCILLAS):
            raise ValueError(f"Hilbert-space cap: at most {MAX_SENSORS} sensors and {MAX_ANCILLAS} ancillas")
        for _, g in self.schedule.gates:
            if np.shape(g) != (self.dim, self.dim):
                raise ValueError("gate dimension does not match the register")

    @property
    def n_qubits(self) -> int:
        return self.n_sensors + self.n_ancillas

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def duration(self) -> float:
        return self.schedule.duration

    def zsum(self) -> np.ndarray:
        """Diagonal of ``sum_i Z_i`` over the sensors."""
        idx = np.arange(self.dim)
        bits = (idx[:, None] >> np.arange(self.n_qubits - 1, self.n_qubits - 1 - self.n_sensors, -1)) & 1
        return (1 - 2 * bits).sum(axis=1).astype(float)

    def with_trailing(self, gate: np.ndarray) -> "ProtocolUnderTest":
        """Same protocol followed by a signal-independent ``gate`` at the end."""
        gates = list(self.schedule.gates)
        if gates and gates[-1][0] == self.duration:
            gates[-1] = (self.duration, gate @ gates[-1][1])
        else:
            gates.append((self.duration, gate))
        return ProtocolUnderTest(self.n_sensors, self.n_ancillas, ControlSchedule(self.duration, tuple(gates)))


def _embed(gate: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full ``2^n`` matrix of ``gate`` acting on ``qubits`` (0 = most significant)."""
    k = len(qubits)
    eye = np.eye(2**n, dtype=complex).reshape((2**n,) + (2,) * n)
    g = gate.reshape((2,) * (2 * k))
    axes = [q + 1 for q in qubits]
    out = np.tensordot(eye, g, axes=(axes, list(range(k, 2 * k))))
    # tensordot appends the gate's output legs; move them back into place
    out = np.moveaxis(out, list(range(n + 1 - k, n + 1)), axes)
    return out.reshape(2**n, 2**n).T


def random_protocol(n_sensors: int, n_ancillas: int, duration: float, rate: float,
                    rng: np.random.Generator) -> ProtocolUnderTest:
    """Haar-random two-qubit gates at Poisson times of the given rate, plus gates at ``0`` and ``duration``."""
    n = n_sensors + n_ancillas
    count = rng.poisson(rate * duration) if duration > 0 else 0
    inner = np.sort(rng.uniform(0.0, duration, count)) if count else np.empty(0)
    times = np.unique(np.concatenate(([0.0], inner, [duration])))
    gates = []
    for t in times:
        if n == 1:
            g = unitary_group.rvs(2, random_state=rng)
        else:
            pair = rng.choice(n, size=2, replace=False)
            g = _embed(unitary_group.rvs(4, random_state=rng), pair, n)
        gates.append((float(t), g))
    return ProtocolUnderTest(n_sensors, n_ancillas, ControlSchedule(float(duration), tuple(gates)))


def _segment_integrals(times: np.ndarray, omega: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``integral_{a}^{b} cos(w t + phi) dt`` for consecutive ``times``; shape ``(samples, segments)``."""
    a, b = times[:-1], times[1:]
    half = 0.5 * (b - a)
    w = omega[:, None]
    return 2.0 * np.cos(w * 0.5 * (a + b) + phi[:, None]) * half * np.sinc(w * half / math.pi)


def _schedule_arrays(put: ProtocolUnderTest):
    # leading gates at t = 0, then (segment, gate-at-its-end) pairs, then a free tail
    head = np.eye(put.dim, dtype=complex)
    edges, after = [0.0], []
    for t, g in put.schedule.gates:
        if t == 0.0:
            head = g @ head
            continue
        if t > edges[-1]:
            edges.append(t)
            after.append(g)
        else:
            after[-1] = g @ after[-1]
    if edges[-1] < put.duration:
        edges.append(put.duration)
        after.append(None)
    return head, np.array(edges), after


def final_states(put: ProtocolUnderTest, strength: float, omega, phi) -> np.ndarray:
    """Final states for each ``(omega, phi)`` sample; shape ``(samples, dim)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), omega.shape)
    head, edges, after = _schedule_arrays(put)
    z = put.zsum()
    psi = np.broadcast_to(head[:, 0], (len(omega), put.dim)).copy()
    if len(edges) > 1:
        angles = strength * _segment_integrals(edges, omega, phi)
        for j, g in enumerate(after):
            psi = psi * np.exp(-1j * angles[:, j : j + 1] * z)
            if g is not None:
                psi = psi @ g.T
    return psi


def _sample_band(band, samples, rng):
    lo, hi = map(float, band)
    if not hi > lo:
        raise ValueError("band must have positive width")
    return rng.uniform(lo, hi, samples), rng.uniform(0.0, 2 * math.pi, samples)


def avg_distinguishability(put: ProtocolUnderTest, b_min: float, band: tuple[float, float], samples: int,
                           rng: np.random.Generator) -> Estimate:
    """Monte-Carlo ``D = E_{w, phi} || psi_0 - psi_w ||^2`` with ``w`` uniform on the band."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    omega, phi = _sample_band(band, samples, rng)
    ref = final_states(put, 0.0, omega[:1], phi[:1])[0]
    psi = final_states(put, b_min, omega, phi)
    return Estimate.of(np.sum(np.abs(psi - ref) ** 2, axis=1))


def short_time_bound(n_sensors: int, b_min: float, width: float) -> float:
    """``4 pi n_S B / |band|``, valid for durations up to ``1/(n_S B)``."""
    return 4 * math.pi * n_sensors * b_min / width


def long_time_bound(n_sensors: int, b_min: float, width: float, duration: float) -> float:
    """``4 pi (n_S B)^3 tau^2 / |band|`` (stated for ``tau`` a multiple of ``1/(n_S B)``)."""
    return 4 * math.pi * (n_sensors * b_min) ** 3 * duration**2 / width


def qfi_bound(n_sensors: int, width: float, duration: float) -> float:
    """``4 pi n_S^2 tau / |band|`` on the band-averaged Fisher information."""
    return 4 * math.pi * n_sensors**2 * duration / width


def csp_bound(n_sensors: int, b_min: float, width: float, duration: float) -> float:
    """``2 pi (n_S B)^2 T / |band|`` for classically modulated sensors."""
    return 2 * math.pi * (n_sensors * b_min) ** 2 * duration / width


def _fisher(psi: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    overlap = np.sum(psi.conj() * dpsi, axis=-1)
    return 4 * (np.sum(np.abs(dpsi) ** 2, axis=-1) - np.abs(overlap) ** 2)


def _fd_fisher(put, omega, phi, h):
    dpsi = (final_states(put, h, omega, phi) - final_states(put, -h, omega, phi)) / (2 * h)
    return _fisher(final_states(put, 0.0, omega, phi), dpsi)


def _richardson(put, omega, phi, h, atol=1e-10):
    coarse, fine = _fd_fisher(put, omega, phi, h), _fd_fisher(put, omega, phi, h / 2)
    value = (4 * fine - coarse) / 3
    scale = np.maximum(np.abs(value), atol)
    residual = np.where(np.abs(value) < atol, 0.0, np.abs(fine - coarse) / scale)
    return np.clip(value, 0.0, None), float(np.max(residual))


def qfi_estimate(put: ProtocolUnderTest, omega: float, phi: float = 0.0, h: float = 1e-3) -> float:
    """Fisher information in ``B`` at ``B = 0`` by central differences at ``h`` and ``h/2``.

    Raises ``ConvergenceError`` when the two step sizes disagree by 1% or more.
    """
    value, residual = _richardson(put, np.array([omega]), np.array([phi]), h * _step_scale(put))
    if residual >= 0.01:
        raise ConvergenceError("finite-difference Fisher information not converged", residual)
    return float(value[0])


def _step_scale(put: ProtocolUnderTest) -> float:
    # keep h * n_S * tau well inside the linear regime
    return 1.0 / max(put.n_sensors * put.duration, 1e-300)


def qfi_tangent(put: ProtocolUnderTest, omega, phi) -> np.ndarray:
    """Fisher information at ``B = 0`` from the exact tangent ``d psi / dB``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), omega.shape)
    head, edges, after = _schedule_arrays(put)
    z = put.zsum()
    psi = np.broadcast_to(head[:, 0], (len(omega), put.dim)).copy()
    dpsi = np.zeros_like(psi)
    if len(edges) > 1:
        a = _segment_integrals(edges, omega, phi)
        for j, g in enumerate(after):
            dpsi = dpsi - 1j * a[:, j : j + 1] * z * psi
            if g is not None:
                psi, dpsi = psi @ g.T, dpsi @ g.T
    return _fisher(psi, dpsi)


def avg_qfi(put: ProtocolUnderTest, band: tuple[float, float], samples: int, rng: np.random.Generator,
            h: float = 1e-3) -> Estimate:
    """Band average of the finite-difference Fisher information over uniform ``(w, phi)``."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    omega, phi = _sample_band(band, samples, rng)
    value, residual = _richardson(put, omega, phi, h * _step_scale(put))
    if residual >= 0.01:
        raise ConvergenceError("finite-difference Fisher information not converged", residual)
    return Estimate.of(value)


def random_modulations(n_sensors: int, pieces: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant ``chi_i`` with values uniform in ``[-1, 1]``."""
    return rng.uniform(-1.0, 1.0, (n_sensors, pieces))


def csp_phases(chi: np.ndarray, duration: float, b_min: float, omega: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Per-sensor angles ``B integral chi_i(t) cos(w t + phi) dt``; shape ``(samples, n_S)``."""
    chi = np.atleast_2d(np.asarray(chi, dtype=float))
    edges = np.linspace(0.0, duration, chi.shape[1] + 1)
    return b_min * _segment_integrals(edges, omega, phi) @ chi.T


def csp_distinguishability(chi: np.ndarray, duration: float, b_min: float, band: tuple[float, float],
                           samples: int, rng: np.random.Generator, initial: np.ndarray | None = None) -> Estimate:
    """Average distinguishability under commuting modulated evolution.

    ``chi`` holds ``(n_S, pieces)`` values in ``[-1, 1]`` on a uniform grid over
    ``[0, duration]``; the default initial state is ``|+>`` on every sensor.
    """
    chi = np.atleast_2d(np.asarray(chi, dtype=float))
    if np.any(np.abs(chi) > 1):
        raise ValueError("modulation values must lie in [-1, 1]")
    n = chi.shape[0]
    if initial is None:
        weights = np.full(2**n, 2.0**-n)
    else:
        weights = np.abs(np.asarray(initial, dtype=complex)) ** 2
        weights = weights / weights.sum()
    idx = np.arange(2**n)
    signs = 1 - 2 * ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1)
    omega, phi = _sample_band(band, samples, rng)
    total = csp_phases(chi, duration, b_min, omega, phi) @ signs.T  # (samples, 2^n)
    return Estimate.of((2 - 2 * np.cos(total)) @ weights)


def lindblad_bound_check(hamiltonian: Callable[[float], np.ndarray], jumps, duration: float,
                         rho0: np.ndarray) -> tuple[float, float]:
    """Trace distance between dissipative and unitary evolution, and ``T sum ||L^dag L||``.

    ``jumps`` may hold jump matrices or ``DephasingSpec`` entries
    (``sqrt(rate) Z`` on each target qubit).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    n = int(round(math.log2(dim)))
    if 2**n != dim or n > 3:
        raise ValueError("at most three qubits")
    ops = []
    for j in jumps:
        if isinstance(j, DephasingSpec):
            ops.extend(math.sqrt(j.rate) * _embed(Z, [q], n) for q in j.targets)
        else:
            ops.append(np.asarray(j, dtype=complex))
    bound = duration * math.fsum(np.linalg.norm(l.conj().T @ l, 2) for l in ops)
    if duration == 0 or bound == 0:
        return 0.0, bound
    noisy = lindblad_evolve(hamiltonian, ops, duration, rho0)
    clean = lindblad_evolve(hamiltonian, [], duration, rho0)
    noisy = 0.5 * (noisy + noisy.conj().T)
    clean = 0.5 * (clean + clean.conj().T)
    return trace_distance(noisy / np.trace(noisy).real, clean / np.trace(clean).real), bound
