"""Boolean oracles from sensing a multi-tone field.

Output bit ``i`` of ``f`` drives sensor ``i`` with ``B sum_x f_i(x) cos(p_x w0 t) Z``.
A CPMG sequence aimed at tone ``k`` (chosen by the input register) picks up only
that tone, so the sensor turns by ``pi/2`` exactly when ``f_i(k) = 1``. A
``W``/CNOT/``W^T`` interlude copies the turn onto the output register and a
second sensing pass returns the sensor to ``|+>``.

Register order: input ``X`` (``n`` qubits), output ``Y`` (``m``), sensors ``S`` (``m``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import block_diag

from .qdyn import ConvergenceError, propagate_z_commuting
from .signal import AcSignal, Modulation, filter_function

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)
W_GATE = np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2)
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)

__all__ = [
    "BooleanFunctionSpec",
    "OracleSynthesis",
    "ideal_oracle",
    "register_oracle",
    "sensor_fidelity",
    "synth_oracle",
    "tone_phase",
]


@dataclass(frozen=True)
class BooleanFunctionSpec:
    """Truth table of ``f: {0,1}^n -> {0,1}^m``; ``table[x][i]`` is output bit ``i``."""

    n: int
    m: int
    table: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not (1 <= self.n <= 3 and 1 <= self.m <= 2):
            raise ValueError("desk scale: 1 <= n <= 3 and 1 <= m <= 2")
        if len(self.table) != 2**self.n or any(len(row) != self.m for row in self.table):
            raise ValueError("truth table must have 2^n rows of m bits")
        if any(b not in (0, 1) for row in self.table for b in row):
            raise ValueError("truth table entries must be 0 or 1")

    @classmethod
    def from_bits(cls, n: int, m: int, bits: str) -> "BooleanFunctionSpec":
        """Parse ``2^n * m`` characters, row by row (input ``x``, then output bits)."""
        bits = "".join(bits.split())
        if len(bits) != 2**n * m or set(bits) - {"0", "1"}:
            raise ValueError(f"expected {2**n * m} binary digits")
        return cls(n, m, tuple(tuple(int(bits[x * m + i]) for i in range(m)) for x in range(2**n)))

    @classmethod
    def from_function(cls, n: int, m: int, f) -> "BooleanFunctionSpec":
        rows = []
        for x in range(2**n):
            v = f(x)
            rows.append(tuple((v >> (m - 1 - i)) & 1 for i in range(m)) if isinstance(v, int) else tuple(v))
        return cls(n, m, tuple(rows))

    def output(self, x: int) -> int:
        """``f(x)`` as an integer, bit 0 most significant."""
        return reduce(lambda acc, b: 2 * acc + b, self.table[x], 0)

    def restrict(self, i: int) -> "BooleanFunctionSpec":
        """Single-output function ``f_i``."""
        return BooleanFunctionSpec(self.n, 1, tuple((row[i],) for row in self.table))


@dataclass(frozen=True)
class OracleSynthesis:
    unitary: np.ndarray
    angles: np.ndarray  # (2^n, m, 2): per input, sensor and pass
    strength: float
    duration: float
    steps: int | None = None
    residual: float = 0.0
    spec: BooleanFunctionSpec | None = field(default=None, repr=False)


def ideal_oracle(spec: BooleanFunctionSpec) -> np.ndarray:
    """``|x>|y> -> |x>|y xor f(x)>`` on ``X (x) Y``."""
    ny = 2**spec.m
    u = np.zeros((2**spec.n * ny,) * 2)
    for x in range(2**spec.n):
        fx = spec.output(x)
        for y in range(ny):
            u[x * ny + (y ^ fx), x * ny + y] = 1.0
    return u


def _tone_signals(spec: BooleanFunctionSpec, sensor: int, omega0: float, strength: float) -> list[AcSignal]:
    return [AcSignal(strength, PRIMES[x] * omega0, 0.0) for x in range(2**spec.n) if spec.table[x][sensor]]


def tone_phase(k: int, x: int, omega0: float, strength: float, start: float = 0.0) -> float:
    """Closed-form angle that tone ``x`` leaves on a CPMG run aimed at tone ``k``."""
    duration = 2 * math.pi / omega0
    w = PRIMES[x] * omega0
    chi = filter_function(2 * PRIMES[k], PRIMES[k] * omega0, w)
    return strength * duration * chi * math.cos(w * (start + duration / 2))


def _exact_angle(signals, k, omega0, start):
    target = PRIMES[k] * omega0
    mod = Modulation.cpmg(target, 2 * PRIMES[k], start=start)
    window = (start, start + mod.duration)
    return math.fsum(propagate_z_commuting(s, 1.0, window, mod) for s in signals)


def _sampled_angle(signals, k, omega0, start, steps):
    # midpoint rule on a grid aligned with the pi-pulse times
    target = PRIMES[k] * omega0
    mod = Modulation.cpmg(target, 2 * PRIMES[k], start=start)
    dt = mod.duration / steps
    t = start + (np.arange(steps) + 0.5) * dt
    chi = mod(t)
    field_ = sum((s.strength * np.cos(s.angular_frequency * t + s.phase) for s in signals), np.zeros(steps))
    return float(np.sum(chi * field_) * dt)


def _angles(spec, omega0, strength, steps, tol, max_steps):
    duration = 2 * math.pi / omega0
    out = np.zeros((2**spec.n, spec.m, 2))
    residual, used = 0.0, None
    for k in range(2**spec.n):
        for i in range(spec.m):
            signals = _tone_signals(spec, i, omega0, strength)
            for p, start in enumerate((0.0, duration)):
                if not signals:
                    continue
                if steps is None:
                    out[k, i, p] = _exact_angle(signals, k, omega0, start)
                    continue
                unit = 4 * PRIMES[k]
                n = unit * max(1, math.ceil(steps / unit))
                prev = _sampled_angle(signals, k, omega0, start, n)
                while True:
                    n *= 2
                    cur = _sampled_angle(signals, k, omega0, start, n)
                    if abs(cur - prev) < tol:
                        break
                    if n > max_steps:
                        raise ConvergenceError("oracle phase integral not converged", abs(cur - prev))
                    prev = cur
                residual = max(residual, abs(cur - prev))
                used = max(used or 0, n)
                out[k, i, p] = cur
    return out, residual, used


def _rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-1j * theta), np.exp(1j * theta)])


def _kron(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def _interlude(m: int) -> np.ndarray:
    """``W^T`` on every sensor after CNOT(sensor i -> output i) after ``W`` on every sensor; on ``Y (x) S``."""
    dim = 4**m
    cnot = np.zeros((dim, dim))
    for col in range(dim):
        y, s = divmod(col, 2**m)
        cnot[(y ^ s) * 2**m + s, col] = 1.0
    eye_y = np.eye(2**m)
    w = np.kron(eye_y, _kron([W_GATE] * m))
    wt = np.kron(eye_y, _kron([W_GATE.T] * m))
    return wt @ cnot @ w


def synth_oracle(spec: BooleanFunctionSpec, omega0: float, trotter_steps: int | None = None, *,
                 tol: float = 1e-10, max_steps: int = 2**22) -> OracleSynthesis:
    """Net unitary on ``X (x) Y (x) S`` of sense, interlude, sense.

    The conditional CPMG commutes with the Z-coupled field, so each input block
    is the exact phase product. ``trotter_steps`` switches the phase integrals
    to a midpoint rule refined by doubling until successive values agree to ``tol``.
    """
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    duration = 2 * math.pi / omega0
    strength = math.pi**2 / (4 * duration)
    angles, residual, used = _angles(spec, omega0, strength, trotter_steps, tol, max_steps)
    mid = _interlude(spec.m)
    eye_y = np.eye(2**spec.m)
    blocks = []
    for k in range(2**spec.n):
        first = np.kron(eye_y, _kron([_rz(a) for a in angles[k, :, 0]]))
        second = np.kron(eye_y, _kron([_rz(a) for a in angles[k, :, 1]]))
        blocks.append(second @ mid @ first)
    return OracleSynthesis(block_diag(*blocks), angles, strength, duration, used, residual, spec)


def register_oracle(result: OracleSynthesis) -> np.ndarray:
    """``(1 (x) <+|^m) U (1 (x) |+>^m)``: the map seen by ``X (x) Y`` with sensors prepared in ``|+>``."""
    spec = result.spec
    plus = _kron([PLUS] * spec.m).reshape(-1, 1)
    proj = np.kron(np.eye(2 ** (spec.n + spec.m)), plus)
    return proj.conj().T @ result.unitary @ proj


def sensor_fidelity(result: OracleSynthesis) -> float:
    """Worst fidelity of the sensors' reduced state with ``|+>^m`` over basis inputs ``|x>|y>``."""
    spec = result.spec
    plus = _kron([PLUS] * spec.m)
    ds = 2**spec.m
    worst = 1.0
    for col in range(2 ** (spec.n + spec.m)):
        inp = np.kron(np.eye(2 ** (spec.n + spec.m))[col], plus)
        out = (result.unitary @ inp).reshape(-1, ds)
        rho = out.T @ out.conj()
        worst = min(worst, float(np.real(plus.conj() @ rho @ plus)))
    return worst
