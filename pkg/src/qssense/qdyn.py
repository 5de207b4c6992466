"""Propagation engine: exact phases for Z-commuting drives, a midpoint
exponential-product integrator, 2x2 dephasing-block propagators and distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg

from .signal import AcSignal, Modulation

__all__ = [
    "AcSignal",
    "ControlSchedule",
    "DephasingSpec",
    "ConvergenceError",
    "I2",
    "X",
    "Y",
    "Z",
    "expm_2x2",
    "expm_hermitian",
    "propagate_z_commuting",
    "evolve_sampled",
    "evolve_converged",
    "block_generator",
    "block_superoperators",
    "dephasing_block_step",
    "lindblad_evolve",
    "unitary_distance",
    "trace_distance",
    "is_unitary",
]

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITIAN_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Step doubling hit its cap before the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ControlSchedule:
    """Instantaneous gates ``(t_j, V_j)`` inside ``[0, duration]``."""

    duration: float
    gates: tuple[tuple[float, np.ndarray], ...] = ()
    modulation: Modulation = field(default_factory=Modulation.constant)

    def __post_init__(self) -> None:
        times = [t for t, _ in self.gates]
        if any(t < 0 or t > self.duration for t in times):
            raise ValueError("gate timestamps must lie in [0, duration]")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("gate timestamps must be strictly increasing")


@dataclass(frozen=True)
class DephasingSpec:
    rate: float
    targets: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise ValueError("dephasing rate must be finite and non-negative")


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def _check_hermitian(h: np.ndarray) -> None:
    if np.max(np.abs(h - np.swapaxes(h, -1, -2).conj()), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("Hamiltonian sample is not Hermitian")


def expm_2x2(h: np.ndarray, t: float | np.ndarray = 1.0) -> np.ndarray:
    """``exp(-i h t)`` for (stacks of) 2x2 Hermitian ``h`` via the Pauli decomposition."""
    h = np.asarray(h, dtype=complex)
    t = np.asarray(t, dtype=float)
    h0 = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    hz = 0.5 * (h[..., 0, 0] - h[..., 1, 1]).real
    hx = h[..., 1, 0].real
    hy = h[..., 1, 0].imag
    norm = np.sqrt(hx**2 + hy**2 + hz**2)
    angle = norm * t
    # sin(n t)/n, continuous at n = 0
    sinc = t * np.sinc(angle / math.pi)
    cos = np.cos(angle)
    out = np.empty(h.shape, dtype=complex)
    out[..., 0, 0] = cos - 1j * sinc * hz
    out[..., 1, 1] = cos + 1j * sinc * hz
    out[..., 0, 1] = -1j * sinc * (hx - 1j * hy)
    out[..., 1, 0] = -1j * sinc * (hx + 1j * hy)
    return out * np.exp(-1j * h0 * t)[..., None, None]


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i h t)``; analytic for 2x2, eigendecomposition otherwise."""
    h = np.asarray(h, dtype=complex)
    _check_hermitian(h)
    if h.shape[-1] == 2:
        return expm_2x2(h, t)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def _cos_integral(omega: float, phi: float, a: float, b: float) -> float:
    # integral of cos(w t + phi) over [a, b] in a cancellation-free form
    half = 0.5 * (b - a)
    return 2.0 * math.cos(omega * 0.5 * (a + b) + phi) * half * _sinc(omega * half)


def _sinc(x: float) -> float:
    return math.sin(x) / x if x != 0.0 else 1.0


def propagate_z_commuting(
    signal: AcSignal | None,
    weight: float,
    window: tuple[float, float],
    modulation: Modulation,
) -> float:
    """Rotation angle ``weight * B * integral chi(t) cos(w t + phi) dt`` over ``window``.

    Square-wave and constant profiles are integrated piece by piece in closed
    form; the bump uses adaptive quadrature split at the signal period.
    """
    t0, t1 = map(float, window)
    if not (math.isfinite(t0) and math.isfinite(t1) and math.isfinite(weight)):
        raise ValueError("non-finite window or weight")
    if t1 <= t0:
        raise ValueError("window must have t1 > t0")
    if signal is None or signal.strength == 0.0 or weight == 0.0:
        return 0.0
    b, w, phi = signal.strength, signal.angular_frequency, signal.phase
    if modulation.kind in ("constant", "cpmg_square"):
        total = math.fsum(s * _cos_integral(w, phi, a, c) for a, c, s in modulation.pieces(t0, t1))
        return weight * b * total
    lo = max(t0, modulation.start)
    hi = min(t1, modulation.start + modulation.duration)
    if hi <= lo:
        return 0.0
    chunks = int(min(max(1, math.ceil(w * (hi - lo) / (2 * math.pi))), 4000))
    edges = np.linspace(lo, hi, chunks + 1)

    def integrand(t: float) -> float:
        return float(modulation(t)) * math.cos(w * t + phi)

    parts = [
        integrate.quad(integrand, edges[j], edges[j + 1], epsabs=1e-300, epsrel=1e-13, limit=200)[0]
        for j in range(chunks)
    ]
    return weight * b * math.fsum(parts)


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    # mats[j] acts at step j; returns mats[-1] @ ... @ mats[0] by pairwise reduction
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = np.concatenate((mats[1:-1:2] @ mats[0:-1:2], tail))
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def evolve_sampled(
    hamiltonian: Callable,
    duration: float,
    steps: int,
    *,
    vectorized: bool = False,
    start: float = 0.0,
) -> np.ndarray:
    """Time-ordered ``prod_j exp(-i H(t_j) dt)`` with midpoint samples ``t_j``.

    With ``vectorized=True`` the callable receives the full array of sample
    times and returns a stack of matrices.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = duration / steps
    times = start + (np.arange(steps) + 0.5) * dt
    if vectorized:
        hs = np.asarray(hamiltonian(times), dtype=complex)
    else:
        hs = np.stack([np.asarray(hamiltonian(t), dtype=complex) for t in times])
    _check_hermitian(hs)
    return _ordered_product(expm_hermitian(hs, dt))


def evolve_converged(
    hamiltonian: Callable,
    duration: float,
    *,
    tol: float = 1e-9,
    steps: int = 64,
    max_steps: int = 2**20,
    vectorized: bool = False,
) -> tuple[np.ndarray, int, float]:
    """Double the step count until successive products agree to ``tol``.

    Returns ``(U, steps, residual)``. The midpoint rule is second order, so the
    residual of the last doubling is a close estimate of the remaining error.
    """
    prev = evolve_sampled(hamiltonian, duration, steps, vectorized=vectorized)
    while True:
        steps *= 2
        cur = evolve_sampled(hamiltonian, duration, steps, vectorized=vectorized)
        residual = unitary_distance(cur, prev)
        if residual < tol:
            return cur, steps, residual
        if steps >= max_steps:
            raise ConvergenceError(f"no convergence by {steps} steps", residual)
        prev = cur


def block_generator(
    h_left: np.ndarray,
    h_right: np.ndarray,
    gamma: float,
    register_rate: float | np.ndarray = 0.0,
) -> np.ndarray:
    """4x4 generator of ``rho -> -i(h_l rho - rho h_r) + (gamma/2)(Z rho Z - rho) - r rho``.

    Acts on row-major ``rho.reshape(4)``. ``h_left``/``h_right`` may be stacks.
    """
    h_left = np.asarray(h_left, dtype=complex)
    h_right = np.asarray(h_right, dtype=complex)
    eye = np.broadcast_to(I2, h_left.shape)
    kron = lambda a, b: np.einsum("...ij,...kl->...ikjl", a, b).reshape(a.shape[:-2] + (4, 4))
    gen = -1j * (kron(h_left, eye) - kron(eye, np.swapaxes(h_right, -1, -2)))
    deph = np.array([0.0, -gamma, -gamma, 0.0])
    rate = np.asarray(register_rate, dtype=float)[..., None]
    return gen + (deph - rate)[..., :, None] * np.eye(4)


def block_superoperators(
    h_left: np.ndarray,
    h_right: np.ndarray,
    gamma: float,
    duration: float,
    register_rate: float | np.ndarray = 0.0,
) -> np.ndarray:
    """``exp(duration * generator)`` for stacks of block generators.

    Uses the eigendecomposition of each 4x4 generator; the rare members whose
    eigenvector matrix is ill-conditioned (near exceptional points) fall back
    to Pade ``expm``.
    """
    gen = block_generator(h_left, h_right, gamma, register_rate)
    flat = gen.reshape(-1, 4, 4)
    lam, vec = np.linalg.eig(flat)
    cond = np.linalg.cond(vec)
    ok = np.isfinite(cond) & (cond < 1e6)
    out = np.empty_like(flat)
    if np.any(ok):
        v = vec[ok]
        out[ok] = (v * np.exp(duration * lam[ok])[:, None, :]) @ np.linalg.inv(v)
    for j in np.flatnonzero(~ok):
        out[j] = linalg.expm(duration * flat[j])
    return out.reshape(gen.shape)


def dephasing_block_step(
    effective_h: np.ndarray,
    gamma: float,
    off_diagonal: bool,
    duration: float,
    block: np.ndarray,
    *,
    right_h: np.ndarray | None = None,
    register_rate: float = 0.0,
) -> np.ndarray:
    """Evolve one 2x2 sensor block ``<k1|rho|k2>`` for ``duration``.

    Diagonal blocks (``off_diagonal=False``) use ``effective_h`` on both sides.
    Off-diagonal blocks take the ket-side Hamiltonian as ``effective_h``, the
    bra-side one as ``right_h`` and decay at ``register_rate`` on top of the
    sensor dephasing.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    arrays = [np.asarray(effective_h), np.asarray(block)]
    if right_h is not None:
        arrays.append(np.asarray(right_h))
    if not all(np.all(np.isfinite(a)) for a in arrays) or not math.isfinite(gamma):
        raise ValueError("non-finite input")
    if off_diagonal:
        if right_h is None:
            raise ValueError("off-diagonal blocks need the bra-side Hamiltonian")
        h_r = right_h
    else:
        h_r, register_rate = effective_h, 0.0
    sup = block_superoperators(effective_h, h_r, gamma, duration, register_rate)
    return (sup @ np.asarray(block, dtype=complex).reshape(4)).reshape(2, 2)


def lindblad_evolve(
    hamiltonian: Callable[[float], np.ndarray],
    jumps: Sequence[np.ndarray],
    duration: float,
    rho0: np.ndarray,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Dense Lindblad integration ``d rho/dt = -i[H, rho] + sum_j D[L_j] rho``."""
    rho0 = np.asarray(rho0, dtype=complex)
    if duration == 0:
        return rho0.copy()
    dim = rho0.shape[0]
    ls = [np.asarray(l, dtype=complex) for l in jumps]
    lds = [l.conj().T @ l for l in ls]

    def rhs(t, y):
        rho = y.view(complex).reshape(dim, dim)
        h = hamiltonian(t)
        d = -1j * (h @ rho - rho @ h)
        for l, ld in zip(ls, lds):
            d += l @ rho @ l.conj().T - 0.5 * (ld @ rho + rho @ ld)
        return d.reshape(-1).view(float)

    sol = integrate.solve_ivp(
        rhs, (0.0, duration), rho0.reshape(-1).view(float).copy(), method="DOP853", rtol=rtol, atol=atol
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1].view(complex).reshape(dim, dim)


def unitary_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Spectral norm of ``u - v``."""
    u, v = np.asarray(u), np.asarray(v)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(u - v, 2))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of ``rho - sigma``."""
    rho, sigma = np.asarray(rho, dtype=complex), np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    for m in (rho, sigma):
        if abs(np.trace(m) - 1) > 1e-8:
            raise ValueError("density matrix trace deviates from 1")
        if np.max(np.abs(m - m.conj().T)) > 1e-8:
            raise ValueError("density matrix is not Hermitian")
    diff = rho - sigma
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))
