"""Discrete-frequency search on an NV-centre nuclear register.

The register of ``n_q`` nuclear spins shifts the NV transition to
``w_k = delta0 + sum_i (-1)^{k_i} A_i / 2`` for configuration ``k``. Driving
the sensor for a full 2*pi rotation at ``w_k`` flips the sign of ``|k>``, which
is the Grover oracle (signal at ``w_k*``) and, driven on purpose at ``w_0``,
the reflection about the all-zero state.

The joint sensor-register state is kept as 2x2 sensor blocks ``<k1|rho|k2>``.
Drives leave register populations alone, so every block evolves on its own
under a rotating-frame 2x2 Hamiltonian, with independent Z dephasing of all
qubits at ``gamma = 1/T2``. Bit ``i`` of ``k`` (most significant first) is
nuclear spin ``i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qdyn import block_superoperators, expm_2x2
from .signal import TWO_PI, khz

# Synthetic register used when no coupling file is given. The range is set so
# that the best reflection drive follows (32 * 2^-n + 10 sqrt(B/kHz)) kHz.
DEFAULT_COUPLING_RANGE_KHZ = (20.0, 240.0)
DEFAULT_COUPLING_SEED = 20240613
DEFAULT_COUPLING_CANDIDATES = 4096


def _conditional_shifts(couplings: np.ndarray) -> np.ndarray:
    n_q = couplings.size
    k = np.arange(2**n_q)
    bits = (k[:, None] >> np.arange(n_q - 1, -1, -1)) & 1
    return (1 - 2 * bits) @ couplings / 2


def default_couplings_khz(
    n_q: int, seed: int = DEFAULT_COUPLING_SEED, candidates: int = DEFAULT_COUPLING_CANDIDATES
) -> np.ndarray:
    """Synthetic couplings: jittered log spacing over [20, 240] kHz.

    ``candidates`` jittered sets are drawn from a fixed seed and the one whose
    conditional frequencies are best resolved (widest minimum spacing) wins.
    """
    lo, hi = DEFAULT_COUPLING_RANGE_KHZ
    if n_q == 1:
        return np.array([lo])
    base = np.geomspace(lo, hi, n_q)
    step = math.log(hi / lo) / (n_q - 1)
    rng = np.random.default_rng([seed, n_q])
    draws = np.clip(base * np.exp(rng.uniform(-0.25, 0.25, (candidates, n_q)) * step), lo, hi)
    spacing = [np.min(np.diff(np.sort(_conditional_shifts(c)))) for c in draws]
    return draws[int(np.argmax(spacing))]


@dataclass(frozen=True)
class NvRegister:
    """Hyperfine couplings (rad/ms), NV splitting and dephasing rate (1/ms)."""

    couplings: tuple[float, ...]
    delta0: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        a = np.asarray(self.couplings, dtype=float)
        if a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
            raise ValueError("couplings must be a non-empty list of finite numbers")
        if len(set(a.tolist())) != a.size:
            raise ValueError("couplings must be distinct")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and non-negative")
        w = self.frequencies
        if np.unique(w).size != w.size:
            raise ValueError("conditional frequencies are not all distinct")

    @classmethod
    def default(cls, n_q: int, t2_ms: float | None = None, delta0_khz: float = 0.0) -> "NvRegister":
        gamma = 0.0 if t2_ms is None else 1.0 / t2_ms
        return cls(tuple(khz(default_couplings_khz(n_q))), khz(delta0_khz), gamma)

    @classmethod
    def from_config(cls, cfg: dict) -> "NvRegister":
        """Build from ``{"n_Q", "couplings_khz", "delta0_khz", "t2_ms"}``."""
        n_q = int(cfg["n_Q"])
        cpl = cfg.get("couplings_khz")
        cpl = default_couplings_khz(n_q) if cpl is None else np.asarray(cpl, dtype=float)
        if cpl.size != n_q:
            raise ValueError(f"expected {n_q} couplings, got {cpl.size}")
        t2 = cfg.get("t2_ms")
        if t2 is not None and not float(t2) > 0:
            raise ValueError("t2_ms must be positive")
        gamma = 0.0 if t2 is None else 1.0 / float(t2)
        return cls(tuple(khz(cpl)), khz(float(cfg.get("delta0_khz", 0.0))), gamma)

    @classmethod
    def load(cls, path: str | Path) -> "NvRegister":
        return cls.from_config(json.loads(Path(path).read_text()))

    def with_t2(self, t2_ms: float | None) -> "NvRegister":
        return NvRegister(self.couplings, self.delta0, 0.0 if t2_ms is None else 1.0 / t2_ms)

    @property
    def n_q(self) -> int:
        return len(self.couplings)

    @property
    def size(self) -> int:
        return 2**self.n_q

    @property
    def bits(self) -> np.ndarray:
        k = np.arange(self.size)
        return (k[:, None] >> np.arange(self.n_q - 1, -1, -1)) & 1

    @property
    def frequencies(self) -> np.ndarray:
        signs = 1 - 2 * self.bits
        return self.delta0 + signs @ np.asarray(self.couplings) / 2

    @property
    def hamming(self) -> np.ndarray:
        b = self.bits
        return (b[:, None, :] != b[None, :, :]).sum(axis=-1)

    def min_spacing(self) -> float:
        return float(np.min(np.diff(np.sort(self.frequencies))))


def drive_hamiltonians(register: NvRegister, drive_freq: float, rabi: float) -> np.ndarray:
    """Per-configuration rotating-frame sensor Hamiltonians, shape ``(N, 2, 2)``.

    ``|1>`` is the shifted NV level; ``|0>`` is decoupled from the register and
    carries zero energy for every configuration, so relative phases between
    configurations are physical.
    """
    det = register.frequencies - drive_freq
    h = np.zeros((register.size, 2, 2), dtype=complex)
    h[:, 1, 1] = det
    h[:, 0, 1] = h[:, 1, 0] = rabi / 2
    return h


@dataclass
class DensityBlockSet:
    """Joint state as ``blocks[k1, k2] = <k1|rho|k2>`` (2x2 sensor operators)."""

    blocks: np.ndarray

    @classmethod
    def plus_state(cls, n_q: int) -> "DensityBlockSet":
        n = 2**n_q
        b = np.zeros((n, n, 2, 2), dtype=complex)
        b[:, :, 0, 0] = 1.0 / n
        return cls(b)

    @property
    def size(self) -> int:
        return self.blocks.shape[0]

    def trace(self) -> complex:
        return complex(np.einsum("kkii->", self.blocks))

    def hermiticity_error(self) -> float:
        swapped = np.conj(np.transpose(self.blocks, (1, 0, 3, 2)))
        return float(np.max(np.abs(self.blocks - swapped)))

    def register_populations(self) -> np.ndarray:
        d = np.einsum("kkii->k", self.blocks).real
        return d

    def apply(self, superops: "SegmentPropagator") -> None:
        superops.apply(self)

    def hadamard(self) -> None:
        """Apply the register-wide Hadamard on both sides of the state."""
        n = self.size
        had = walsh_hadamard(n)
        flat = (had @ self.blocks.reshape(n, -1)).reshape(n, n, 4)
        self.blocks = np.matmul(had, flat).reshape(n, n, 2, 2)


def walsh_hadamard(n: int) -> np.ndarray:
    """Normalised ``n x n`` Sylvester-Hadamard matrix (``n`` a power of two)."""
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h / math.sqrt(n)


class SegmentPropagator:
    """Superoperators of one drive segment for every block pair ``k1 <= k2``."""

    def __init__(self, register: NvRegister, drive_freq: float, rabi: float, duration: float):
        self.duration = duration
        h = drive_hamiltonians(register, drive_freq, rabi)
        n = register.size
        self.iu = np.triu_indices(n)
        rates = register.gamma * register.hamming[self.iu]
        self.superops = block_superoperators(h[self.iu[0]], h[self.iu[1]], register.gamma, duration, rates)

    def apply(self, state: DensityBlockSet) -> None:
        i, j = self.iu
        vec = state.blocks[i, j].reshape(-1, 4, 1)
        upper = (self.superops @ vec).reshape(-1, 2, 2)
        b = state.blocks
        b[i, j] = upper
        b[j, i] = np.conj(np.swapaxes(upper, -1, -2))


def oracle_segment(register: NvRegister, b: float, k_star: int) -> SegmentPropagator:
    """Signal at ``w_k*`` with Rabi ``b`` for a full 2*pi rotation."""
    return SegmentPropagator(register, register.frequencies[k_star], b, TWO_PI / b)


def reflection_segment(register: NvRegister, b_r0: float) -> SegmentPropagator:
    """Control drive at ``w_0`` with Rabi ``b_r0`` for a full 2*pi rotation."""
    return SegmentPropagator(register, register.frequencies[0], b_r0, TWO_PI / b_r0)


def max_grover_rounds(n_q: int) -> int:
    return int(math.floor(math.pi * math.sqrt(2**n_q) / 4))


def grover_trajectory(
    register: NvRegister,
    oracle: SegmentPropagator,
    reflection: SegmentPropagator,
    rounds: int,
) -> np.ndarray:
    """Register outcome distributions after 0..``rounds`` Grover iterations."""
    state = DensityBlockSet.plus_state(register.n_q)
    out = [state.register_populations()]
    for _ in range(rounds):
        oracle.apply(state)
        state.hadamard()
        reflection.apply(state)
        state.hadamard()
        out.append(state.register_populations())
    return np.array(out)


def grover_distribution(
    register: NvRegister, b: float, k_star: int, n_g: int, b_r0: float
) -> np.ndarray:
    """Outcome distribution ``G_k`` after ``n_g`` noisy Grover iterations."""
    if not 0 <= n_g <= max_grover_rounds(register.n_q):
        raise ValueError("n_g outside [0, floor(pi sqrt(N)/4)]")
    if n_g == 0:
        return np.full(register.size, 1.0 / register.size)
    traj = grover_trajectory(register, oracle_segment(register, b, k_star), reflection_segment(register, b_r0), n_g)
    return traj[-1]


def grover_statevector(register: NvRegister, b: float, k_star: int, n_g: int, b_r0: float) -> np.ndarray:
    """Dephasing-free cross-check of :func:`grover_distribution` on a state vector."""
    n = register.size
    u_orc = expm_2x2(drive_hamiltonians(register, register.frequencies[k_star], b), TWO_PI / b)
    u_ref = expm_2x2(drive_hamiltonians(register, register.frequencies[0], b_r0), TWO_PI / b_r0)
    had = np.array([[1.0]])
    for _ in range(register.n_q):
        had = np.kron(had, np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0))
    psi = np.zeros((n, 2), dtype=complex)
    psi[:, 0] = 1.0 / math.sqrt(n)
    for _ in range(n_g):
        psi = np.einsum("kij,kj->ki", u_orc, psi)
        psi = had @ psi
        psi = np.einsum("kij,kj->ki", u_ref, psi)
        psi = had @ psi
    return np.sum(np.abs(psi) ** 2, axis=1)


def detection_probs(register: NvRegister, b: float, k_star: int) -> np.ndarray:
    """``p_k``: chance the check at ``w_k`` flips the sensor when the signal sits at ``w_k*``.

    The check exposes the sensor, register collapsed to ``|k>``, to the signal
    for a pi-pulse time ``pi/b``.
    """
    h = drive_hamiltonians(register, register.frequencies[k_star], b)
    sup = block_superoperators(h, h, register.gamma, math.pi / b)
    # sensor starts in |0><0|, read out <1|rho|1>
    return np.clip(sup[:, 3, 0].real, 0.0, 1.0)


def detection_prob(register: NvRegister, b: float, k_star: int, k: int) -> float:
    return float(detection_probs(register, b, k_star)[k])


def tau_conventional(p_row: np.ndarray, b: float) -> float:
    """With-replacement expected time ``(pi/2b) N / sum_k p_k`` (a lower bound)."""
    total = float(np.sum(p_row))
    if total <= 0:
        return math.inf
    return math.pi / (2 * b) * len(p_row) / total


def tau_conventional_exact(n: int, b: float) -> float:
    """Error-free sampling without replacement: ``(N + 1) pi / (2b)``."""
    return (n + 1) * math.pi / (2 * b)


def tau_grover(n_g: int, b: float, b_r0: float) -> float:
    return n_g * (TWO_PI / b + TWO_PI / b_r0)


def tau_dqss(g_row: np.ndarray, p_row: np.ndarray, b: float, n_g: int, b_r0: float) -> float:
    """Expected time ``(tau_Grover + tau_Check) / sum_k G_k p_k``."""
    denom = float(np.dot(g_row, p_row))
    if denom <= 0:
        return math.inf
    return (tau_grover(n_g, b, b_r0) + math.pi / b) / denom


@dataclass
class ImprovementReport:
    p: np.ndarray
    g: np.ndarray
    tau_conv: np.ndarray
    tau_dqss: np.ndarray
    improvement: float
    variance: float
    k_stars: np.ndarray
    params: dict = field(default_factory=dict)


def sample_k_stars(n: int, sample: int | None, rng: np.random.Generator | None) -> np.ndarray:
    """All configurations, or ``sample`` of them uniformly without replacement."""
    if sample is None or sample >= n:
        return np.arange(n)
    if rng is None:
        raise ValueError("a random source is needed to subsample signal frequencies")
    return np.sort(rng.choice(n, size=sample, replace=False))


def improvement(
    register: NvRegister,
    b: float,
    n_g: int,
    b_r0: float,
    *,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> ImprovementReport:
    """Mean over signal configurations of ``tau_conv / tau_dqss``."""
    ks = sample_k_stars(register.size, sample, rng)
    refl = reflection_segment(register, b_r0) if n_g else None
    p_rows, g_rows, tc, td = [], [], [], []
    for k in ks:
        p = detection_probs(register, b, int(k))
        if n_g:
            g = grover_trajectory(register, oracle_segment(register, b, int(k)), refl, n_g)[-1]
        else:
            g = np.full(register.size, 1.0 / register.size)
        p_rows.append(p)
        g_rows.append(g)
        tc.append(tau_conventional(p, b))
        td.append(tau_dqss(g, p, b, n_g, b_r0))
    tc, td = np.array(tc), np.array(td)
    ratio = tc / td
    return ImprovementReport(
        p=np.array(p_rows),
        g=np.array(g_rows),
        tau_conv=tc,
        tau_dqss=td,
        improvement=float(np.mean(ratio)),
        variance=float(np.var(ratio)),
        k_stars=ks,
        params={"b": b, "gamma": register.gamma, "n_g": n_g, "b_r0": b_r0},
    )


def ansatz_b_r0(n_q: int, b: float) -> float:
    """Heuristic reflection drive ``(32 * 2^-n_q + 10 sqrt(B / 1 kHz))`` kHz, in rad/ms."""
    b_khz = b / TWO_PI
    return khz(32.0 * 2.0**-n_q + 10.0 * math.sqrt(b_khz))


def default_b_r0_grid(count: int = 16) -> np.ndarray:
    """Log grid over 0.01 to 50 kHz, in rad/ms."""
    return khz(np.geomspace(0.01, 50.0, count))


@dataclass
class OptimizationResult:
    n_g: int
    b_r0: float
    improvement: float
    table: np.ndarray  # improvement[b_r0 index, n_g]
    b_r0_grid: np.ndarray
    k_stars: np.ndarray


def optimize(
    register: NvRegister,
    b: float,
    b_r0_grid: np.ndarray | None = None,
    n_g_max: int | None = None,
    *,
    sample: int | None = 8,
    rng: np.random.Generator | None = None,
) -> OptimizationResult:
    """Exhaustive search over ``(B_R0, N_G)`` maximising the sampled improvement.

    Ties go to the smaller ``N_G``, then the smaller ``B_R0``.
    """
    grid = default_b_r0_grid() if b_r0_grid is None else np.sort(np.asarray(b_r0_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty B_R0 grid")
    top = max_grover_rounds(register.n_q) if n_g_max is None else min(n_g_max, max_grover_rounds(register.n_q))
    ks = sample_k_stars(register.size, sample, rng)
    ratios = np.zeros((grid.size, top + 1, ks.size))
    oracles = {}
    p_rows = {}
    for k in ks:
        k = int(k)
        p_rows[k] = detection_probs(register, b, k)
        if top:
            oracles[k] = oracle_segment(register, b, k)
    for gi, b_r0 in enumerate(grid):
        refl = reflection_segment(register, b_r0) if top else None
        for kj, k in enumerate(ks):
            k = int(k)
            p = p_rows[k]
            tc = tau_conventional(p, b)
            traj = grover_trajectory(register, oracles[k], refl, top) if top else np.full((1, register.size), 1.0 / register.size)
            for n_g in range(top + 1):
                ratios[gi, n_g, kj] = tc / tau_dqss(traj[n_g], p, b, n_g, b_r0)
    table = ratios.mean(axis=-1)
    best, pick = table[0, 0], (0, 0)
    for n_g in range(top + 1):
        for gi in range(grid.size):
            # strict improvement keeps the tie-break order
            if table[gi, n_g] > best + 1e-12 * abs(best):
                best, pick = table[gi, n_g], (gi, n_g)
    gi, n_g = pick
    return OptimizationResult(n_g, float(grid[gi]), float(best), table, grid, ks)
