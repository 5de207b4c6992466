"""Quantum signal processing for the sensing oracle.

Phase convention: X-axis processing rotations interleaved with Z-axis signal
rotations,

    f(theta) = <0| e^{-i phi_L X} e^{-i theta Z} ... e^{-i theta Z} e^{-i phi_0 X} |0>,

and a real even polynomial ``P`` is realised as ``f(theta) = P(cos theta)``.
Phases of the form ``(h_0, h_1, ..., h_1, h_0 + pi/2)`` make ``f`` real and even
(``h = 0`` gives ``f = 0``), so synthesis is a square Newton solve over the
``L/2 + 1`` free entries of ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import linalg, special

from .qdyn import ConvergenceError

RESCALE = 1.0 - 1e-6
SYNTH_TOL = 1e-8
DEGREE_CAP = 4000


class QspSynthesisError(ConvergenceError):
    """Phase synthesis could not reach the requested residual."""


@dataclass(frozen=True)
class PolynomialApprox:
    """Real polynomial in the Chebyshev basis with its design parameters."""

    coefficients: np.ndarray
    x_star: float
    delta: float
    eps: float

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return C.chebval(x, self.coefficients)

    def sup_norm(self, samples: int = 10_000) -> float:
        nodes = np.cos(np.pi * (np.arange(samples) + 0.5) / samples)
        return float(np.max(np.abs(self(np.concatenate((nodes, [-1.0, 1.0]))))))

    @property
    def is_even(self) -> bool:
        return bool(np.all(self.coefficients[1::2] == 0.0))

    def degree_constant(self) -> float:
        """``c`` in ``L = c (1/delta) ln(1/eps)``, measured on this instance."""
        return self.degree * self.delta / math.log(1.0 / self.eps)


@dataclass(frozen=True)
class QspPhases:
    """Phase angles plus the Chebyshev coefficients they realise."""

    angles: np.ndarray
    target: np.ndarray | None = None

    @property
    def degree(self) -> int:
        return len(self.angles) - 1

    def to_list(self) -> list[float]:
        return [float(a) for a in self.angles]


def _rx(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -1j * s], [-1j * s, c]])


def approx_shifted_sign(x_star: float, delta: float, eps: float) -> PolynomialApprox:
    """Polynomial ``Q`` with ``|Q| <= 1`` on ``[-1, 1]`` and ``|Q - sgn(x - x_star)| <= eps``
    outside ``(x_star - delta/2, x_star + delta/2)``.

    Built from ``erf(kappa (x - x_star))``: ``eps/4`` goes to the smoothing,
    ``eps/4`` to Chebyshev truncation and ``eps/2`` to the final rescale
    (which divides by a peak of at most ``1 + eps/4``).
    """
    if not (delta > 0 and 0 < eps < 0.1):
        raise ValueError("need delta > 0 and 0 < eps < 0.1")
    if not -1 <= x_star <= 1:
        raise ValueError("x_star must lie in [-1, 1]")
    if x_star - delta / 2 <= -1 and x_star + delta / 2 >= 1:
        raise ValueError("failure window covers [-1, 1]")
    kappa = special.erfinv(1 - eps / 4) / (delta / 2)

    def smooth(x):
        return special.erf(kappa * (x - x_star))

    # Chebyshev coefficients of erf(kappa x) decay like exp(-n^2 / (4 kappa^2))
    n = int(2 * kappa * math.sqrt(math.log(8 / eps)) + 32)
    if n > DEGREE_CAP:
        raise ValueError(f"required degree ~{n} exceeds cap {DEGREE_CAP}")
    full = C.chebinterpolate(smooth, 2 * n)
    tail = np.cumsum(np.abs(full[::-1]))[::-1]  # tail[k] bounds the error of truncating before k
    keep = int(np.argmax(tail <= eps / 4))
    coeffs = full[: max(keep, 1)].copy()
    approx = PolynomialApprox(coeffs, x_star, delta, eps)
    peak = approx.sup_norm(max(10_000, 8 * len(coeffs)))
    coeffs *= (1 - eps / 4) / max(peak, 1.0)
    return PolynomialApprox(coeffs, x_star, delta, eps)


def symmetrize(q: PolynomialApprox) -> PolynomialApprox:
    """``P(x) = (Q(x) + Q(-x) + 1) / (1 + eps)``: even, approximating ``sgn(|x| - x_star)``.

    Reported ``eps`` of the result is ``5 eps`` of the input.
    """
    if q.x_star < q.delta / 2:
        raise ValueError("failure windows at +-x_star overlap (need x_star >= delta/2)")
    c = q.coefficients.copy()
    c[1::2] = 0.0  # Q(x) + Q(-x) keeps only even Chebyshev terms, doubled
    c = 2 * c
    c[0] += 1.0
    c /= 1.0 + q.eps
    if len(c) > 1 and len(c) % 2 == 0:
        c = c[:-1]
    return PolynomialApprox(c, q.x_star, q.delta, 5 * q.eps)


def _expand(h: np.ndarray) -> np.ndarray:
    phi = np.concatenate((h, h[-2::-1])) if len(h) > 1 else h.copy()
    phi[-1] += math.pi / 2
    return phi


def _layers(phi: np.ndarray, theta: np.ndarray):
    """Forward states ``A_k...A_0|0>`` and backward rows ``<0|A_L...A_{k+1}``."""
    m, n = len(theta), len(phi)
    z = np.exp(-1j * theta)
    c, s = np.cos(phi), np.sin(phi)
    fwd = np.empty((n, m, 2), dtype=complex)
    v = np.empty((m, 2), dtype=complex)
    v[:, 0], v[:, 1] = c[0], -1j * s[0]
    fwd[0] = v
    for k in range(1, n):
        a, b = v[:, 0] * z, v[:, 1] * z.conj()
        v = np.stack((c[k] * a - 1j * s[k] * b, -1j * s[k] * a + c[k] * b), axis=-1)
        fwd[k] = v
    bwd = np.empty((n, m, 2), dtype=complex)
    w = np.zeros((m, 2), dtype=complex)
    w[:, 0] = 1.0
    bwd[n - 1] = w
    for k in range(n - 1, 0, -1):
        # w <- w R(phi_k) S(theta)
        a = c[k] * w[:, 0] - 1j * s[k] * w[:, 1]
        b = -1j * s[k] * w[:, 0] + c[k] * w[:, 1]
        w = np.stack((a * z, b * z.conj()), axis=-1)
        bwd[k - 1] = w
    return fwd, bwd


def qsp_response(phases, theta) -> np.ndarray:
    """``<0|U_Phi(theta)|0>`` for an array of signal angles."""
    phi = np.asarray(getattr(phases, "angles", phases), dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    fwd, _ = _layers(phi, theta)
    return fwd[-1][:, 0]


def _jacobian(phi: np.ndarray, theta: np.ndarray):
    fwd, bwd = _layers(phi, theta)
    # d/dphi_k inserts -iX right after layer k: <bwd_k| (-iX) |fwd_k>
    swapped = fwd[..., ::-1]
    jac = -1j * np.einsum("kmi,kmi->mk", bwd, swapped)
    return fwd[-1][:, 0], jac


def synth_phases(p: PolynomialApprox, *, tol: float = SYNTH_TOL, max_iter: int = 60, verify: int = 1000,
                 rng: np.random.Generator | None = None) -> QspPhases:
    """Phases realising ``P`` in the convention above, verified at random angles.

    A polynomial touching ``|P| = 1`` is first scaled by ``1 - 1e-6``; the
    realised coefficients are kept on the result.
    """
    coeffs = np.asarray(p.coefficients, dtype=float)
    if np.any(np.abs(coeffs[1::2]) > 1e-14):
        raise ValueError("synth_phases needs an even polynomial")
    peak = p.sup_norm()
    if peak > 1 + 1e-9:
        raise ValueError("polynomial exceeds 1 in magnitude on [-1, 1]")
    target = coeffs * (RESCALE if peak > RESCALE else 1.0)
    degree = len(coeffs) - 1
    if degree % 2:
        degree -= 1
        target = target[:-1]
    half = degree // 2
    if half == 0:
        return QspPhases(np.array([math.acos(float(np.clip(target[0], -1, 1)))]), target)
    m = degree + 2
    x = np.cos(np.pi * (np.arange(m) + 0.5) / (2 * m))  # nodes in (0, 1)
    theta = np.arccos(x)
    want = C.chebval(x, target)
    fold = np.zeros((2 * half + 1, half + 1))
    for k in range(half + 1):
        fold[k, k] = 1.0
        fold[2 * half - k, k] = 1.0
    fold[half, half] = 1.0
    # Newton on s * P, pushing s towards 1 and halving the increment whenever a solve stalls
    h, scale, step = np.zeros(half + 1), 0.0, 0.5
    while scale < 1.0:
        trial = min(1.0, scale + step)
        got = _newton(h, theta, trial * want, fold, tol * 1e-3, max_iter)
        if got is not None:
            h, scale = got, trial
            step = min(step * 2, 0.5)
        else:
            step /= 2
            if step < 1e-4:
                break
    phases = QspPhases(_expand(h), target)
    check = _verify(phases, target, verify, rng)
    if check > tol:
        raise QspSynthesisError(f"phase synthesis residual {check:.3e} above {tol:.1e}", check)
    return phases


def _newton(h, theta, want, fold, tol, max_iter):
    for _ in range(max_iter):
        val, jac = _jacobian(_expand(h), theta)
        r = val.real - want
        res = float(np.max(np.abs(r)))
        if res < tol:
            return h
        if not res < 2.5:  # |f| <= 1 and |target| <= 1: the iterate has left the basin
            return None
        delta, *_ = linalg.lstsq(jac.real @ fold, -r)
        h = h + delta
    return None


def _verify(phases: QspPhases, target: np.ndarray, count: int, rng) -> float:
    rng = np.random.default_rng(0) if rng is None else rng
    theta = rng.uniform(-math.pi, math.pi, count)
    got = qsp_response(phases, theta)
    return float(np.max(np.abs(got - C.chebval(np.cos(theta), target))))


def eval_cqsp_blocks(phases: QspPhases, esu_blocks) -> np.ndarray:
    """Per-bin ``e^{-i phi_L X} U_k ... U_k e^{-i phi_0 X}`` as a ``(K, 2, 2)`` stack."""
    blocks = np.asarray(esu_blocks, dtype=complex)
    if blocks.ndim != 3 or blocks.shape[1:] != (2, 2):
        raise ValueError("esu_blocks must be a list of 2x2 matrices")
    out = np.broadcast_to(_rx(phases.angles[0]), blocks.shape).copy()
    for phi in phases.angles[1:]:
        out = _rx(phi) @ (blocks @ out)
    return out


def eval_cqsp(phases: QspPhases, esu_blocks) -> np.ndarray:
    """Block-diagonal ``sum_k |k><k| (x) (phase product with U_k)``."""
    return linalg.block_diag(*eval_cqsp_blocks(phases, esu_blocks))


def gap_from_angles(theta_marked: float, theta_other: float) -> float:
    """Failure-window width resolving two digitised angles: ``(2/pi^2)(|theta*| - |theta|)^2``."""
    return 2.0 / math.pi**2 * (abs(theta_marked) - abs(theta_other)) ** 2
