"""AC signal model, modulation profiles and frequency-domain filter functions.

Units throughout the package: time in ms, every frequency-like quantity as an
angular frequency in rad/ms. Values quoted in kHz are cyclic and pass through
:func:`khz` on the way in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * math.pi

# exp(-1/(s(1-s))) underflows below this product; clamp to an exact zero
_BUMP_FLOOR = 1.0 / 708.0

# closed-form filter is swapped for the exact sum within this distance of a pole
_POLE_GUARD = 1e-3


def khz(value):
    """Convert a cyclic frequency in kHz to angular rad/ms."""
    return TWO_PI * value


def to_khz(value):
    """Inverse of :func:`khz`."""
    return value / TWO_PI


@dataclass(frozen=True)
class AcSignal:
    """A single tone ``B cos(w t + phi)`` coupled to the sensor."""

    strength: float
    angular_frequency: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.strength, self.angular_frequency, self.phase)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("signal parameters must be finite")
        if self.strength < 0:
            raise ValueError("signal strength must be non-negative")
        if self.angular_frequency <= 0:
            raise ValueError("signal frequency must be positive")
        object.__setattr__(self, "phase", self.phase % TWO_PI)


@dataclass(frozen=True)
class SensingProblem:
    """Detection task: is there a tone with B >= b_min and w in [omega_min, omega_max]?"""

    b_min: float
    omega_min: float
    omega_max: float
    n_sensors: int = 1

    def __post_init__(self) -> None:
        if not (self.omega_max > self.omega_min >= self.b_min > 0):
            raise ValueError("need omega_max > omega_min >= b_min > 0")
        if self.n_sensors < 1:
            raise ValueError("n_sensors must be a positive integer")

    @property
    def bandwidth(self) -> float:
        return self.omega_max - self.omega_min


@dataclass(frozen=True)
class Modulation:
    """Coupling profile chi(t) of the sensor to the field.

    ``kind`` is one of ``constant``, ``cpmg_square`` or ``bump``. The square
    wave and the bump live on ``[start, start + duration]`` and vanish outside.
    """

    kind: str = "constant"
    target: float = 0.0
    pulse_count: int = 0
    span: float = 0.0
    start: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "cpmg_square":
            if self.pulse_count < 2 or self.pulse_count % 2:
                raise ValueError("cpmg_square needs an even pulse count >= 2")
            if not self.target > 0:
                raise ValueError("cpmg_square needs a positive target frequency")
        elif self.kind == "bump":
            if not self.span > 0:
                raise ValueError("bump needs a positive duration")
        elif self.kind != "constant":
            raise ValueError(f"unknown modulation kind {self.kind!r}")

    @classmethod
    def constant(cls) -> "Modulation":
        return cls("constant")

    @classmethod
    def cpmg(cls, target: float, pulse_count: int, start: float = 0.0) -> "Modulation":
        return cls("cpmg_square", target=target, pulse_count=pulse_count, start=start)

    @classmethod
    def bump(cls, duration: float, start: float = 0.0) -> "Modulation":
        return cls("bump", span=duration, start=start)

    @property
    def duration(self) -> float:
        if self.kind == "cpmg_square":
            return self.pulse_count * math.pi / self.target
        return self.span

    def switch_times(self) -> np.ndarray:
        """Absolute pi-pulse times of the square wave."""
        if self.kind != "cpmg_square":
            return np.empty(0)
        j = np.arange(1, self.pulse_count + 1)
        return self.start + (2 * j - 1) * math.pi / (2 * self.target)

    def pieces(self, t0: float, t1: float) -> list[tuple[float, float, float]]:
        """Constant-sign pieces ``(a, b, sign)`` covering ``[t0, t1]``; square wave only."""
        if self.kind == "constant":
            return [(t0, t1, 1.0)]
        if self.kind != "cpmg_square":
            raise ValueError("pieces are defined for piecewise-constant profiles only")
        edges = np.concatenate(([self.start], self.switch_times(), [self.start + self.duration]))
        out = []
        for j in range(len(edges) - 1):
            a, b = max(edges[j], t0), min(edges[j + 1], t1)
            if b > a:
                out.append((a, b, -1.0 if j % 2 else 1.0))
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        rel = t - self.start
        inside = (rel >= 0) & (rel <= self.duration)
        if self.kind == "bump":
            return np.where(inside, bump_chi(np.clip(rel / self.span, 0.0, 1.0)), 0.0)
        flips = np.searchsorted(self.switch_times(), t, side="right")
        return np.where(inside, np.where(flips % 2, -1.0, 1.0), 0.0)


def _sin_ratio(pulse_count: int, a: np.ndarray) -> np.ndarray:
    # sin(P a)/cos(a) as a finite sum of sines, exact for even P
    j = np.arange(pulse_count // 2)
    terms = (-1.0) ** j * np.sin(np.multiply.outer(a, pulse_count - 1 - 2 * j))
    return 2.0 * terms.sum(axis=-1)


def filter_function(pulse_count: int, target: float, omega):
    """Frequency response of a CPMG square wave with ``pulse_count`` pulses.

    Equals ``(1/T) * integral_0^T exp(i w (t - T/2)) chi(t) dt``, which is real
    because the square wave is symmetric about T/2.
    """
    if pulse_count < 2 or pulse_count % 2:
        raise ValueError("the filter function is defined for even pulse counts only")
    if not target > 0:
        raise ValueError("target frequency must be positive")
    w = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite frequency")
    a = math.pi * w / (2.0 * target)
    pa = pulse_count * a
    cos_a = np.cos(a)
    near_pole = np.abs(cos_a) < _POLE_GUARD
    safe_cos = np.where(near_pole, 1.0, cos_a)
    ratio = np.where(near_pole, 0.0, np.sin(pa) / safe_cos)
    if np.any(near_pole):
        ratio = np.where(near_pole, _sin_ratio(pulse_count, np.where(near_pole, a, 0.0)), ratio)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(pa == 0, 0.0, (np.sin(pa) - ratio) / np.where(pa == 0, 1.0, pa))
    return float(value) if np.ndim(value) == 0 else value


def ramsey_filter(omega, duration: float):
    """``sin(w T/2)/(w T/2)`` with the value 1 at w = 0."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    value = np.sinc(np.asarray(omega, dtype=float) * duration / TWO_PI)
    return float(value) if value.ndim == 0 else value


def bump_chi(s):
    """Smooth switch-on/off profile ``exp(-1/(s(1-s)))`` on [0, 1]."""
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ValueError("bump_chi is defined on [0, 1]")
    q = arr * (1.0 - arr)
    live = q >= _BUMP_FLOOR
    expo = np.divide(-1.0, q, out=np.full_like(arr, -np.inf), where=live)
    out = np.exp(expo)
    return float(out) if out.ndim == 0 else out


@cache
def bump_integral(power: int = 1) -> float:
    """``integral_0^1 chi(s)^power ds`` for the bump profile."""
    val, _ = integrate.quad(lambda s: bump_chi(s) ** power, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    return val
