import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qssense.signal import (
    AcSignal,
    Modulation,
    SensingProblem,
    bump_chi,
    bump_integral,
    filter_function,
    khz,
    ramsey_filter,
    to_khz,
)


def quad_filter(pulses, target, omega):
    # (1/T) int_0^T cos(w (t - T/2)) chi(t) dt, piece by piece; the sine part cancels by symmetry
    mod = Modulation.cpmg(target, pulses)
    t_total = mod.duration
    total = 0.0
    for a, b, s in mod.pieces(0.0, t_total):
        total += s * integrate.quad(lambda t: math.cos(omega * (t - t_total / 2)), a, b, epsabs=1e-13, epsrel=1e-12)[0]
    return total / t_total


def test_khz_round_trip():
    assert khz(1.0) == pytest.approx(2 * math.pi)
    assert to_khz(khz(3.7)) == pytest.approx(3.7)


def test_signal_validation():
    with pytest.raises(ValueError):
        AcSignal(-1.0, 1.0)
    with pytest.raises(ValueError):
        AcSignal(1.0, 0.0)
    with pytest.raises(ValueError):
        AcSignal(1.0, math.nan)
    assert AcSignal(1.0, 1.0, 7.0).phase == pytest.approx(7.0 - 2 * math.pi)


def test_problem_promise():
    with pytest.raises(ValueError):
        SensingProblem(2.0, 1.0, 5.0)
    assert SensingProblem(1.0, 2.0, 5.0).bandwidth == 3.0


def test_modulation_validation():
    with pytest.raises(ValueError):
        Modulation.cpmg(1.0, 3)
    with pytest.raises(ValueError):
        Modulation.bump(0.0)
    with pytest.raises(ValueError):
        Modulation("triangle")


def test_square_wave_switches_at_pulses():
    mod = Modulation.cpmg(2.0, 4, start=1.0)
    assert mod.duration == pytest.approx(2 * math.pi)
    edges = mod.switch_times()
    assert np.allclose(np.diff(edges), math.pi / 2)
    mid = 0.5 * (edges[:-1] + edges[1:])
    assert np.array_equal(mod(mid), [-1.0, 1.0, -1.0])
    assert mod(0.5) == 0.0


def test_filter_on_resonance_limit():
    for p in (2, 4, 10, 50):
        assert abs(filter_function(p, 3.0, 3.0)) == pytest.approx(2 / math.pi, abs=1e-12)
        # the limit is approached continuously
        assert filter_function(p, 3.0, 3.0 * (1 + 1e-7)) == pytest.approx(filter_function(p, 3.0, 3.0), abs=1e-6)


def test_filter_resonance_matches_quadrature():
    assert filter_function(6, 2.0, 2.0) == pytest.approx(quad_filter(6, 2.0, 2.0), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    half=st.integers(1, 20),
    target=st.floats(0.1, 50.0),
    ratio=st.floats(0.05, 6.0),
)
def test_filter_matches_quadrature(half, target, ratio):
    pulses = 2 * half
    omega = ratio * target
    assert filter_function(pulses, target, omega) == pytest.approx(quad_filter(pulses, target, omega), abs=1e-9)


def test_filter_rejects_bad_input():
    with pytest.raises(ValueError):
        filter_function(3, 1.0, 1.0)
    with pytest.raises(ValueError):
        filter_function(2, 0.0, 1.0)
    with pytest.raises(ValueError):
        filter_function(2, 1.0, math.inf)


@settings(max_examples=200, deadline=None)
@given(b_min=st.floats(0.01, 10.0), ratio=st.floats(1.2, 40.0), offset=st.floats(-0.5, 0.5))
def test_in_bin_filter_bound(b_min, ratio, offset):
    target = ratio * b_min
    pulses = 2 * math.ceil(target / b_min)
    beta = target / pulses
    assert abs(filter_function(pulses, target, target + offset * beta)) >= 0.2


@pytest.mark.parametrize("pulses", [2, 4, 6, 8])
def test_filter_zero_set(pulses):
    target = 1.7
    for m in (2, 4, 6):
        assert abs(filter_function(pulses, target, m * target)) < 1e-9
    # zeros of sin(P a) that are not poles of sec(a): w = 2 j w_t / P with 2j/P not an odd integer
    for j in range(1, 3 * pulses):
        ratio = 2 * j / pulses
        if float(ratio).is_integer() and int(ratio) % 2:
            continue
        assert abs(filter_function(pulses, target, ratio * target)) < 1e-9


def test_ramsey_filter_values():
    assert ramsey_filter(0.0, 2.0) == 1.0
    assert abs(ramsey_filter(math.pi, 2.0)) < 1e-15
    with pytest.raises(ValueError):
        ramsey_filter(1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(duration=st.floats(0.01, 100.0), frac=st.floats(-1.0, 1.0))
def test_ramsey_bound(duration, frac):
    omega = frac * math.pi / duration
    assert abs(ramsey_filter(omega, duration)) >= 2 / math.pi - 1e-15


def test_bump_values():
    assert bump_chi(0.0) == 0.0
    assert bump_chi(1.0) == 0.0
    assert bump_chi(0.5) == pytest.approx(math.exp(-4), rel=1e-15)
    with pytest.raises(ValueError):
        bump_chi(1.5)


def test_bump_symmetry_and_range():
    s = np.random.default_rng(3).uniform(0, 1, 1000)
    assert np.max(np.abs(bump_chi(s) - bump_chi(1 - s))) <= 1e-15
    assert np.all((bump_chi(s) >= 0) & (bump_chi(s) <= 1))


def test_bump_derivative_bound():
    s = np.linspace(0, 1, 200001)
    slope = np.max(np.abs(np.gradient(bump_chi(s), s)))
    assert slope <= 12 / math.e


def test_bump_integral_by_simpson():
    s = np.linspace(0, 1, 20001)
    assert bump_integral() == pytest.approx(integrate.simpson(bump_chi(s), x=s), rel=1e-9)
