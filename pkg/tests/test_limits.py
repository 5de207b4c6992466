import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special
from scipy.linalg import expm
from scipy.stats import unitary_group

from qssense.limits import (
    Estimate,
    ProtocolUnderTest,
    avg_distinguishability,
    avg_qfi,
    csp_bound,
    csp_distinguishability,
    final_states,
    lindblad_bound_check,
    long_time_bound,
    qfi_bound,
    qfi_estimate,
    qfi_tangent,
    random_modulations,
    random_protocol,
    short_time_bound,
)
from qssense.qdyn import I2, X, Z, ControlSchedule, DephasingSpec, trace_distance

HAD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def ramsey(duration):
    return ProtocolUnderTest(1, 0, ControlSchedule(duration, ((0.0, HAD),)))


def rk4_dense(h, jumps, rho, duration, dt):
    def rhs(r):
        d = -1j * (h @ r - r @ h)
        for l in jumps:
            ld = l.conj().T @ l
            d += l @ r @ l.conj().T - 0.5 * (ld @ r + r @ ld)
        return d

    steps = int(math.ceil(duration / dt))
    dt = duration / steps
    for _ in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


# protocol container

def test_hilbert_space_cap():
    with pytest.raises(ValueError, match="cap"):
        ProtocolUnderTest(4, 0, ControlSchedule(1.0))
    with pytest.raises(ValueError, match="cap"):
        ProtocolUnderTest(1, 4, ControlSchedule(1.0))
    with pytest.raises(ValueError):
        ProtocolUnderTest(1, 1, ControlSchedule(1.0, ((0.0, HAD),)))


def test_zsum_counts_sensors_only():
    put = ProtocolUnderTest(2, 1, ControlSchedule(1.0))
    assert put.zsum().tolist() == [2, 2, 0, 0, 0, 0, -2, -2]


def test_random_protocol_shape():
    put = random_protocol(2, 1, 3.0, 4.0, np.random.default_rng(0))
    times = [t for t, _ in put.schedule.gates]
    assert times[0] == 0.0 and times[-1] == 3.0
    for _, g in put.schedule.gates:
        assert np.allclose(g.conj().T @ g, np.eye(8), atol=1e-12)


def test_final_states_match_dense_evolution():
    rng = np.random.default_rng(1)
    put = random_protocol(2, 1, 2.0, 3.0, rng)
    b, w, phi = 0.7, 2.3, 0.4
    z = np.diag(put.zsum())
    psi = np.eye(8, dtype=complex)[:, 0]
    last = 0.0
    for t, g in put.schedule.gates:
        if t > last:
            theta = b * integrate.quad(lambda s: math.cos(w * s + phi), last, t, epsabs=1e-13)[0]
            psi = expm(-1j * theta * z) @ psi
            last = t
        psi = g @ psi
    assert np.allclose(final_states(put, b, w, phi)[0], psi, atol=1e-10)


# distinguishability

def test_zero_duration_is_indistinguishable():
    put = random_protocol(2, 1, 0.0, 5.0, np.random.default_rng(2))
    est = avg_distinguishability(put, 1.0, (1.0, 3.0), 200, np.random.default_rng(3))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_sample_floor():
    with pytest.raises(ValueError):
        avg_distinguishability(ramsey(1.0), 1.0, (1.0, 3.0), 99, np.random.default_rng(0))


def test_trailing_gates_do_not_change_distinguishability():
    rng = np.random.default_rng(4)
    for _ in range(5):
        put = random_protocol(2, 1, 1.5, 2.0, rng)
        tail = unitary_group.rvs(8, random_state=rng)
        a = avg_distinguishability(put, 0.8, (2.0, 6.0), 300, np.random.default_rng(5))
        b = avg_distinguishability(put.with_trailing(tail), 0.8, (2.0, 6.0), 300, np.random.default_rng(5))
        assert b.mean == pytest.approx(a.mean, abs=1e-12)


def test_short_time_bound_on_random_protocols():
    rng = np.random.default_rng(6)
    b, band = 1.0, (5.0, 45.0)
    for n_s in (1, 2, 3):
        for _ in range(15):
            duration = rng.uniform(0.0, 1.0 / (n_s * b))
            put = random_protocol(n_s, int(rng.integers(0, 3)), duration, 8.0, rng)
            est = avg_distinguishability(put, b, band, 200, rng)
            assert est.below(short_time_bound(n_s, b, band[1] - band[0]))


def test_long_time_bound_on_random_protocols():
    rng = np.random.default_rng(7)
    b, band = 0.5, (5.0, 405.0)
    for n_s in (1, 2):
        for steps in (1, 2, 4):
            duration = steps / (n_s * b)
            put = random_protocol(n_s, 1, duration, 3.0, rng)
            est = avg_distinguishability(put, b, band, 300, rng)
            assert est.below(long_time_bound(n_s, b, band[1] - band[0], duration))


def test_estimate_helpers():
    est = Estimate.of(np.array([1.0, 2.0, 3.0]))
    assert est.mean == 2.0 and est.stderr == pytest.approx(1 / math.sqrt(3))
    assert est.below(1.0) and not est.below(0.0)
    assert Estimate.of(np.array([4.0])).stderr == 0.0


# Fisher information

@settings(max_examples=25, deadline=None)
@given(duration=st.floats(0.1, 20.0), omega=st.floats(0.05, 10.0), phi=st.floats(0.0, 6.28))
def test_ramsey_fisher_information(duration, omega, phi):
    put = ramsey(duration)
    integral = (math.sin(omega * duration + phi) - math.sin(phi)) / omega
    exact = (2 * integral) ** 2
    assert float(qfi_tangent(put, omega, phi)[0]) == pytest.approx(exact, rel=1e-10, abs=1e-12)
    if exact > 1e-6 * duration**2:
        assert qfi_estimate(put, omega, phi) == pytest.approx(exact, rel=1e-6)


def test_finite_difference_matches_tangent():
    rng = np.random.default_rng(8)
    for _ in range(10):
        put = random_protocol(2, 1, rng.uniform(0.5, 3.0), 3.0, rng)
        w, phi = rng.uniform(0.5, 10.0), rng.uniform(0, 2 * math.pi)
        tangent = float(qfi_tangent(put, w, phi)[0])
        assert qfi_estimate(put, w, phi) == pytest.approx(tangent, rel=1e-6, abs=1e-10)


def test_insensitive_protocol_has_no_information():
    # computational-basis permutations keep the sensors in Z eigenstates
    cnot = np.eye(4)[[0, 1, 3, 2]].astype(complex)
    put = ProtocolUnderTest(1, 1, ControlSchedule(3.0, ((1.0, cnot), (2.0, np.kron(X, I2)))))
    assert abs(qfi_estimate(put, 2.0, 0.3)) < 1e-8
    assert avg_qfi(put, (1.0, 4.0), 200, np.random.default_rng(0)).mean < 1e-8


def test_average_fisher_bound_on_random_protocols():
    rng = np.random.default_rng(9)
    band = (5.0, 105.0)
    for n_s in (1, 2, 3):
        for _ in range(5):
            duration = rng.uniform(0.5, 10.0)
            put = random_protocol(n_s, int(rng.integers(0, 2)), duration, 2.0, rng)
            est = avg_qfi(put, band, 200, rng)
            assert est.below(qfi_bound(n_s, band[1] - band[0], duration))


# classically processed sensors

def test_switched_off_modulation_gives_zero():
    est = csp_distinguishability(np.zeros((2, 5)), 3.0, 1.0, (1.0, 4.0), 200, np.random.default_rng(0))
    assert est.mean == 0.0


def test_modulation_range_checked():
    with pytest.raises(ValueError):
        csp_distinguishability(np.full((1, 3), 1.5), 1.0, 1.0, (1.0, 2.0), 200, np.random.default_rng(0))


def test_single_sensor_constant_modulation_matches_bessel_average():
    b, duration, band = 1.2, 2.0, (0.5, 6.0)
    est = csp_distinguishability(np.ones((1, 1)), duration, b, band, 40000, np.random.default_rng(10))

    def integrand(w):
        amp = 2 * b * math.sin(w * duration / 2) / w
        return 2 - 2 * special.j0(amp)

    exact = integrate.quad(integrand, *band, epsabs=1e-12)[0] / (band[1] - band[0])
    assert abs(est.mean - exact) < 4 * est.stderr


def test_classical_bound_on_random_modulations():
    rng = np.random.default_rng(11)
    b, band = 1.0, (2.0, 62.0)
    for pieces in (1, 4, 16):
        for duration in (0.5, 2.0, 8.0):
            chi = random_modulations(2, pieces, rng)
            est = csp_distinguishability(chi, duration, b, band, 400, rng)
            assert est.below(csp_bound(2, b, band[1] - band[0], duration))


# dephasing bound

def test_lindblad_trivial_cases():
    h = lambda t: 0.3 * np.kron(X, Z)
    rho = np.diag([1.0, 0, 0, 0]).astype(complex)
    assert lindblad_bound_check(h, [DephasingSpec(0.0, (0, 1))], 1.0, rho) == (0.0, 0.0)
    assert lindblad_bound_check(h, [DephasingSpec(0.4, (0,))], 0.0, rho) == (0.0, 0.0)
    with pytest.raises(ValueError):
        lindblad_bound_check(h, [], 1.0, np.eye(16) / 16)


def test_lindblad_bound_random_two_qubit():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = 0.5 * (a + a.conj().T)
    psi = unitary_group.rvs(4, random_state=rng)[:, 0]
    rho = np.outer(psi, psi.conj())
    spec = DephasingSpec(0.1, (0, 1))
    measured, bound = lindblad_bound_check(lambda t: h, [spec], 1.0, rho)
    assert bound == pytest.approx(0.2)
    assert measured <= bound
    jumps = [math.sqrt(0.1) * np.kron(Z, I2), math.sqrt(0.1) * np.kron(I2, Z)]
    noisy = rk4_dense(h, jumps, rho, 1.0, 1e-3)
    u = expm(-1j * h)
    assert measured == pytest.approx(trace_distance(noisy, u @ rho @ u.conj().T), abs=1e-7)
    assert 0 < measured / bound < 1
