import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qssense.oracle_synth import (
    PRIMES,
    BooleanFunctionSpec,
    ideal_oracle,
    register_oracle,
    sensor_fidelity,
    synth_oracle,
    tone_phase,
)
from qssense.qdyn import ConvergenceError

OMEGA0 = 2.0
AND = BooleanFunctionSpec.from_function(2, 1, lambda x: int(x == 3))


def test_truth_table_parsing():
    spec = BooleanFunctionSpec.from_bits(2, 2, "00 01 10 11")
    assert spec.table == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert [spec.output(x) for x in range(4)] == [0, 1, 2, 3]
    assert spec.restrict(1).table == ((0,), (1,), (0,), (1,))
    assert BooleanFunctionSpec.from_function(2, 2, lambda x: x) == spec


@pytest.mark.parametrize(
    "args",
    [(2, 1, "010"), (2, 1, "01a0"), (4, 1, "0" * 16), (1, 3, "0" * 6)],
)
def test_truth_table_rejects_bad_input(args):
    with pytest.raises(ValueError):
        BooleanFunctionSpec.from_bits(*args)


def test_ideal_oracle_is_a_permutation():
    u = ideal_oracle(AND)
    assert np.array_equal(u @ u, np.eye(8))
    assert u[7, 6] == 1 and u[6, 7] == 1 and u[0, 0] == 1


def test_zero_function_gives_identity():
    res = synth_oracle(BooleanFunctionSpec.from_bits(2, 1, "0000"), OMEGA0)
    assert np.max(np.abs(register_oracle(res) - np.eye(8))) < 1e-6
    assert np.all(res.angles == 0)


def test_tone_selectivity():
    strength = math.pi**2 / (4 * 2 * math.pi / OMEGA0)
    for k, x in itertools.product(range(8), repeat=2):
        for start in (0.0, 2 * math.pi / OMEGA0):
            phase = tone_phase(k, x, OMEGA0, strength, start)
            if k == x:
                assert abs(abs(phase) - math.pi / 2) < 1e-12  # B T (2/pi) with B = pi^2/(4T)
            else:
                assert abs(phase) < 1e-8


@pytest.mark.parametrize("n", [1, 2, 3])
def test_random_functions_match_ideal(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        bits = "".join(rng.choice(["0", "1"], 2**n))
        spec = BooleanFunctionSpec.from_bits(n, 1, bits)
        res = synth_oracle(spec, OMEGA0)
        assert np.max(np.abs(register_oracle(res) - ideal_oracle(spec))) < 1e-4


def test_and_oracle_exact_and_sampled():
    exact = synth_oracle(AND, OMEGA0)
    assert np.max(np.abs(register_oracle(exact) - ideal_oracle(AND))) < 1e-10
    sampled = synth_oracle(AND, OMEGA0, trotter_steps=64, tol=1e-9)
    assert sampled.steps is not None and sampled.residual < 1e-9
    assert np.max(np.abs(register_oracle(sampled) - ideal_oracle(AND))) < 1e-4
    assert np.max(np.abs(sampled.angles - exact.angles)) < 1e-7


def test_sampled_route_reports_nonconvergence():
    with pytest.raises(ConvergenceError):
        synth_oracle(AND, OMEGA0, trotter_steps=8, tol=1e-15, max_steps=256)


def test_two_outputs_compose_from_single_outputs():
    spec = BooleanFunctionSpec.from_bits(2, 2, "01 11 00 10")
    full = synth_oracle(spec, OMEGA0).unitary
    parts = [synth_oracle(spec.restrict(i), OMEGA0).unitary for i in range(2)]
    for k in range(4):
        block = full[16 * k : 16 * (k + 1), 16 * k : 16 * (k + 1)]
        a = parts[0][4 * k : 4 * (k + 1), 4 * k : 4 * (k + 1)].reshape(2, 2, 2, 2)
        b = parts[1][4 * k : 4 * (k + 1), 4 * k : 4 * (k + 1)].reshape(2, 2, 2, 2)
        # a[y0, s0, y0', s0'] b[y1, s1, y1', s1'] reordered to (y0 y1 s0 s1)
        joint = np.einsum("aceg,bdfh->abcdefgh", a, b).reshape(16, 16)
        assert np.max(np.abs(block - joint)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 3), m=st.integers(1, 2), seed=st.integers(0, 10**6))
def test_sensors_return_to_plus(n, m, seed):
    rng = np.random.default_rng(seed)
    spec = BooleanFunctionSpec.from_bits(n, m, "".join(rng.choice(["0", "1"], 2**n * m)))
    res = synth_oracle(spec, rng.uniform(0.5, 5.0))
    assert sensor_fidelity(res) > 1 - 1e-6
    u = res.unitary
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10)


def test_design_constants():
    res = synth_oracle(AND, OMEGA0)
    assert res.duration == pytest.approx(2 * math.pi / OMEGA0)
    assert res.strength == pytest.approx(math.pi**2 / (4 * res.duration))
    assert PRIMES[:4] == (2, 3, 5, 7)
    with pytest.raises(ValueError):
        synth_oracle(AND, 0.0)
