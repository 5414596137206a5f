import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.optimize import brentq

from toposquid.analysis import (
    anticrossing_gap,
    find_wells,
    parity_mixing_report,
    parity_transfer_amplitude,
    parity_transfer_rabi,
)
from toposquid.errors import DegeneracyError, NoDoubleWellError
from toposquid.model import CircuitParams, adiabatic_bands, potential, potential_derivative

TWO_PI = 2 * math.pi


def brentq_offset(E_m, E_L):
    # distance of each minimum from 2 pi: 2 E_L x = (E_m / 2) sin(x / 2)
    return brentq(lambda x: 2 * E_L * x - 0.5 * E_m * math.sin(x / 2), 1e-6, 2 * math.pi)


def rabi_max_bruteforce(bias, eps, n=20001):
    H = np.array([[-bias, eps], [eps, bias]])
    omega = 2 * math.hypot(bias, eps)
    ts = np.linspace(0, 1 / omega, n)
    U = expm(-2j * math.pi * H * (ts[1] - ts[0]))
    psi = np.array([1.0, 0.0], dtype=complex)
    best = 0.0
    for _ in ts[1:]:
        psi = U @ psi
        best = max(best, abs(psi[1]) ** 2)
    return best


@pytest.fixture(scope="module")
def reference_wells():
    return find_wells(CircuitParams(), TWO_PI)


def test_single_well_at_zero_bias():
    w = find_wells(CircuitParams(), 0.0)
    assert not w.is_double_well
    assert len(w.minima) == 1
    phi, u = w.minima[0]
    assert phi == pytest.approx(0.0, abs=1e-10)
    assert u == pytest.approx(-25.0, abs=1e-10)
    with pytest.raises(NoDoubleWellError):
        w.separation
    with pytest.raises(NoDoubleWellError):
        w.barrier_height


def test_reference_double_well_against_brentq(reference_wells):
    x = brentq_offset(25.0, 1.0)
    left, right = reference_wells.left, reference_wells.right
    assert left[0] == pytest.approx(TWO_PI - x, abs=1e-9)
    assert right[0] == pytest.approx(TWO_PI + x, abs=1e-9)
    assert reference_wells.separation == pytest.approx(2 * x, abs=1e-9)
    assert 2.9 * math.pi <= reference_wells.separation <= 3.0 * math.pi
    assert x == pytest.approx(4.6196, abs=1e-4)
    assert left[1] == pytest.approx(4.5019, abs=1e-4)
    assert reference_wells.barrier_top[0] == pytest.approx(TWO_PI, abs=1e-9)
    assert reference_wells.barrier_height == pytest.approx(25.0 - left[1], abs=1e-9)
    assert reference_wells.barrier_height == pytest.approx(20.5, abs=0.01)


def test_minima_are_stationary_and_convex(reference_wells):
    p = CircuitParams()
    h = 1e-4
    for phi, _ in reference_wells.minima:
        assert abs(float(potential_derivative(phi, TWO_PI, p))) < 1e-8
        curv = (potential(phi + h, TWO_PI, p) - 2 * potential(phi, TWO_PI, p)
                + potential(phi - h, TWO_PI, p)) / h**2
        assert curv > 0


def test_mirror_symmetry(reference_wells):
    (pl, ul), (pr, ur) = reference_wells.left, reference_wells.right
    assert abs(pl + pr - 4 * math.pi) < 1e-8
    assert abs(ul - ur) < 1e-10


def test_minima_sorted(reference_wells):
    phis = [m[0] for m in reference_wells.minima]
    assert phis == sorted(phis)


def test_weak_inductance_limit_gives_four_pi():
    w = find_wells(CircuitParams(E_L=1e-6), TWO_PI)
    assert w.separation == pytest.approx(4 * math.pi, rel=0.01)


def test_separation_increases_with_ratio():
    ratios = np.geomspace(10, 500, 12)
    seps = [find_wells(CircuitParams(E_L=25.0 / r), TWO_PI).separation for r in ratios]
    assert all(b > a for a, b in zip(seps, seps[1:]))
    assert max(seps) < 4 * math.pi
    for r, s in zip(ratios, seps):
        assert s == pytest.approx(2 * brentq_offset(25.0, 25.0 / r), abs=1e-8)


def test_no_double_well_when_barrier_condition_fails():
    # curvature at 2 pi is 2 E_L - E_m / 4
    w = find_wells(CircuitParams(E_L=25.0 / 5), TWO_PI)
    assert not w.is_double_well


@pytest.mark.parametrize("eps, expected", [(0.0, 0.0), (0.025, 0.05), (1.0, 2.0)])
@pytest.mark.parametrize("k", [-3, 0, 1, 7])
def test_anticrossing_gap_examples(eps, expected, k):
    assert anticrossing_gap(CircuitParams(epsilon=eps), k) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0.0, 50.0), st.integers(-20, 20))
def test_anticrossing_gap_is_two_epsilon(eps, k):
    assert abs(anticrossing_gap(CircuitParams(epsilon=eps), k) - 2 * eps) <= 1e-12


def test_anticrossing_gap_matches_bands():
    p = CircuitParams(epsilon=0.4)
    lo, hi = adiabatic_bands(3 * math.pi, 0.0, p)
    assert anticrossing_gap(p, 1) == pytest.approx(hi - lo, abs=1e-9)


def test_amplitude_transfer_examples():
    p = CircuitParams()
    expected = 0.025 / math.sqrt(0.000625 + 312.5)
    assert abs(parity_transfer_amplitude(math.pi / 2, p) - expected) < 1e-12
    assert parity_transfer_amplitude(math.pi / 2, p) == pytest.approx(1.414e-3, abs=1e-6)
    assert parity_transfer_amplitude(math.pi, CircuitParams(epsilon=0.3)) == pytest.approx(1.0)
    assert parity_transfer_amplitude(1.0, CircuitParams(epsilon=0.0)) == 0.0


def test_rabi_transfer_examples():
    p = CircuitParams()
    expected = 0.000625 / (0.000625 + 312.5)
    assert abs(parity_transfer_rabi(math.pi / 2, p) - expected) < 1e-15
    assert parity_transfer_rabi(math.pi / 2, p) == pytest.approx(2.0e-6, rel=1e-5)
    assert parity_transfer_rabi(math.pi, CircuitParams(epsilon=0.3)) == pytest.approx(1.0)
    # bias equal to coupling
    phi = 2 * math.acos(0.5 / 25.0)
    assert parity_transfer_rabi(phi, CircuitParams(epsilon=0.5)) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("phi, eps", [(math.pi / 2, 0.025), (math.pi / 2, 3.0), (2.5, 0.7),
                                      (math.pi, 0.2)])
def test_rabi_transfer_matches_two_level_evolution(phi, eps):
    p = CircuitParams(epsilon=eps)
    brute = rabi_max_bruteforce(p.E_m * math.cos(phi / 2), eps)
    assert brute == pytest.approx(parity_transfer_rabi(phi, p), rel=1e-6, abs=1e-12)


def test_amplitude_is_square_root_of_rabi():
    p = CircuitParams()
    assert parity_transfer_amplitude(1.1, p) ** 2 == pytest.approx(parity_transfer_rabi(1.1, p))


@given(st.floats(-20.0, 20.0), st.floats(1e-6, 24.0))
def test_rabi_never_exceeds_amplitude(phi, eps):
    p = CircuitParams(epsilon=eps)
    rabi, amp = parity_transfer_rabi(phi, p), parity_transfer_amplitude(phi, p)
    assert 0.0 <= rabi <= amp + 1e-15 <= 1.0 + 1e-15


def test_degeneracy_raises():
    p = CircuitParams(epsilon=0.0)
    with pytest.raises(DegeneracyError):
        parity_transfer_amplitude(math.pi, p)
    with pytest.raises(DegeneracyError):
        parity_transfer_rabi(3 * math.pi, p)


def test_parity_mixing_report():
    r = parity_mixing_report(CircuitParams())
    assert r.anticrossing_gap == pytest.approx(0.05, abs=1e-12)
    assert r.max_parity_rate == 0.025
    assert r.left_minimum == pytest.approx(TWO_PI - brentq_offset(25.0, 1.0), abs=1e-9)
    assert r.transfer_rabi_quoted < r.transfer_amplitude_quoted < 2e-3
    assert r.transfer_rabi_at_minimum < 1e-5
