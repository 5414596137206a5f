import math

import numpy as np
import pytest

from toposquid.errors import DomainError, GridTooCoarseError
from toposquid.model import CircuitParams, ParitySector, potential
from toposquid.spectral import (
    HamiltonianMatrix,
    PhaseGrid,
    assemble_scalar,
    assemble_spinor,
    eigensolve,
    spinor_doublet_splitting,
    tunnel_splitting,
)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def grid():
    return PhaseGrid()


@pytest.fixture(scope="module")
def double_well(grid):
    return eigensolve(assemble_scalar(grid, CircuitParams(), TWO_PI, ParitySector.EVEN), 4)


def test_grid_defaults_and_validation():
    g = PhaseGrid()
    assert g.n == 4096
    assert g.span >= 8 * math.pi
    assert g.h == pytest.approx(16 * math.pi / 4095)
    # symmetric about 2 pi
    np.testing.assert_allclose(g.points + g.points[::-1], 4 * math.pi, atol=1e-12)
    with pytest.raises(DomainError):
        PhaseGrid(n=8)
    with pytest.raises(DomainError):
        PhaseGrid(1.0, 0.0, 100)


@pytest.mark.parametrize("unit", ["electron", "cooper_pair"])
def test_matrix_entries_and_symmetry(grid, unit):
    p = CircuitParams(charge_unit=unit)
    H = assemble_scalar(grid, p, 1.0, "even")
    K = p.kinetic_coefficient
    np.testing.assert_allclose(H.diagonal, 2 * K / grid.h**2 + potential(grid.points, 1.0, p),
                               rtol=1e-14)
    assert H.hopping == pytest.approx(-K / grid.h**2, rel=1e-15)
    small = assemble_scalar(PhaseGrid(-3, 3, 200), p, 1.0, "odd").to_dense()
    assert np.array_equal(small, small.T)


def test_cooper_pair_unit_uses_e_c_literally():
    g = PhaseGrid(-3, 3, 200)
    H = assemble_scalar(g, CircuitParams(charge_unit="cooper_pair"), 0.0)
    assert H.hopping == pytest.approx(-3.0 / g.h**2)


def test_spinor_matrix_structure():
    g = PhaseGrid(-2, 2, 64)
    p = CircuitParams(epsilon=0.3)
    H = assemble_spinor(g, p, 2.0)
    assert H.dim == 128
    dense = H.to_dense()
    assert np.array_equal(dense, dense.T)
    # the even-even block is the even scalar matrix
    even = assemble_scalar(g, p, 2.0, "even").to_dense()
    odd = assemble_scalar(g, p, 2.0, "odd").to_dense()
    np.testing.assert_array_equal(dense[0::2, 0::2], even)
    np.testing.assert_array_equal(dense[1::2, 1::2], odd)
    np.testing.assert_array_equal(dense[0::2, 1::2], 0.3 * np.eye(64))


def test_matvec_matches_dense():
    g = PhaseGrid(-2, 2, 50)
    H = assemble_spinor(g, CircuitParams(), 1.0)
    x = np.random.default_rng(1).standard_normal(H.dim)
    np.testing.assert_allclose(H.matvec(x), H.to_dense() @ x, rtol=1e-12)
    assert H.norm_bound() == pytest.approx(np.abs(H.to_dense()).sum(axis=1).max())


def test_particle_in_box():
    # no potential: E_k = K (k pi / W)^2 with W the Dirichlet box width
    g = PhaseGrid()
    p = CircuitParams(E_m=0.0, E_L=1e-12, epsilon=0.0)
    W = (g.n + 1) * g.h
    spec = eigensolve(assemble_scalar(g, p, TWO_PI), 6)
    k = np.arange(1, 7)
    np.testing.assert_allclose(spec.energies, p.kinetic_coefficient * (k * math.pi / W) ** 2,
                               rtol=1e-3)


def test_harmonic_ladder_cooper_pair_units(grid):
    p = CircuitParams(E_m=0.0, charge_unit="cooper_pair")
    spec = eigensolve(assemble_scalar(grid, p, TWO_PI), 5)
    expected = math.sqrt(3) * (2 * np.arange(5) + 1)
    np.testing.assert_allclose(spec.energies, expected, rtol=1e-3)
    np.testing.assert_allclose(np.diff(spec.energies), 2 * math.sqrt(3), rtol=1e-3)


def test_harmonic_ladder_follows_kinetic_coefficient(grid):
    p = CircuitParams(E_m=0.0, E_L=2.0)
    omega = 2 * math.sqrt(p.kinetic_coefficient * p.E_L)
    spec = eigensolve(assemble_scalar(grid, p, TWO_PI), 5)
    np.testing.assert_allclose(spec.energies, omega * (np.arange(5) + 0.5), rtol=1e-3)


def test_diagonal_matrix_eigenvalues_are_sorted_diagonal():
    rng = np.random.default_rng(3)
    for n in (40, 2000):
        d = rng.normal(size=n)
        H = HamiltonianMatrix(diagonal=d, hopping=0.0)
        spec = eigensolve(H, 7)
        np.testing.assert_allclose(spec.energies, np.sort(d)[:7], atol=1e-12)


def test_spectrum_invariants(grid, double_well):
    v = double_well.vectors
    np.testing.assert_allclose(grid.h * v.T @ v, np.eye(4), atol=1e-8)
    assert np.all(np.diff(double_well.energies) > 0)
    H = assemble_scalar(grid, CircuitParams(), TWO_PI)
    for i in range(4):
        res = np.linalg.norm(H.matvec(v[:, i]) - double_well.energies[i] * v[:, i])
        assert res * math.sqrt(grid.h) <= 1e-6 * H.norm_bound()


def test_reference_splitting(double_well):
    dE = double_well.energies[1] - double_well.energies[0]
    assert 0.0125 <= dE <= 0.0375
    assert dE == pytest.approx(0.025, rel=0.01)
    # doublet far below the intrawell spacing
    assert dE < 0.01 * (double_well.energies[2] - double_well.energies[1])
    assert tunnel_splitting(CircuitParams()) == pytest.approx(dE, rel=1e-12)


def test_literal_cooper_pair_splitting_is_far_smaller():
    dE = tunnel_splitting(CircuitParams(charge_unit="cooper_pair"))
    assert 0 < dE < 1e-4


def test_doublet_has_definite_mirror_parity(double_well):
    psi0, psi1 = double_well.vectors[:, 0], double_well.vectors[:, 1]
    np.testing.assert_allclose(psi0, psi0[::-1], atol=1e-6)
    np.testing.assert_allclose(psi1, -psi1[::-1], atol=1e-6)


def test_splitting_decreases_with_heavier_phase_particle():
    values = [tunnel_splitting(CircuitParams(E_c=ec)) for ec in (3.0, 1.5, 0.75)]
    assert values[0] > values[1] > values[2] > 0


def test_splitting_decreases_with_taller_barrier():
    assert tunnel_splitting(CircuitParams(E_m=50.0)) < tunnel_splitting(CircuitParams())


def test_splitting_requires_majorana_term():
    with pytest.raises(DomainError):
        tunnel_splitting(CircuitParams(junction_mode="trivial_tunneling"))


def test_grid_doubling_converges(double_well):
    fine = eigensolve(assemble_scalar(PhaseGrid().refined(), CircuitParams(), TWO_PI), 4)
    np.testing.assert_allclose(fine.energies, double_well.energies, rtol=1e-3)


def test_finite_differences_approach_from_below():
    # three-point stencil underestimates kinetic energy, so E0 rises towards the limit
    e0 = [eigensolve(assemble_scalar(PhaseGrid(n=n), CircuitParams(), TWO_PI), 1).energies[0]
          for n in (2048, 4095, 8189)]
    assert e0[0] < e0[1] < e0[2]
    # second-order convergence
    assert (e0[2] - e0[1]) < 0.35 * (e0[1] - e0[0])


def test_window_independence():
    base = tunnel_splitting(CircuitParams())
    g = PhaseGrid(-8 * math.pi, 12 * math.pi, 5120)
    assert tunnel_splitting(CircuitParams(), g) == pytest.approx(base, rel=1e-3)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarseError):
        assemble_scalar(PhaseGrid(n=256), CircuitParams(), TWO_PI)


def test_eigensolve_rejects_bad_k():
    H = assemble_scalar(PhaseGrid(-5, 5, 100), CircuitParams(), 0.0)
    with pytest.raises(DomainError):
        eigensolve(H, 0)
    with pytest.raises(DomainError):
        eigensolve(H, 101)


def test_spinor_decoupled_is_union_of_sectors(grid):
    p = CircuitParams(epsilon=0.0)
    k = 12
    spin = eigensolve(assemble_spinor(grid, p, TWO_PI), k).energies
    even = eigensolve(assemble_scalar(grid, p, TWO_PI, "even"), k).energies
    odd = eigensolve(assemble_scalar(grid, p, TWO_PI, "odd"), k).energies
    union = np.sort(np.concatenate([even, odd]))[:k]
    np.testing.assert_allclose(spin, union, atol=1e-10, rtol=0)


def test_spinor_states_parity_polarized(grid):
    spec = eigensolve(assemble_spinor(grid, CircuitParams(epsilon=0.025), TWO_PI), 6)
    assert np.all(np.abs(spec.parity_polarization()) > 0.999)


def test_spinor_pinned_at_crossing_gap_is_two_epsilon():
    # tight parabola at phi_e = pi pins the phase where cos(phi/2) = 0
    p = CircuitParams(E_m=1.0, epsilon=1.0, E_L=2000.0)
    g = PhaseGrid(math.pi - 3, math.pi + 3, 2001)
    spec = eigensolve(assemble_spinor(g, p, math.pi), 2)
    assert spec.energies[1] - spec.energies[0] == pytest.approx(2.0, rel=1e-2)
    # direct 2x2 diagonalization at phi = pi: ground state is (1, -1)/sqrt 2
    w, v = np.linalg.eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert w[1] - w[0] == pytest.approx(2.0)
    pol = spec.parity_polarization()
    assert abs(pol[0]) < 0.05 and abs(v[0, 0] ** 2 - v[1, 0] ** 2) < 1e-12
    even, odd = spec.components(0)
    assert np.sum(even * odd) < 0  # antisymmetric combination, like v[:, 0]


def test_spinor_splitting_matches_scalar_for_small_epsilon():
    scalar = tunnel_splitting(CircuitParams())
    assert spinor_doublet_splitting(CircuitParams(epsilon=1e-4)) == pytest.approx(scalar, rel=1e-3)
    assert spinor_doublet_splitting(CircuitParams(epsilon=0.025)) == pytest.approx(scalar, rel=0.01)


def test_eigensolve_deterministic(grid):
    H = assemble_spinor(grid, CircuitParams(), TWO_PI)
    a = eigensolve(H, 4)
    b = eigensolve(H, 4)
    assert np.array_equal(a.energies, b.energies)
    assert np.array_equal(a.vectors, b.vectors)
