"""Finite-difference Hamiltonians on the phase coordinate and their low-lying spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError, GridTooCoarseError
from .model import CircuitParams, ParitySector, potential

TWO_PI = 2.0 * math.pi

_DENSE_LIMIT = 512
_V0_SEED = 20170101


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform grid ``phi_min, ..., phi_max`` with ``n`` points (both ends included).

    Dirichlet boundaries put ``psi = 0`` on the ghost points one spacing beyond
    each end, so the effective box width is ``(n + 1) * h``.
    """

    phi_min: float = -6.0 * math.pi
    phi_max: float = 10.0 * math.pi
    n: int = 4096

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise DomainError(f"grid needs at least 16 points, got {self.n}")
        if not self.phi_max > self.phi_min:
            raise DomainError("grid requires phi_max > phi_min")

    @property
    def h(self) -> float:
        return (self.phi_max - self.phi_min) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.phi_min, self.phi_max, self.n)

    @property
    def span(self) -> float:
        return self.phi_max - self.phi_min

    def refined(self) -> "PhaseGrid":
        """Grid on the same window with the spacing halved."""
        return PhaseGrid(self.phi_min, self.phi_max, 2 * self.n - 1)

    def inner(self, a, b) -> complex:
        return self.h * np.vdot(a, b)


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """Symmetric banded Hamiltonian.

    Scalar layout: tridiagonal, ``diagonal`` has one entry per grid point.
    Spinor layout: entries are interleaved ``(even_0, odd_0, even_1, odd_1, ...)``
    so the kinetic hopping sits on the second off-diagonal and the parity
    coupling ``epsilon`` on the first (between the two components of a point).
    """

    diagonal: np.ndarray
    hopping: float
    coupling: float = 0.0
    layout: str = "scalar"
    sector: ParitySector | None = None
    grid: PhaseGrid | None = None
    phi_e: float | None = None

    def __post_init__(self):
        if self.layout not in ("scalar", "spinor"):
            raise DomainError(f"unknown layout {self.layout!r}")
        if self.layout == "spinor" and self.diagonal.size % 2:
            raise DomainError("spinor layout needs an even dimension")

    @property
    def dim(self) -> int:
        return self.diagonal.size

    @property
    def is_spinor(self) -> bool:
        return self.layout == "spinor"

    def off_diagonals(self):
        """Return ``{offset: values}`` for the strictly lower (= upper) bands."""
        n = self.dim
        if not self.is_spinor:
            return {1: np.full(n - 1, self.hopping)}
        first = np.zeros(n - 1)
        first[0::2] = self.coupling
        return {1: first, 2: np.full(n - 2, self.hopping)}

    def to_sparse(self, fmt="csc"):
        bands = self.off_diagonals()
        diags = [self.diagonal]
        offsets = [0]
        for k, v in bands.items():
            diags += [v, v]
            offsets += [-k, k]
        return sp.diags(diags, offsets, format=fmt)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def banded_lower(self) -> np.ndarray:
        bands = self.off_diagonals()
        width = max(bands) if bands else 0
        ab = np.zeros((width + 1, self.dim))
        ab[0] = self.diagonal
        for k, v in bands.items():
            ab[k, : self.dim - k] = v
        return ab

    def matvec(self, x):
        out = self.diagonal * x
        for k, v in self.off_diagonals().items():
            out[k:] += v * x[:-k]
            out[:-k] += v * x[k:]
        return out

    def norm_bound(self) -> float:
        """Infinity norm (max absolute row sum)."""
        rows = np.abs(self.diagonal).copy()
        for k, v in self.off_diagonals().items():
            rows[k:] += np.abs(v)
            rows[:-k] += np.abs(v)
        return float(rows.max())

    def expectation(self, x) -> float:
        """``<x|H|x> / <x|x>`` for a vector in this layout."""
        return float(np.real(np.vdot(x, self.matvec(x))) / np.real(np.vdot(x, x)))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Lowest eigenpairs; ``vectors[:, i]`` is normalized as ``h * sum |psi|^2 = 1``."""

    energies: np.ndarray
    vectors: np.ndarray
    layout: str = "scalar"
    grid: PhaseGrid | None = None

    def __len__(self):
        return self.energies.size

    def components(self, i):
        """``(even, odd)`` spatial arrays of spinor eigenvector ``i``."""
        v = self.vectors[:, i]
        if self.layout != "spinor":
            return v, np.zeros_like(v)
        return v[0::2], v[1::2]

    def parity_polarization(self) -> np.ndarray:
        """``<sigma_z>`` of every spinor eigenvector."""
        if self.layout != "spinor":
            return np.ones(len(self))
        even = np.sum(np.abs(self.vectors[0::2]) ** 2, axis=0)
        odd = np.sum(np.abs(self.vectors[1::2]) ** 2, axis=0)
        return (even - odd) / (even + odd)


def _check_resolution(grid: PhaseGrid, p: CircuitParams, u: np.ndarray):
    umax = float(np.max(np.abs(u)))
    if umax > 0 and grid.h**2 > 0.1 * p.kinetic_coefficient / umax:
        raise GridTooCoarseError(
            f"grid spacing h={grid.h:.4g} too coarse for max|U|={umax:.4g} GHz "
            f"(need h^2 <= 0.1*{p.kinetic_coefficient:g}/max|U|)"
        )


def assemble_scalar(grid: PhaseGrid, p: CircuitParams, phi_e: float,
                    sector=ParitySector.EVEN) -> HamiltonianMatrix:
    """Three-point finite-difference Hamiltonian of one parity sector."""
    sector = ParitySector.parse(sector)
    u = potential(grid.points, phi_e, p, sector)
    _check_resolution(grid, p, u)
    t = p.kinetic_coefficient / grid.h**2
    return HamiltonianMatrix(
        diagonal=2.0 * t + u, hopping=-t, layout="scalar",
        sector=sector, grid=grid, phi_e=phi_e,
    )


def assemble_spinor(grid: PhaseGrid, p: CircuitParams, phi_e: float) -> HamiltonianMatrix:
    """Two-component Hamiltonian with pointwise parity mixing ``epsilon * sigma_x``."""
    x = grid.points
    u_even = potential(x, phi_e, p, ParitySector.EVEN)
    u_odd = potential(x, phi_e, p, ParitySector.ODD)
    _check_resolution(grid, p, np.concatenate([u_even, u_odd]))
    t = p.kinetic_coefficient / grid.h**2
    diag = np.empty(2 * grid.n)
    diag[0::2] = 2.0 * t + u_even
    diag[1::2] = 2.0 * t + u_odd
    return HamiltonianMatrix(
        diagonal=diag, hopping=-t, coupling=p.epsilon, layout="spinor",
        grid=grid, phi_e=phi_e,
    )


def _fix_signs(vectors):
    # leftmost significant component positive
    for i in range(vectors.shape[1]):
        v = vectors[:, i]
        idx = np.flatnonzero(np.abs(v) > 1e-3 * np.abs(v).max())[0]
        if v[idx] < 0:
            vectors[:, i] = -v
    return vectors


def eigensolve(H: HamiltonianMatrix, k: int) -> Spectrum:
    """Lowest ``k`` eigenpairs of ``H`` in ascending order.

    Scalar matrices go through LAPACK's tridiagonal solver; spinor matrices
    through shift-invert Lanczos (ARPACK) below the Gershgorin bound with a
    fixed start vector. Small problems are solved densely.
    """
    dim = H.dim
    if not 1 <= k <= dim:
        raise DomainError(f"k must lie in [1, {dim}], got {k}")

    if dim <= _DENSE_LIMIT or k > dim // 2:
        w, v = sla.eig_banded(H.banded_lower(), lower=True, select="i",
                              select_range=(0, k - 1))
    elif not H.is_spinor:
        w, v = sla.eigh_tridiagonal(H.diagonal, np.full(dim - 1, H.hopping),
                                    select="i", select_range=(0, k - 1))
    else:
        radius = 2.0 * abs(H.hopping) + abs(H.coupling)
        sigma = float(np.min(H.diagonal) - radius) - 1.0
        v0 = np.random.default_rng(_V0_SEED).standard_normal(dim)
        try:
            w, v = spla.eigsh(H.to_sparse("csc"), k=k, sigma=sigma, which="LM",
                              v0=v0, tol=0.0)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos failed to converge: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]

    v = _fix_signs(np.array(v, dtype=float))
    scale = H.norm_bound()
    for i in range(k):
        res = np.linalg.norm(H.matvec(v[:, i]) - w[i] * v[:, i])
        if res > 1e-6 * scale:
            raise ConvergenceError(
                f"eigenpair {i} residual {res:.3e} exceeds 1e-6*||H||", residual=res
            )
    gram = v.T @ v
    if np.max(np.abs(gram - np.eye(k))) > 1e-8:
        raise ConvergenceError("eigenvectors lost orthogonality")

    h = H.grid.h if H.grid is not None else 1.0
    return Spectrum(energies=np.asarray(w, dtype=float), vectors=v / math.sqrt(h),
                    layout=H.layout, grid=H.grid)


def _require_double_well_mode(p: CircuitParams):
    if not p.has_majorana_term:
        raise DomainError(
            f"tunnel splitting needs the Majorana coupling; junction_mode={p.junction_mode!r}"
        )


def tunnel_splitting(p: CircuitParams, grid: PhaseGrid | None = None,
                     phi_e: float = TWO_PI) -> float:
    """Splitting ``E1 - E0`` of the even-parity double well at ``phi_e = 2 pi``."""
    _require_double_well_mode(p)
    grid = grid or PhaseGrid()
    spec = eigensolve(assemble_scalar(grid, p, phi_e, ParitySector.EVEN), 2)
    return float(spec.energies[1] - spec.energies[0])


def spinor_doublet_splitting(p: CircuitParams, grid: PhaseGrid | None = None,
                             phi_e: float = TWO_PI, k: int = 12) -> float:
    """Splitting of the two lowest even-dominated states of the spinor problem.

    With ``epsilon -> 0`` this reduces to :func:`tunnel_splitting`; larger
    ``epsilon`` hybridizes the doublet with the odd-parity well.
    """
    _require_double_well_mode(p)
    grid = grid or PhaseGrid()
    spec = eigensolve(assemble_spinor(grid, p, phi_e), k)
    even = np.flatnonzero(spec.parity_polarization() > 0)
    if even.size < 2:
        raise ConvergenceError(f"fewer than two even-dominated states among the lowest {k}")
    return float(spec.energies[even[1]] - spec.energies[even[0]])
