"""Static landscape analysis: wells, barriers, anticrossings, parity-mixing estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, NoDoubleWellError
from .model import CircuitParams, ParitySector, potential, potential_derivative
from .spectral import PhaseGrid

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class WellReport:
    """Local minima of a parity-sector potential, sorted by phase.

    ``barrier_top`` is the highest point between the two deepest minima and is
    ``None`` for a single well; ``separation`` and ``barrier_height`` raise
    :class:`NoDoubleWellError` in that case.
    """

    minima: tuple[tuple[float, float], ...]
    barrier_top: tuple[float, float] | None = None
    phi_e: float = 0.0

    @property
    def is_double_well(self) -> bool:
        return self.barrier_top is not None

    def deepest_pair(self):
        if len(self.minima) < 2:
            raise NoDoubleWellError(
                f"potential at phi_e={self.phi_e:.6g} has a single minimum"
            )
        pair = sorted(self.minima, key=lambda m: m[1])[:2]
        return tuple(sorted(pair))

    @property
    def separation(self) -> float:
        left, right = self.deepest_pair()
        return right[0] - left[0]

    @property
    def barrier_height(self) -> float:
        left, right = self.deepest_pair()
        return self.barrier_top[1] - min(left[1], right[1])

    @property
    def left(self):
        return self.deepest_pair()[0]

    @property
    def right(self):
        return self.deepest_pair()[1]


def _bisect_root(f, a, b, tol=1e-12, max_iter=200):
    fa = f(a)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0 or 0.5 * (b - a) < tol:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def stationary_points(p: CircuitParams, phi_e: float, sector=ParitySector.EVEN,
                      grid: PhaseGrid | None = None):
    """Return ``(minima, maxima)`` phases of ``U`` inside the grid window."""
    grid = grid or PhaseGrid()
    x = grid.points
    d = potential_derivative(x, phi_e, p, sector)

    def f(phi):
        return float(potential_derivative(phi, phi_e, p, sector))

    minima, maxima = [], []
    for j in np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:])):
        if d[j] == 0.0 and j > 0:
            continue  # caught as the right end of the previous interval
        root = _bisect_root(f, x[j], x[j + 1])
        (minima if d[j] < d[j + 1] else maxima).append(root)
    return minima, maxima


def find_wells(p: CircuitParams, phi_e: float, sector=ParitySector.EVEN,
               grid: PhaseGrid | None = None) -> WellReport:
    """Locate every local minimum of ``U(phi)`` by a sign-change scan plus bisection."""
    minima, maxima = stationary_points(p, phi_e, sector, grid)
    mins = tuple((float(m), float(potential(m, phi_e, p, sector))) for m in minima)
    barrier = None
    if len(mins) >= 2:
        left, right = sorted(sorted(mins, key=lambda m: m[1])[:2])
        between = [m for m in maxima if left[0] < m < right[0]]
        if between:
            values = [float(potential(m, phi_e, p, sector)) for m in between]
            i = int(np.argmax(values))
            barrier = (float(between[i]), values[i])
    return WellReport(minima=mins, barrier_top=barrier, phi_e=phi_e)


def anticrossing_gap(p: CircuitParams, k: int = 0) -> float:
    """Gap between the adiabatic bands at ``phi = (2k + 1) pi``.

    Evaluated as ``2 sqrt((E_m cos(phi/2))^2 + eps^2)`` so that the large
    parabola term cannot cancel catastrophically; equals ``2 eps`` up to the
    rounding of ``cos``.
    """
    if not p.has_majorana_term:
        return 2.0 * p.epsilon
    phi = (2 * k + 1) * math.pi
    return 2.0 * math.hypot(p.E_m * math.cos(phi / 2.0), p.epsilon)


def _bias(phi, p):
    return p.E_m * math.cos(phi / 2.0)


def _check_degeneracy(phi, p):
    if p.epsilon == 0.0 and abs(math.cos(phi / 2.0)) < 1e-12:
        raise DegeneracyError(
            f"parity transfer undefined at the degeneracy phi={phi:.6g} with epsilon=0"
        )


def parity_transfer_amplitude(phi: float, p: CircuitParams) -> float:
    """Amplitude-ratio estimate ``eps / sqrt(eps^2 + (E_m cos(phi/2))^2)``."""
    _check_degeneracy(phi, p)
    value = p.epsilon / math.hypot(p.epsilon, _bias(phi, p))
    return min(max(value, 0.0), 1.0)


def parity_transfer_rabi(phi: float, p: CircuitParams) -> float:
    """Maximum odd-parity population of a static two-level system started in even parity."""
    _check_degeneracy(phi, p)
    eps2 = p.epsilon**2
    return eps2 / (eps2 + _bias(phi, p) ** 2)


@dataclass(frozen=True)
class ParityMixingReport:
    """Quasiclassical comparison of the two tunnelling channels."""

    epsilon: float
    anticrossing_gap: float
    left_minimum: float
    transfer_amplitude_quoted: float
    transfer_rabi_quoted: float
    transfer_amplitude_at_minimum: float
    transfer_rabi_at_minimum: float
    max_parity_rate: float


def parity_mixing_report(p: CircuitParams, phi_e: float = TWO_PI,
                         quoted_phi: float = math.pi / 2) -> ParityMixingReport:
    """Parity-switching estimates at the quoted phase and at the actual left minimum.

    The parity-changing tunnelling rate is taken equal to the two-level
    transition rate at a fixed classical phase; its maximum, ``epsilon``, is
    reached at the anticrossing.
    """
    wells = find_wells(p, phi_e, ParitySector.EVEN)
    left = wells.left[0] if wells.is_double_well else wells.minima[0][0]
    return ParityMixingReport(
        epsilon=p.epsilon,
        anticrossing_gap=anticrossing_gap(p),
        left_minimum=left,
        transfer_amplitude_quoted=parity_transfer_amplitude(quoted_phi, p),
        transfer_rabi_quoted=parity_transfer_rabi(quoted_phi, p),
        transfer_amplitude_at_minimum=parity_transfer_amplitude(left, p),
        transfer_rabi_at_minimum=parity_transfer_rabi(left, p),
        max_parity_rate=p.epsilon,
    )
