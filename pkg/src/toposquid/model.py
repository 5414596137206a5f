"""Circuit parameters and closed-form energies of the topological RF SQUID.

All energies are E/h in GHz, phases in radians, lengths in micrometres.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

JUNCTION_MODES = ("topological", "trivial_tunneling", "trivial_full", "combined")
CHARGE_UNITS = ("electron", "cooper_pair")

# n is conjugate to phi/2 for single-electron charge, so n^2 -> -4 d^2/dphi^2
_KINETIC_FACTOR = {"electron": 4.0, "cooper_pair": 1.0}


class ParitySector(enum.Enum):
    """Fermion parity of the Majorana pair at the junction.

    The even sector carries ``-E_m cos(phi/2)``, the odd sector ``+E_m cos(phi/2)``.
    """

    EVEN = "even"
    ODD = "odd"

    @property
    def sign(self) -> int:
        return 1 if self is ParitySector.EVEN else -1

    def flipped(self) -> "ParitySector":
        return ParitySector.ODD if self is ParitySector.EVEN else ParitySector.EVEN

    @classmethod
    def parse(cls, value) -> "ParitySector":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown parity sector {value!r}") from None


@dataclass(frozen=True)
class CircuitParams:
    """Energy scales of the loop and its junction.

    ``conductance`` may be left as ``None``; it is then derived from
    ``E_m = delta_gap * sqrt(D)``. When given explicitly, the two must agree.
    """

    E_c: float = 3.0
    E_L: float = 1.0
    E_m: float = 25.0
    delta_gap: float = 200.0
    conductance: float | None = None
    epsilon: float = 0.025
    junction_mode: str = "topological"
    charge_unit: str = "electron"

    def __post_init__(self):
        if not self.E_c > 0:
            raise DomainError(f"E_c must be positive, got {self.E_c}")
        if not self.E_L > 0:
            raise DomainError(f"E_L must be positive, got {self.E_L}")
        if not self.E_m >= 0:
            raise DomainError(f"E_m must be non-negative, got {self.E_m}")
        if not self.delta_gap > 0:
            raise DomainError(f"delta_gap must be positive, got {self.delta_gap}")
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.junction_mode not in JUNCTION_MODES:
            raise DomainError(
                f"junction_mode must be one of {JUNCTION_MODES}, got {self.junction_mode!r}"
            )
        if self.charge_unit not in CHARGE_UNITS:
            raise DomainError(
                f"charge_unit must be one of {CHARGE_UNITS}, got {self.charge_unit!r}"
            )
        if self.conductance is None:
            if self.E_m > self.delta_gap:
                raise DomainError(
                    f"E_m={self.E_m} exceeds delta_gap={self.delta_gap}; implied D > 1"
                )
        else:
            _check_conductance(self.conductance)
            expected = self.delta_gap * math.sqrt(self.conductance)
            if abs(expected - self.E_m) > 1e-9 * max(abs(expected), abs(self.E_m), 1e-300):
                raise DomainError(
                    f"E_m={self.E_m} inconsistent with delta_gap*sqrt(D)={expected}"
                )

    @classmethod
    def from_junction(cls, delta_gap: float, conductance: float, **kwargs) -> "CircuitParams":
        E_m, _ = derived_couplings(delta_gap, conductance)
        return cls(E_m=E_m, delta_gap=delta_gap, conductance=conductance, **kwargs)

    @property
    def D(self) -> float:
        if self.conductance is not None:
            return self.conductance
        return (self.E_m / self.delta_gap) ** 2

    @property
    def E_J(self) -> float:
        """Tunnelling-limit Josephson energy ``delta_gap * D / 4``."""
        return self.delta_gap * self.D / 4.0

    @property
    def kinetic_coefficient(self) -> float:
        """Coefficient of ``-d^2/dphi^2`` in the discretized Hamiltonian."""
        return _KINETIC_FACTOR[self.charge_unit] * self.E_c

    @property
    def has_majorana_term(self) -> bool:
        return self.junction_mode in ("topological", "combined")

    def energy_scale(self) -> float:
        """Largest physical energy scale, used for time-step guards."""
        scales = [self.kinetic_coefficient, self.E_L, self.epsilon]
        if self.has_majorana_term:
            scales.append(self.E_m)
        if self.junction_mode != "topological":
            scales.append(self.E_J)
        return max(scales)


@dataclass(frozen=True)
class WireParams:
    """Nanowire section hosting one Majorana pair."""

    B: float = 250.0
    mu: float = 100.0
    L_wire: float = 2.0
    xi: float = 0.2413
    epsilon0: float = 100.0

    def __post_init__(self):
        if not self.L_wire >= 0:
            raise DomainError(f"L_wire must be non-negative, got {self.L_wire}")
        if not self.xi > 0:
            raise DomainError(f"xi must be positive, got {self.xi}")
        if not self.epsilon0 >= 0:
            raise DomainError(f"epsilon0 must be non-negative, got {self.epsilon0}")


def _check_conductance(D):
    if not 0.0 <= D <= 1.0:
        raise DomainError(f"conductance D must lie in [0, 1], got {D}")


def derived_couplings(delta_gap: float, conductance: float) -> tuple[float, float]:
    """Return ``(E_m, E_J)`` for a single-channel junction.

    ``E_m = delta * sqrt(D)`` and ``E_J = delta * D / 4``, so that
    ``E_J = E_m**2 / (4 * delta)``.
    """
    if not delta_gap > 0:
        raise DomainError(f"delta_gap must be positive, got {delta_gap}")
    _check_conductance(conductance)
    return delta_gap * math.sqrt(conductance), delta_gap * conductance / 4.0


def critical_field(delta_gap: float, mu: float) -> float:
    return math.hypot(delta_gap, mu)


def is_topological(B: float, delta_gap: float, mu: float) -> bool:
    """True when the Zeeman energy exceeds ``sqrt(delta**2 + mu**2)``."""
    if not delta_gap > 0:
        raise DomainError(f"delta_gap must be positive, got {delta_gap}")
    return B > critical_field(delta_gap, mu)


def majorana_epsilon(wire: WireParams) -> float:
    """Hybridization of the two Majoranas of one wire (exponential envelope only)."""
    return wire.epsilon0 * math.exp(-wire.L_wire / wire.xi)


def majorana_term(phi, p: CircuitParams, sector=ParitySector.EVEN):
    sector = ParitySector.parse(sector)
    return -sector.sign * p.E_m * np.cos(np.asarray(phi) / 2.0)


def junction_energy_conventional(phi, delta_gap: float, conductance: float):
    """Single-channel Andreev energy ``-delta * sqrt(1 - D sin^2(phi/2))``."""
    _check_conductance(conductance)
    s = np.sin(np.asarray(phi) / 2.0)
    return -delta_gap * np.sqrt(1.0 - conductance * s * s)


def junction_potential(phi, p: CircuitParams, sector=ParitySector.EVEN):
    """Junction contribution to the potential for the configured junction mode."""
    phi = np.asarray(phi, dtype=float)
    mode = p.junction_mode
    if mode == "topological":
        return majorana_term(phi, p, sector)
    if mode == "trivial_tunneling":
        return -p.E_J * np.cos(phi)
    full = junction_energy_conventional(phi, p.delta_gap, p.D)
    if mode == "trivial_full":
        return full
    return majorana_term(phi, p, sector) + full


def potential(phi, phi_e: float, p: CircuitParams, sector=ParitySector.EVEN):
    phi = np.asarray(phi, dtype=float)
    return p.E_L * (phi - phi_e) ** 2 + junction_potential(phi, p, sector)


def potential_even(phi, phi_e: float, p: CircuitParams):
    """``E_L (phi - phi_e)^2 - E_m cos(phi/2)`` in the topological mode."""
    return potential(phi, phi_e, p, ParitySector.EVEN)


def potential_derivative(phi, phi_e: float, p: CircuitParams, sector=ParitySector.EVEN):
    """Analytic ``dU/dphi`` matching :func:`potential`."""
    sector = ParitySector.parse(sector)
    phi = np.asarray(phi, dtype=float)
    out = 2.0 * p.E_L * (phi - phi_e)
    mode = p.junction_mode
    if mode in ("topological", "combined"):
        out = out + sector.sign * 0.5 * p.E_m * np.sin(phi / 2.0)
    if mode == "trivial_tunneling":
        out = out + p.E_J * np.sin(phi)
    if mode in ("trivial_full", "combined"):
        s = np.sin(phi / 2.0)
        out = out + p.delta_gap * p.D * np.sin(phi) / (4.0 * np.sqrt(1.0 - p.D * s * s))
    return out


def potential_spinor(phi, phi_e: float, p: CircuitParams):
    """Potential matrix in the ``{even, odd}`` basis, shape ``phi.shape + (2, 2)``.

    ``E_L (phi - phi_e)^2 I - E_m cos(phi/2) sigma_z + epsilon sigma_x`` plus any
    parity-independent conventional term of the junction mode.
    """
    phi = np.asarray(phi, dtype=float)
    u_even = potential(phi, phi_e, p, ParitySector.EVEN)
    u_odd = potential(phi, phi_e, p, ParitySector.ODD)
    out = np.empty(phi.shape + (2, 2))
    out[..., 0, 0] = u_even
    out[..., 1, 1] = u_odd
    out[..., 0, 1] = p.epsilon
    out[..., 1, 0] = p.epsilon
    return out


def adiabatic_bands(phi, phi_e: float, p: CircuitParams):
    """Closed-form eigenvalues ``(U_minus, U_plus)`` of :func:`potential_spinor`."""
    phi = np.asarray(phi, dtype=float)
    u_even = potential(phi, phi_e, p, ParitySector.EVEN)
    u_odd = potential(phi, phi_e, p, ParitySector.ODD)
    mean = 0.5 * (u_even + u_odd)
    half = np.hypot(0.5 * (u_even - u_odd), p.epsilon)
    return mean - half, mean + half
