"""Time evolution of the two-parity wavefunction with sudden parity flips.

Time is in ns and energies in GHz, so the Schroedinger equation reads
``i dpsi/dt = 2 pi H psi``. One Cayley (Crank-Nicolson) step of length ``dt`` is
``(1 + i pi dt H)^-1 (1 - i pi dt H)``, which is unitary for any ``dt``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, IncompleteBasisError, StepRejectedError
from .model import CircuitParams
from .spectral import HamiltonianMatrix, PhaseGrid, assemble_spinor, eigensolve

_TIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpinorState:
    """Even/odd parity components on ``grid`` at ``time`` under bias ``phi_e``."""

    grid: PhaseGrid
    even: np.ndarray
    odd: np.ndarray
    time: float = 0.0
    phi_e: float = 0.0

    @classmethod
    def from_vector(cls, grid, vec, time=0.0, phi_e=0.0):
        vec = np.asarray(vec, dtype=complex)
        return cls(grid, vec[0::2].copy(), vec[1::2].copy(), time, phi_e)

    @classmethod
    def from_even(cls, grid, psi, time=0.0, phi_e=0.0):
        psi = np.asarray(psi, dtype=complex)
        return cls(grid, psi.copy(), np.zeros_like(psi), time, phi_e)

    def vector(self) -> np.ndarray:
        out = np.empty(2 * self.grid.n, dtype=complex)
        out[0::2] = self.even
        out[1::2] = self.odd
        return out

    def density(self) -> np.ndarray:
        return np.abs(self.even) ** 2 + np.abs(self.odd) ** 2

    def norm(self) -> float:
        return float(self.grid.h * np.sum(self.density()))

    def overlap(self, other: "SpinorState") -> complex:
        return self.grid.inner(self.vector(), other.vector())


@dataclass(frozen=True)
class BiasSchedule:
    """Piecewise-linear ``phi_e(t)``; clamped to the end values outside the knots."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots:
            raise DomainError("bias schedule needs at least one knot")
        times = [t for t, _ in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("bias schedule knots must be strictly increasing in time")

    @classmethod
    def constant(cls, phi_e: float) -> "BiasSchedule":
        return cls(((0.0, float(phi_e)),))

    @classmethod
    def quench(cls, start: float, stop: float, ramp_time: float = 0.0,
               t0: float = 0.0) -> "BiasSchedule":
        """Sudden (``ramp_time = 0``) or linear switch from ``start`` to ``stop``."""
        if ramp_time <= 0:
            return cls.constant(stop)
        return cls(((t0, float(start)), (t0 + ramp_time, float(stop))))

    def __call__(self, t: float) -> float:
        ts, vs = zip(*self.knots)
        return float(np.interp(t, ts, vs))

    @property
    def settle_time(self) -> float:
        """Time after which the bias no longer changes."""
        return self.knots[-1][0]

    def is_constant_on(self, t0: float, t1: float) -> bool:
        if len(self.knots) == 1 or t0 >= self.settle_time:
            return True
        if t1 <= self.knots[0][0]:
            return True
        return False


@dataclass(frozen=True)
class FlipEvents:
    times: tuple[float, ...] = ()

    def __post_init__(self):
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("flip times must be sorted")
        if any(t < 0 for t in self.times):
            raise DomainError("flip times must be non-negative")

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times)


def apply_parity_flip(s: SpinorState) -> SpinorState:
    """Quasiparticle poisoning event: ``sigma_x`` on the parity components."""
    return replace(s, even=s.odd.copy(), odd=s.even.copy())


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence([int(x) for x in seed]))
    return np.random.default_rng(seed)


def sample_flip_times(rate: float, t_end: float, seed) -> FlipEvents:
    """Poisson arrival times on ``[0, t_end]`` with exponential inter-arrival gaps.

    ``seed`` may be an int, a sequence of ints (hashed through ``SeedSequence``)
    or a ``numpy.random.Generator`` that is advanced in place.
    """
    if rate < 0:
        raise DomainError(f"flip rate must be non-negative, got {rate}")
    if rate == 0 or t_end <= 0:
        return FlipEvents()
    rng = _rng(seed)
    scale = 1.0 / rate
    t = rng.exponential(scale)
    if t > t_end:
        return FlipEvents()
    batch = int(rate * t_end + 4.0 * math.sqrt(rate * t_end)) + 4
    times = [t]
    while True:
        arrivals = (t + np.cumsum(rng.exponential(scale, size=batch))).tolist()
        for a in arrivals:
            if a > t_end:
                return FlipEvents(tuple(times))
            times.append(a)
        t = arrivals[-1]


@dataclass(frozen=True)
class Observables:
    mean_phase: float
    p_right: float
    parity_z: float
    norm: float


def observables(s: SpinorState, barrier: float | None = None) -> Observables:
    """Phase mean, mass right of the barrier (default: the current bias), and ``<sigma_z>``."""
    x = s.grid.points
    h = s.grid.h
    rho = s.density()
    norm = float(h * rho.sum())
    phi_b = s.phi_e if barrier is None else barrier
    pe = h * np.sum(np.abs(s.even) ** 2)
    po = h * np.sum(np.abs(s.odd) ** 2)
    return Observables(
        mean_phase=float(h * np.sum(x * rho) / norm),
        p_right=float(h * np.sum(rho[x > phi_b]) / norm),
        parity_z=float((pe - po) / norm),
        norm=norm,
    )


def flux_probabilities(s: SpinorState, n_max: int = 2) -> np.ndarray:
    """Probability of each trapped-flux outcome ``0..n_max`` (nearest multiple of 2 pi)."""
    quanta = np.clip(np.rint(s.grid.points / (2.0 * math.pi)), 0, n_max).astype(int)
    rho = s.density()
    probs = np.bincount(quanta, weights=rho, minlength=n_max + 1)
    return probs / probs.sum()


class CayleyStepper:
    """Pre-factored Cayley step for a fixed Hamiltonian and step length."""

    def __init__(self, H: HamiltonianMatrix, dt: float, energy_ref: float = 0.0):
        self.H = H
        self.dt = dt
        self.energy_ref = energy_ref
        a = 1j * math.pi * dt
        shifted = H.to_sparse("csc") - energy_ref * sp.identity(H.dim, format="csc")
        self._lu = spla.splu((sp.identity(H.dim, format="csc") + a * shifted).tocsc())

    def step(self, vec: np.ndarray) -> np.ndarray:
        # (1 + iaH)^-1 (1 - iaH) = 2 (1 + iaH)^-1 - 1
        return 2.0 * self._lu.solve(vec) - vec


def cayley_phase(energies, dt: float, energy_ref: float = 0.0):
    """Eigenvalues of one Cayley step for the given eigenenergies."""
    a = math.pi * dt * (np.asarray(energies) - energy_ref)
    return (1.0 - 1j * a) / (1.0 + 1j * a)


class ModalPropagator:
    """Applies repeated Cayley steps of a constant Hamiltonian in its eigenbasis.

    ``advance`` reproduces ``n`` steps of :class:`CayleyStepper` exactly on the
    span of the retained modes; states with weight outside that span raise
    :class:`IncompleteBasisError`.
    """

    def __init__(self, H: HamiltonianMatrix, dt: float, energy_ref: float = 0.0,
                 n_modes: int = 128, tol: float = 1e-10):
        spec = eigensolve(H, min(n_modes, H.dim))
        self.H = H
        self.dt = dt
        self.energy_ref = energy_ref
        self.tol = tol
        self.energies = spec.energies
        # orthonormal columns in the unweighted inner product
        self._modes = spec.vectors * math.sqrt(H.grid.h)
        self._step_phase = cayley_phase(self.energies, dt, energy_ref)
        self._flip = None

    def coefficients(self, vec):
        c = self._modes.T @ vec
        missing = float(np.real(np.vdot(vec, vec)) - np.sum(np.abs(c) ** 2))
        if missing > self.tol * max(float(np.real(np.vdot(vec, vec))), 1.0):
            raise IncompleteBasisError(
                f"state weight {missing:.3e} lies outside the {c.size} retained modes"
            )
        return c

    def propagator_phases(self, duration: float):
        n_full, rest = _split_duration(duration, self.dt)
        phases = self._step_phase ** n_full
        if rest > 0:
            phases = phases * cayley_phase(self.energies, rest, self.energy_ref)
        return phases

    def advance(self, vec: np.ndarray, duration: float) -> np.ndarray:
        c = self.coefficients(vec)
        return self._modes @ (self.propagator_phases(duration) * c)

    def advance_coefficients(self, c, duration: float):
        return self.propagator_phases(duration) * c

    def to_vector(self, c) -> np.ndarray:
        return self._modes @ c

    @property
    def flip_matrix(self) -> np.ndarray:
        """``sigma_x`` projected on the retained modes."""
        if self._flip is None:
            swapped = np.empty_like(self._modes)
            swapped[0::2], swapped[1::2] = self._modes[1::2], self._modes[0::2]
            self._flip = self._modes.T @ swapped
        return self._flip

    def flip_coefficients(self, c):
        """Parity flip in mode space; raises if the flipped state leaves the span."""
        out = self.flip_matrix @ c
        total = float(np.sum(np.abs(c) ** 2))
        missing = total - float(np.sum(np.abs(out) ** 2))
        if missing > self.tol * max(total, 1.0):
            raise IncompleteBasisError(
                f"flipped state weight {missing:.3e} lies outside the {c.size} retained modes"
            )
        return out

    def quadratic_form(self, weights) -> np.ndarray:
        """``V^T diag(weights) V`` for a weight per interleaved vector entry."""
        return self._modes.T @ (np.asarray(weights)[:, None] * self._modes)


def _split_duration(duration, dt):
    n_full = int(math.floor(duration / dt + _TIME_TOL))
    rest = duration - n_full * dt
    if rest < _TIME_TOL * dt:
        rest = 0.0
    return n_full, rest


@dataclass
class Trajectory:
    """Snapshots of an evolution, in time order."""

    states: list = field(default_factory=list)
    flips_applied: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def final(self) -> SpinorState:
        return self.states[-1]

    def rows(self):
        for s in self.states:
            o = observables(s)
            yield (s.time, o.mean_phase, o.p_right, o.parity_z, o.norm)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t_ns", "mean_phase_rad", "p_right", "parity_z", "norm"])
            for row in self.rows():
                writer.writerow([format_float(v) for v in row])


def format_float(x: float) -> str:
    return format(float(x), ".15g")


class Evolver:
    """Cayley integrator for one circuit and grid, caching step factorizations.

    Hamiltonians are reassembled whenever the scheduled bias changes, evaluated
    at the midpoint of each step.
    """

    def __init__(self, params: CircuitParams, grid: PhaseGrid, dt: float = 1e-3,
                 energy_ref: float | None = None, check_dt: bool = True):
        if dt <= 0:
            raise DomainError(f"dt must be positive, got {dt}")
        if check_dt and dt > 0.1 / params.energy_scale():
            raise DomainError(
                f"dt={dt} ns exceeds 0.1/max energy scale = {0.1 / params.energy_scale():.3g} ns"
            )
        self.params = params
        self.grid = grid
        self.dt = dt
        self.energy_ref = energy_ref
        self._hamiltonians = {}
        self._steppers = {}

    def hamiltonian(self, phi_e: float) -> HamiltonianMatrix:
        key = float(phi_e)
        if key not in self._hamiltonians:
            if len(self._hamiltonians) > 8:
                self._hamiltonians.clear()
            self._hamiltonians[key] = assemble_spinor(self.grid, self.params, key)
        return self._hamiltonians[key]

    def stepper(self, phi_e: float, dt: float) -> CayleyStepper:
        key = (float(phi_e), float(dt))
        if key not in self._steppers:
            if len(self._steppers) > 8:
                self._steppers.clear()
            self._steppers[key] = CayleyStepper(self.hamiltonian(phi_e), dt, self.energy_ref)
        return self._steppers[key]

    def _advance(self, vec, t, duration, sched):
        """Step from ``t`` for ``duration`` without events; returns ``(vec, t)``."""
        n_full, rest = _split_duration(duration, self.dt)
        steps = [(self.dt, n_full)] + ([(rest, 1)] if rest > 0 else [])
        constant = sched.is_constant_on(t, t + duration)
        norm0 = float(np.real(np.vdot(vec, vec)))
        for h_step, count in steps:
            stepper = self.stepper(sched(t), h_step) if constant else None
            for _ in range(count):
                if not constant:
                    stepper = self.stepper(sched(t + 0.5 * h_step), h_step)
                vec = stepper.step(vec)
                norm1 = float(np.real(np.vdot(vec, vec)))
                drift = abs(norm1 - norm0) * self.grid.h
                if drift > 1e-8:
                    raise StepRejectedError(
                        f"norm drift {drift:.3e} in one step at t={t:.6g} ns", drift=drift
                    )
                norm0 = norm1
                t += h_step
        return vec, t

    def evolve(self, s0: SpinorState, sched: BiasSchedule, t_end: float,
               flips: FlipEvents | None = None, stride: int | None = None,
               record_times=None) -> Trajectory:
        """Integrate from ``s0.time`` to ``t_end``.

        Snapshots are taken every ``stride`` steps and at each of
        ``record_times``; the initial and final states are always included.
        Flips are applied exactly at their times by splitting the step.
        """
        if abs(s0.norm() - 1.0) > 1e-8:
            raise DomainError(f"initial state not normalized (norm={s0.norm():.12g})")
        if self.energy_ref is None:
            self.energy_ref = self.hamiltonian(sched(s0.time)).expectation(s0.vector())
        t = s0.time
        flips = [f for f in (flips or ()) if t <= f <= t_end]
        events = [(f, "flip") for f in flips]
        if record_times is not None:
            events += [(float(r), "record") for r in record_times if t < r <= t_end]
        if stride:
            n_total = int(math.floor((t_end - t) / self.dt + _TIME_TOL))
            events += [(t + k * self.dt, "record") for k in range(stride, n_total + 1, stride)]
        events.append((t_end, "record"))
        events.sort(key=lambda e: (e[0], e[1] != "flip"))

        vec = s0.vector()
        traj = Trajectory(states=[replace(s0, phi_e=sched(t))])
        for when, kind in events:
            if when > t:
                vec, _ = self._advance(vec, t, when - t, sched)
                t = when
            if kind == "flip":
                vec = apply_parity_flip(SpinorState.from_vector(self.grid, vec)).vector()
                traj.flips_applied += 1
            elif traj.states[-1].time < t:
                traj.states.append(SpinorState.from_vector(self.grid, vec, t, sched(t)))
        if traj.states[-1].time != t_end:
            traj.states.append(SpinorState.from_vector(self.grid, vec, t_end, sched(t_end)))
        return traj


def evolve(s0: SpinorState, params: CircuitParams, sched: BiasSchedule, dt: float,
           t_end: float, flips: FlipEvents | None = None, stride: int | None = None,
           record_times=None, energy_ref: float | None = None) -> Trajectory:
    """Functional wrapper around :class:`Evolver` for one-off integrations."""
    ev = Evolver(params, s0.grid, dt, energy_ref=energy_ref)
    return ev.evolve(s0, sched, t_end, flips=flips, stride=stride, record_times=record_times)
