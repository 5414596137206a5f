"""Reset, quench, hold and flux readout of the RF SQUID, shot by shot.

Timeline of one shot: the bias switches from ``reset_bias`` to ``hold_bias``
at ``t = 0`` (linearly over ``ramp_time``), the phase evolves freely for the
hold time, and the loop flux is read out projectively at
``t = ramp_time + hold``. Poisoning flips arrive as a Poisson process over the
whole shot. Shots without a flip share one deterministic reference
trajectory; flipped shots branch from it.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .analysis import find_wells
from .dynamics import (
    BiasSchedule,
    Evolver,
    ModalPropagator,
    Observables,
    SpinorState,
    apply_parity_flip,
    flux_probabilities,
    format_float,
    observables,
    sample_flip_times,
)
from .errors import DomainError, IncompleteBasisError
from .model import CircuitParams, ParitySector
from .spectral import PhaseGrid, assemble_scalar, eigensolve

TWO_PI = 2.0 * math.pi
INIT_MODES = ("quench_ground", "ideal_left")
MEASUREMENTS = ("projective_sampling", "expectation")
MAX_MODES = 1024


class FitDegenerateWarning(UserWarning):
    pass


def default_hold_times():
    return tuple(float(t) for t in np.arange(0.0, 80.0 + 1e-9, 2.0))


@dataclass(frozen=True)
class ProtocolConfig:
    circuit: CircuitParams = field(default_factory=CircuitParams)
    grid: PhaseGrid = field(default_factory=PhaseGrid)
    init_mode: str = "ideal_left"
    hold_times: tuple[float, ...] = field(default_factory=default_hold_times)
    shots_per_point: int = 400
    poisoning_rate: float = 1e-4
    measurement: str = "projective_sampling"
    seed: int = 0
    ramp_time: float = 0.0
    dt: float = 1e-3
    reset_bias: float = 0.0
    hold_bias: float = TWO_PI
    n_modes: int = 128

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise DomainError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.measurement not in MEASUREMENTS:
            raise DomainError(
                f"measurement must be one of {MEASUREMENTS}, got {self.measurement!r}"
            )
        if not self.hold_times:
            raise DomainError("hold_times must not be empty")
        if any(t < 0 for t in self.hold_times):
            raise DomainError("hold_times must be non-negative")
        if self.shots_per_point < 1:
            raise DomainError("shots_per_point must be at least 1")
        if self.poisoning_rate < 0:
            raise DomainError("poisoning_rate must be non-negative")
        if self.ramp_time < 0:
            raise DomainError("ramp_time must be non-negative")
        object.__setattr__(self, "hold_times", tuple(float(t) for t in self.hold_times))


@dataclass(frozen=True)
class ShotOutcome:
    """Result of one shot; ``outcome`` is 1 for the ``2 phi_0`` flux state."""

    outcome: float
    p_right: float
    flips: int
    parity_z: float
    mean_phase: float
    flux_probs: tuple[float, float, float]

    @property
    def flux_2phi0(self) -> bool:
        return self.outcome >= 0.5


@dataclass(frozen=True)
class FitResult:
    frequency: float
    offset: float
    amplitude: float
    visibility: float
    residual: float


@dataclass(eq=False)
class ProtocolResult:
    hold_times: np.ndarray
    p2phi0: np.ndarray
    stderr: np.ndarray
    n_shots: np.ndarray
    mean_phase: np.ndarray
    parity_z: np.ndarray
    fit: FitResult
    delta_e_spectral: float
    shot_log: np.ndarray

    @property
    def frequency(self) -> float:
        return self.fit.frequency

    @property
    def visibility(self) -> float:
        return self.fit.visibility

    def summary(self) -> dict:
        return {
            "frequency_GHz": self.fit.frequency,
            "visibility": self.fit.visibility,
            "residual": self.fit.residual,
            "offset": self.fit.offset,
            "amplitude": self.fit.amplitude,
            "delta_e_spectral_GHz": self.delta_e_spectral,
            "period_ns": 1.0 / self.fit.frequency if self.fit.frequency > 0 else math.inf,
            "mean_flux_phi0": float(np.mean(self.mean_phase) / TWO_PI),
            "total_shots": int(self.n_shots.sum()),
            "total_flips": int(self.shot_log["flips"].sum()),
        }

    def write_scan_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dt_ns", "p2phi0", "stderr", "n_shots", "mean_flux_phi0"])
            for t, p, e, n, m in zip(self.hold_times, self.p2phi0, self.stderr,
                                     self.n_shots, self.mean_phase):
                w.writerow([format_float(t), format_float(p), format_float(e), int(n),
                            format_float(m / TWO_PI)])

    def write_fit_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_SHOT_DTYPE = np.dtype([
    ("point", "i4"), ("shot", "i8"), ("hold_ns", "f8"), ("outcome", "f8"),
    ("p_right", "f8"), ("flips", "i4"), ("parity_z", "f8"), ("mean_phase", "f8"),
])


def shot_rng(seed: int, point_index: int, shot_index: int) -> np.random.Generator:
    """Independent stream per shot, keyed by ``(seed, point, shot)``."""
    return np.random.default_rng(np.random.SeedSequence([seed, point_index, shot_index]))


def prepare_initial(cfg: ProtocolConfig) -> SpinorState:
    """Initial state at ``t = 0``, in the even parity sector.

    ``quench_ground`` is the ground state at the reset bias. ``ideal_left`` is
    the state localized in the left well at the hold bias: the left-localized
    combination of the tunnel doublet when the potential is a double well, or
    the ground state when there is only one well.
    """
    p, grid = cfg.circuit, cfg.grid
    if cfg.init_mode == "quench_ground":
        spec = eigensolve(assemble_scalar(grid, p, cfg.reset_bias, ParitySector.EVEN), 1)
        return SpinorState.from_even(grid, spec.vectors[:, 0], 0.0, cfg.reset_bias)

    spec = eigensolve(assemble_scalar(grid, p, cfg.hold_bias, ParitySector.EVEN), 2)
    wells = find_wells(p, cfg.hold_bias, ParitySector.EVEN, grid)
    if not wells.is_double_well:
        return SpinorState.from_even(grid, spec.vectors[:, 0], 0.0, cfg.hold_bias)
    psi0, psi1 = spec.vectors[:, 0], spec.vectors[:, 1]
    barrier = wells.barrier_top[0]
    best = None
    for sign in (1.0, -1.0):
        s = SpinorState.from_even(grid, (psi0 + sign * psi1) / math.sqrt(2.0), 0.0,
                                  cfg.hold_bias)
        pr = observables(s, barrier).p_right
        if best is None or pr < best[0]:
            best = (pr, s)
    return best[1]


def spectral_gap(cfg: ProtocolConfig) -> float:
    """``E1 - E0`` of the even sector at the hold bias (the tunnel splitting for a double well)."""
    spec = eigensolve(assemble_scalar(cfg.grid, cfg.circuit, cfg.hold_bias,
                                      ParitySector.EVEN), 2)
    return float(spec.energies[1] - spec.energies[0])


class ProtocolSimulator:
    """Caches the initial state, reference trajectory and eigenmodes for one config."""

    def __init__(self, cfg: ProtocolConfig):
        self.cfg = cfg
        self.schedule = BiasSchedule.quench(cfg.reset_bias, cfg.hold_bias, cfg.ramp_time)
        self.initial = prepare_initial(cfg)
        self.evolver = Evolver(cfg.circuit, cfg.grid, cfg.dt)
        hold_h = self.evolver.hamiltonian(cfg.hold_bias)
        self.evolver.energy_ref = hold_h.expectation(self.initial.vector())
        self._reference = {}
        self._reference_obs = {}
        self._modal = None
        self._forms = None

    def measurement_time(self, hold: float) -> float:
        return self.cfg.ramp_time + hold

    def reference_states(self, holds) -> dict:
        """No-flip states at the given hold times (computed once, then cached)."""
        missing = sorted({float(h) for h in holds} - set(self._reference))
        if missing:
            times = [self.measurement_time(h) for h in missing]
            traj = self.evolver.evolve(self.initial, self.schedule, max(times),
                                       record_times=times)
            by_time = {s.time: s for s in traj.states}
            for h, t in zip(missing, times):
                self._reference[h] = by_time[t]
        return {float(h): self._reference[float(h)] for h in holds}

    @property
    def modal(self) -> ModalPropagator:
        if self._modal is None:
            self._modal = self._build_modal(self.cfg.n_modes)
        return self._modal

    def _build_modal(self, n_modes: int) -> ModalPropagator:
        return ModalPropagator(self.evolver.hamiltonian(self.cfg.hold_bias), self.cfg.dt,
                               self.evolver.energy_ref, n_modes=n_modes)

    def _widen_basis(self) -> bool:
        # repeated flips push weight into higher modes
        n = self.modal.energies.size
        if n >= MAX_MODES or n >= self.modal.H.dim:
            return False
        self._modal = self._build_modal(min(2 * n, MAX_MODES))
        return True

    def _modal_advance(self, vec, duration):
        while True:
            try:
                return self.modal.advance(vec, duration)
            except IncompleteBasisError:
                if not self._widen_basis():
                    raise

    def _modal_forms(self):
        """Observable quadratic forms in the current mode basis (cached per basis)."""
        modal = self.modal
        if self._forms is None or self._forms[0] is not modal:
            x = np.repeat(self.cfg.grid.points, 2)
            quanta = np.clip(np.rint(x / TWO_PI), 0, 2)
            weights = {
                "phase": x,
                "right": (x > self.cfg.hold_bias).astype(float),
                "z": np.tile([1.0, -1.0], self.cfg.grid.n),
                "flux0": (quanta == 0).astype(float),
                "flux1": (quanta == 1).astype(float),
            }
            self._forms = (modal, {k: modal.quadratic_form(w) for k, w in weights.items()})
        return self._forms[1]

    def _modal_measure(self, c):
        forms = self._modal_forms()
        total = float(np.sum(np.abs(c) ** 2))

        def expect(key):
            return float(np.real(np.vdot(c, forms[key] @ c))) / total

        f0, f1 = expect("flux0"), expect("flux1")
        obs = Observables(mean_phase=expect("phase"), p_right=expect("right"),
                          parity_z=expect("z"), norm=total * self.cfg.grid.h)
        return obs, (f0, f1, max(1.0 - f0 - f1, 0.0))

    def _modal_branch(self, hold: float, flips):
        """Readout observables of a poisoned shot, propagated entirely in mode space.

        Returns ``None`` when a flip falls inside the bias ramp or the basis
        cannot hold the flipped state even at its largest size.
        """
        if flips[0] < self.cfg.ramp_time:
            return None
        anchors = [s for s in [self.initial, *self._reference.values()]
                   if self.cfg.ramp_time <= s.time <= flips[0]]
        if not anchors:
            return None
        anchor = max(anchors, key=lambda s: s.time)
        t_meas = self.measurement_time(hold)
        while True:
            modal = self.modal
            try:
                c = modal.coefficients(anchor.vector())
                t = anchor.time
                for f in flips:
                    c = modal.flip_coefficients(modal.advance_coefficients(c, f - t))
                    t = f
                return self._modal_measure(modal.advance_coefficients(c, t_meas - t))
            except IncompleteBasisError:
                if not self._widen_basis():
                    return None

    def _propagate(self, state: SpinorState, t_to: float) -> SpinorState:
        t = state.time
        if t_to <= t:
            return state
        if t < self.cfg.ramp_time:
            t_mid = min(t_to, self.cfg.ramp_time)
            state = self.evolver.evolve(state, self.schedule, t_mid).final()
            t = t_mid
            if t_to <= t:
                return state
        vec = state.vector()
        try:
            vec = self._modal_advance(vec, t_to - t)
        except IncompleteBasisError:
            return self.evolver.evolve(state, self.schedule, t_to).final()
        return SpinorState.from_vector(self.cfg.grid, vec, t_to, self.cfg.hold_bias)

    def _branch(self, hold: float, flips) -> SpinorState:
        """State at readout for a shot whose first flip precedes the readout."""
        t_meas = self.measurement_time(hold)
        anchors = [self.initial] + [s for h, s in self._reference.items()
                                    if s.time <= flips[0]]
        state = max(anchors, key=lambda s: s.time)
        for f in flips:
            state = apply_parity_flip(self._propagate(state, f))
        return self._propagate(state, t_meas)

    def _measure(self, state: SpinorState):
        return observables(state, self.cfg.hold_bias), tuple(
            float(x) for x in flux_probabilities(state))

    def run_shot(self, hold: float, shot_index: int, point_index: int = 0) -> ShotOutcome:
        cfg = self.cfg
        hold = float(hold)
        rng = shot_rng(cfg.seed, point_index, shot_index)
        t_meas = self.measurement_time(hold)
        flips = sample_flip_times(cfg.poisoning_rate, t_meas, rng)
        if len(flips):
            self.reference_states([hold])
            res = self._modal_branch(hold, flips.times)
            if res is None:
                res = self._measure(self._branch(hold, flips.times))
            obs, flux = res
        else:
            if hold not in self._reference_obs:
                ref = self.reference_states([hold])[hold]
                self._reference_obs[hold] = self._measure(ref)
            obs, flux = self._reference_obs[hold]
        if cfg.measurement == "expectation":
            outcome = obs.p_right
        else:
            outcome = float(rng.random() < obs.p_right)
        return ShotOutcome(
            outcome=outcome, p_right=obs.p_right, flips=len(flips),
            parity_z=obs.parity_z, mean_phase=obs.mean_phase, flux_probs=flux,
        )

    def shots_for_point(self) -> int:
        cfg = self.cfg
        if cfg.measurement == "expectation" and cfg.poisoning_rate == 0:
            return 1
        return cfg.shots_per_point

    def run_scan(self) -> ProtocolResult:
        cfg = self.cfg
        holds = cfg.hold_times
        self.reference_states(holds)
        n_shots = self.shots_for_point()
        log = np.zeros(len(holds) * n_shots, dtype=_SHOT_DTYPE)
        p2, err, mphase, pz = (np.zeros(len(holds)) for _ in range(4))
        row = 0
        for i, hold in enumerate(holds):
            values = np.empty(n_shots)
            for s in range(n_shots):
                shot = self.run_shot(hold, s, i)
                values[s] = shot.outcome
                log[row] = (i, s, hold, shot.outcome, shot.p_right, shot.flips,
                            shot.parity_z, shot.mean_phase)
                row += 1
            block = log[row - n_shots:row]
            p2[i] = values.mean()
            if cfg.measurement == "projective_sampling":
                err[i] = math.sqrt(p2[i] * (1.0 - p2[i]) / n_shots)
            else:
                err[i] = values.std(ddof=1) / math.sqrt(n_shots) if n_shots > 1 else 0.0
            mphase[i] = block["mean_phase"].mean()
            pz[i] = block["parity_z"].mean()
        gap = spectral_gap(cfg)
        fit = fit_oscillation(np.asarray(holds), p2, gap)
        return ProtocolResult(
            hold_times=np.asarray(holds), p2phi0=p2, stderr=err,
            n_shots=np.full(len(holds), n_shots), mean_phase=mphase, parity_z=pz,
            fit=fit, delta_e_spectral=gap, shot_log=log,
        )


def run_shot(hold: float, cfg: ProtocolConfig, shot_index: int,
             point_index: int = 0) -> ShotOutcome:
    return ProtocolSimulator(cfg).run_shot(hold, shot_index, point_index)


def run_scan(cfg: ProtocolConfig) -> ProtocolResult:
    return ProtocolSimulator(cfg).run_scan()


def _linear_fit(t, y, f):
    c = np.cos(TWO_PI * f * t)
    design = np.column_stack([np.ones_like(t), -c])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def fit_oscillation(t, y, f_center: float, n_grid: int = 401,
                    rel_width: float = 0.5) -> FitResult:
    """Least-squares fit of ``A - B cos(2 pi f t)``.

    ``f`` is scanned on a grid spanning ``f_center * (1 +- rel_width)`` and the
    best grid point is refined by golden-section search.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if f_center <= 0:
        raise DomainError("fit needs a positive centre frequency")
    span = float(t.max() - t.min()) if t.size else 0.0
    if span < 0.5 / f_center:
        warnings.warn(
            f"scan span {span:.4g} ns covers less than half a period of {1 / f_center:.4g} ns",
            FitDegenerateWarning, stacklevel=2,
        )
    freqs = np.linspace(f_center * (1 - rel_width), f_center * (1 + rel_width), n_grid)
    costs = np.array([_linear_fit(t, y, f)[1] for f in freqs])
    j = int(np.argmin(costs))
    f_best = freqs[j]
    if 0 < j < n_grid - 1 and costs[j] < min(costs[j - 1], costs[j + 1]):
        res = optimize.minimize_scalar(lambda f: _linear_fit(t, y, f)[1],
                                       bracket=(freqs[j - 1], freqs[j], freqs[j + 1]),
                                       method="golden", tol=1e-10)
        if res.fun <= costs[j]:
            f_best = float(res.x)
    (offset, amplitude), residual = _linear_fit(t, y, f_best)
    visibility = amplitude / max(offset, 1e-12)
    return FitResult(
        frequency=float(f_best), offset=float(offset), amplitude=float(amplitude),
        visibility=float(min(max(visibility, 0.0), 1.0)), residual=residual,
    )


def with_circuit(cfg: ProtocolConfig, **changes) -> ProtocolConfig:
    return replace(cfg, circuit=replace(cfg.circuit, **changes))
