"""Numerical model of a topological RF SQUID and its 4pi phase-slip readout."""

from .analysis import (
    WellReport,
    anticrossing_gap,
    find_wells,
    parity_mixing_report,
    parity_transfer_amplitude,
    parity_transfer_rabi,
)
from .dynamics import (
    BiasSchedule,
    FlipEvents,
    SpinorState,
    apply_parity_flip,
    evolve,
    observables,
    sample_flip_times,
)
from .model import (
    CircuitParams,
    ParitySector,
    WireParams,
    derived_couplings,
    is_topological,
    junction_energy_conventional,
    majorana_epsilon,
    potential_even,
    potential_spinor,
)
from .protocol import ProtocolConfig, ProtocolResult, prepare_initial, run_scan, run_shot
from .spectral import (
    PhaseGrid,
    Spectrum,
    assemble_scalar,
    assemble_spinor,
    eigensolve,
    tunnel_splitting,
)

__version__ = "0.1.0"
