"""Command-line front end: ``toposquid {potential,spectrum,protocol,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, spectral
from .config import SWEEP_TARGETS, RunConfig, SweepSpec
from .dynamics import format_float
from .errors import ConfigError, DomainError, NumericalError
from .model import ParitySector, adiabatic_bands, is_topological, potential
from .protocol import ProtocolSimulator

log = logging.getLogger("toposquid")

OUT_ENV = "TOPOSQUID_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else format_float(v)
                        for v in row])


def _write_json(path: Path, data: dict):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo(summary: dict):
    for key in sorted(summary):
        print(f"{key} = {summary[key]}")


def well_summary(cfg: RunConfig) -> dict:
    p = cfg.circuit_params()
    grid = cfg.grid()
    wells = analysis.find_wells(p, cfg.phi_e, ParitySector.EVEN, grid)
    wire = cfg.wire_params()
    out = {
        "phi_e_rad": cfg.phi_e,
        "n_minima": len(wells.minima),
        "epsilon_GHz": p.epsilon,
        "E_J_GHz": p.E_J,
        "anticrossing_gap_GHz": analysis.anticrossing_gap(p),
        "topological_phase": is_topological(wire.B, p.delta_gap, wire.mu),
    }
    for i, (phi, u) in enumerate(wells.minima):
        out[f"minimum_{i}_phi_rad"] = phi
        out[f"minimum_{i}_U_GHz"] = u
    if wells.is_double_well:
        out["barrier_phi_rad"], out["barrier_U_GHz"] = wells.barrier_top
        out["separation_rad"] = wells.separation
        out["separation_over_pi"] = wells.separation / math.pi
        out["barrier_height_GHz"] = wells.barrier_height
    if p.epsilon > 0:
        out["parity_transfer_amplitude_pi_over_2"] = analysis.parity_transfer_amplitude(math.pi / 2, p)
        out["parity_transfer_rabi_pi_over_2"] = analysis.parity_transfer_rabi(math.pi / 2, p)
    return out


def cmd_potential(cfg: RunConfig, out: Path) -> dict:
    p = cfg.circuit_params()
    x = cfg.grid().points
    u_even = potential(x, cfg.phi_e, p, ParitySector.EVEN)
    u_odd = potential(x, cfg.phi_e, p, ParitySector.ODD)
    lower, upper = adiabatic_bands(x, cfg.phi_e, p)
    _write_csv(out / "potential.csv",
               ["phi_rad", "U_even_GHz", "U_odd_GHz", "U_plus_GHz", "U_minus_GHz"],
               zip(x, u_even, u_odd, upper, lower))
    summary = well_summary(cfg)
    _write_json(out / "wells.json", summary)
    return summary


def cmd_spectrum(cfg: RunConfig, out: Path) -> dict:
    p = cfg.circuit_params()
    grid = cfg.grid()
    model = cfg.spectrum_model()
    k = cfg.get("spectrum.k")
    if k < 2:
        raise ConfigError("spectrum.k must be at least 2", key="spectrum.k")
    if model == "spinor":
        H = spectral.assemble_spinor(grid, p, cfg.phi_e)
    else:
        H = spectral.assemble_scalar(grid, p, cfg.phi_e, ParitySector.parse(model))
    spec = spectral.eigensolve(H, k)
    pol = spec.parity_polarization()
    _write_csv(out / "spectrum.csv", ["index", "energy_GHz", "parity_z"],
               ((i, e, z) for i, (e, z) in enumerate(zip(spec.energies, pol))))
    delta = float(spec.energies[1] - spec.energies[0])
    summary = {
        "model": model,
        "k": k,
        "n": grid.n,
        "phi_min_rad": grid.phi_min,
        "phi_max_rad": grid.phi_max,
        "h_rad": grid.h,
        "phi_e_rad": cfg.phi_e,
        "charge_unit": p.charge_unit,
        "delta_e_GHz": delta,
        "period_ns": 1.0 / delta if delta > 0 else math.inf,
        "ground_energy_GHz": float(spec.energies[0]),
    }
    if cfg.get("spectrum.wavefunctions"):
        header, cols = ["phi_rad"], [grid.points]
        for i in range(k):
            even, odd = spec.components(i)
            header.append(f"psi_{i}_even")
            cols.append(even)
            if model == "spinor":
                header.append(f"psi_{i}_odd")
                cols.append(odd)
        _write_csv(out / "wavefunctions.csv", header, zip(*cols))
    _write_json(out / "spectrum.json", summary)
    return summary


def cmd_protocol(cfg: RunConfig, out: Path) -> dict:
    result = ProtocolSimulator(cfg.protocol_config()).run_scan()
    result.write_scan_csv(out / "scan.csv")
    result.write_fit_json(out / "fit.json")
    return result.summary()


def sweep_target(cfg: RunConfig, target: str) -> float:
    p = cfg.circuit_params()
    if target == "splitting":
        if cfg.spectrum_model() == "spinor":
            return spectral.spinor_doublet_splitting(p, cfg.grid(), cfg.phi_e)
        return spectral.tunnel_splitting(p, cfg.grid(), cfg.phi_e)
    if target == "separation":
        return analysis.find_wells(p, cfg.phi_e, ParitySector.EVEN, cfg.grid()).separation
    return ProtocolSimulator(cfg.protocol_config()).run_scan().visibility


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    spec = SweepSpec.from_config(cfg)
    target = cfg.get("sweep.target")
    if target not in SWEEP_TARGETS:
        raise ConfigError(f"sweep.target must be one of {SWEEP_TARGETS}", key="sweep.target")
    rows, failures = [], 0
    for value in spec.points():
        point = cfg.copy()
        point.set(spec.parameter, value)
        eps, result, note = "", "", ""
        try:
            eps = point.circuit_params().epsilon
            result = sweep_target(point, target)
        except (ConfigError, DomainError, NumericalError) as exc:
            note = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            failures += 1
            log.warning("sweep point %s=%r failed: %s", spec.parameter, value, note)
        rows.append((value, result, eps, note))
    _write_csv(out / "sweep.csv", ["value", target, "epsilon_GHz", "error"], rows)
    summary = {"parameter": spec.parameter, "target": target, "points": len(rows),
               "failures": failures}
    _write_json(out / "sweep.json", summary)
    return summary


COMMANDS = {
    "potential": cmd_potential,
    "spectrum": cmd_spectrum,
    "protocol": cmd_protocol,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toposquid",
        description="Topological RF SQUID: potentials, spectra, phase-slip protocol, sweeps.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI-style config file")
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    parser.add_argument("--seed", type=int, help="override protocol.seed")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}", key=item)
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.seed is not None:
        cfg.set("protocol.seed", args.seed)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = Path(args.out or os.environ.get(OUT_ENV) or "out")
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _echo(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
