"""Data files behind the spectrum, population, pulse and site-probability figures.

File formats:

* BH spectrum ``gamma,E_0..E_k``; Rydberg zero-field spectrum ``delta,E_0..E_{2^N-1}`` (sorted).
* BH populations ``t,ground,excited_1_5,higher``; Rydberg fidelity traces ``t,F_0..F_N``.
* Controls ``t,gamma`` (ramp) or ``t,omega,delta`` (pulse).
* Site probabilities: JSON with positions (m) and per-site excitation probability.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from qbopt import bosehubbard as bh
from qbopt import rydberg as ry
from qbopt.controls import PulseSpec, RampSpec, write_pulse_csv, write_ramp_csv
from qbopt.harness.config import GEOMETRY
from qbopt.trace import fmt

KINDS = ("spectrum", "populations", "pulse", "site-probs")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def bh_spectrum(sites=5, bosons=5, points=101, levels=None):
    basis = bh.build_basis(sites, bosons)
    grid = np.linspace(0.0, 1.0, points)
    spec = np.array([bh.full_spectrum(bh.build_hamiltonian(basis, g)) for g in grid])
    return grid, spec if levels is None else spec[:, :levels]


def rydberg_spectrum(system="rydberg-1d", points=101, delta_range=(-2.5e9, 4.0e9)):
    lattice = ry.lattice_preset(GEOMETRY[system])
    grid = np.linspace(*delta_range, points)
    energies, _ = ry.zero_field_spectrum(lattice, grid)
    return grid, np.sort(energies, axis=1)


def _ramp_from(theta, total_time):
    return RampSpec.linear(total_time) if theta is None else RampSpec.from_vector(theta, total_time)


def _pulse_from(theta):
    if theta is None:
        return linear_sweep_pulse()
    return PulseSpec.from_vector(theta)


def linear_sweep_pulse(omega=1.25e9, delta_start=-2.5e9, delta_end=4.0e9, total_time=1e-6):
    """Constant windowed Rabi drive with a detuning swept linearly across the allowed range."""
    times = np.array([0.25, 0.5, 0.75])
    deltas = delta_start + (delta_end - delta_start) * times
    return PulseSpec((omega,) * 3, tuple(deltas), total_time)


def export_figure_data(kind: str, out_dir, system: str = "bose-hubbard", theta=None, points: int = 101,
                       samples: int = 41, time_factor: float = 1.0, tolerance: float = 1e-7) -> list[Path]:
    """Write the data files for one figure kind; returns the written paths."""
    if kind not in KINDS:
        raise ValueError(f"unknown export kind {kind!r}; choose from {KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    is_bh = system == "bose-hubbard"
    if not is_bh and system not in GEOMETRY:
        raise ValueError(f"unknown system {system!r}")
    written = []

    if kind == "spectrum":
        if is_bh:
            grid, spec = bh_spectrum(points=points)
            path = out / "bh_spectrum.csv"
            _write_rows(path, ["gamma", *[f"E_{k}" for k in range(spec.shape[1])]], np.c_[grid, spec])
        else:
            grid, spec = rydberg_spectrum(system, points)
            path = out / f"{system}_spectrum.csv"
            _write_rows(path, ["delta", *[f"E_{k}" for k in range(spec.shape[1])]], np.c_[grid, spec])
        written.append(path)

    elif kind == "populations":
        if is_bh:
            total = time_factor * bh.quantum_speed_limit(5, 5)[1]
            ramp = _ramp_from(theta, total)
            times, pops = bh.population_trace(bh.superfluid_state(bh.build_basis(5, 5)), ramp, samples)
            path = out / "bh_populations.csv"
            _write_rows(path, ["t", "ground", "excited_1_5", "higher"], np.c_[times, pops])
        else:
            lattice = ry.lattice_preset(GEOMETRY[system])
            pulse = _pulse_from(theta)
            times = np.linspace(0.0, pulse.total_time, samples)
            final, states = ry.evolve(ry.SpinState.ground(lattice.n_sites), pulse, lattice, tolerance=tolerance,
                                      checkpoints=times[1:-1])
            traj = [ry.manifold_fidelities(ry.SpinState.ground(lattice.n_sites))]
            traj += [ry.manifold_fidelities(s) for s in states] + [ry.manifold_fidelities(final)]
            path = out / f"{system}_fidelities.csv"
            n = lattice.n_sites
            _write_rows(path, ["t", *[f"F_{k}" for k in range(n + 1)]], np.c_[times, np.array(traj)])
        written.append(path)

    elif kind == "pulse":
        if is_bh:
            total = time_factor * bh.quantum_speed_limit(5, 5)[1]
            path = out / "bh_ramp.csv"
            write_ramp_csv(_ramp_from(theta, total), path, samples)
        else:
            path = out / f"{system}_pulse.csv"
            write_pulse_csv(_pulse_from(theta), path, samples)
        written.append(path)

    else:  # site-probs
        if is_bh:
            raise ValueError("site-probs export is defined for Rydberg systems only")
        lattice = ry.lattice_preset(GEOMETRY[system])
        pulse = _pulse_from(theta)
        psi = ry.evolve(ry.SpinState.ground(lattice.n_sites), pulse, lattice, tolerance=tolerance)
        doc = {
            "system": system,
            "geometry": lattice.geometry,
            "positions_m": lattice.positions.tolist(),
            "probabilities": [float(p) for p in ry.site_excitation_probabilities(psi)],
            "pulse": pulse.to_vector().tolist(),
        }
        path = out / f"{system}_site_probs.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        written.append(path)
    return written
