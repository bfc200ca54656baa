"""Repeated seeded optimization runs and their artifacts.

Output directory layout::

    manifest.json       config echo, config hash, per-run results
    summary.csv         iter,median,q1,q3 of the per-evaluation infidelity
    trace_000.csv ...   one optimization trace per run

Infidelity is 1 - best-so-far for fidelity-type FoMs and the best-so-far
value itself for the occupation-variance FoM.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from qbopt import __version__
from qbopt.baselines import BaselineConfig, SpsaConfig, run_baseline
from qbopt.bayesopt import AcquisitionSpec, BoConfig, run_bo
from qbopt.bosehubbard import BoseHubbardTask, quantum_speed_limit
from qbopt.harness.config import ScenarioConfig
from qbopt.rydberg import RydbergParams, RydbergTask
from qbopt.trace import OptimizationTrace, fmt


@lru_cache(maxsize=8)
def qsl_time(sites: int, bosons: int, grid: int) -> float:
    return quantum_speed_limit(sites, bosons, grid)[1]


def make_task(config: ScenarioConfig, seed: int):
    if config.system == "bose-hubbard":
        b = config.bose_hubbard
        total = config.protocol_time_factor * qsl_time(b.sites, b.bosons, b.qsl_grid)
        return BoseHubbardTask(b.sites, b.bosons, total_time=total, fom=config.fom, shots=b.shots,
                               steps=b.steps, seed=seed)
    r = config.rydberg
    params = RydbergParams(detection_prob=r.detection_prob, fill_prob=r.fill_prob)
    return RydbergTask(config.geometry, config.fom, r.target, params, r.pulse_noise, r.tolerance, seed=seed,
                       taper=r.taper)


def run_optimizer(config: ScenarioConfig, task, seed: int) -> OptimizationTrace:
    bounds = tuple(map(tuple, task.bounds))
    if config.optimizer == "bo":
        b = config.bo
        acq = AcquisitionSpec(b.acquisition, b.ucb_k_start, b.ucb_k_end)
        cfg = BoConfig(bounds, b.n_init, b.m_iters, b.refit_every, acq, seed, b.n_probe, b.n_refine,
                       b.refine_maxfev, b.fit_restarts)
        return run_bo(task, cfg, task.sense)
    s = config.baseline
    spsa = SpsaConfig(s.spsa_alpha, s.spsa_gamma, s.spsa_c, s.spsa_a)
    cfg = BaselineConfig(config.optimizer, bounds, s.budget, seed, spsa, s.nm_initial_edge, s.de_popsize,
                         s.de_mutation, s.de_crossover)
    return run_baseline(task, cfg, task.sense)


def infidelity_curve(config: ScenarioConfig, trace: OptimizationTrace) -> np.ndarray:
    best = trace.best_so_far
    return best if config.fom == "fexp" else 1.0 - best


def incumbent_report(config: ScenarioConfig, task, trace: OptimizationTrace, seed: int) -> dict:
    theta = trace.best_theta
    out = {"best_fom": float(trace.best_fom), "best_theta": [float(v) for v in theta]}
    if config.system == "bose-hubbard":
        out["incumbent_fidelity"] = float(task.fidelity(theta))
    elif config.fom == "detected-count":
        out["incumbent_averaged_fom"] = task.averaged_fom(theta, config.rydberg.eval_realizations, seed)
    else:
        out["incumbent_fidelity"] = float(trace.best_fom)
    return out


@dataclass
class RunResult:
    index: int
    seed: int
    trace: OptimizationTrace
    report: dict


def run_single(config: ScenarioConfig, index: int) -> RunResult:
    seed = config.seed + index
    task = make_task(config, seed)
    trace = run_optimizer(config, task, seed)
    return RunResult(index, seed, trace, incumbent_report(config, task, trace, seed))


def _run_star(args):
    return run_single(*args)


@dataclass
class BenchmarkSummary:
    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray

    def __post_init__(self):
        tol = 1e-12
        if np.any(self.q1 > self.median + tol) or np.any(self.median > self.q3 + tol):
            raise AssertionError("quartile ordering violated")

    @classmethod
    def from_curves(cls, curves) -> "BenchmarkSummary":
        arr = np.atleast_2d(np.asarray(curves, dtype=float))
        q1, med, q3 = np.percentile(arr, [25, 50, 75], axis=0)
        return cls(med, q1, q3)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "median", "q1", "q3"])
            for i, row in enumerate(zip(self.median, self.q1, self.q3)):
                w.writerow([i + 1, *map(fmt, row)])

    @classmethod
    def read_csv(cls, path) -> "BenchmarkSummary":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(arr[:, 1], arr[:, 2], arr[:, 3])


@dataclass
class BenchmarkResult:
    config: ScenarioConfig
    runs: list
    summary: BenchmarkSummary
    out_dir: Path | None = None
    files: list = field(default_factory=list)


def check_output_dir(path) -> Path:
    """Create ``path`` and verify it is writable; raises OSError otherwise."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    probe = p / ".write-probe"
    with open(probe, "w") as fh:
        fh.write("")
    probe.unlink()
    return p


def manifest_dict(config: ScenarioConfig, runs) -> dict:
    return {
        "config": config.canonical(),
        "config_hash": config.content_hash(),
        "package_version": __version__,
        "budget": config.budget,
        "runs": [
            {"index": r.index, "seed": r.seed, "trace": f"trace_{r.index:03d}.csv", "evaluations": len(r.trace),
             **r.report}
            for r in runs
        ],
    }


def run_scenario(config: ScenarioConfig, out_dir=None, workers: int | None = None, write: bool = True) -> BenchmarkResult:
    """Execute ``config.repeats`` seeded runs and persist traces, summary and manifest."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    if write:
        check_output_dir(out)
    workers = workers or config.workers
    jobs = [(config, i) for i in range(config.repeats)]
    if workers > 1 and config.repeats > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.repeats, os.cpu_count() or 1)) as pool:
            runs = list(pool.map(_run_star, jobs))
    else:
        runs = [_run_star(j) for j in jobs]
    runs.sort(key=lambda r: r.index)
    summary = BenchmarkSummary.from_curves([infidelity_curve(config, r.trace) for r in runs])
    result = BenchmarkResult(config, runs, summary)
    if write:
        result.out_dir = out
        for r in runs:
            path = out / f"trace_{r.index:03d}.csv"
            r.trace.write_csv(path, timing=config.record_wall_time)
            result.files.append(path)
        summary.write_csv(out / "summary.csv")
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest_dict(config, runs), fh, indent=2, sort_keys=True)
            fh.write("\n")
        result.files += [out / "summary.csv", out / "manifest.json"]
    return result
