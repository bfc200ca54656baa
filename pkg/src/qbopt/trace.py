"""Per-evaluation optimization records and their CSV form.

CSV columns: ``iter,theta_1..theta_P,fom,best_so_far,wall_s``.  Floats are
written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def check_sense(sense: str) -> str:
    if sense not in (MAXIMIZE, MINIMIZE):
        raise ValueError(f"sense must be 'maximize' or 'minimize', got {sense!r}")
    return sense


@dataclass
class OptimizationTrace:
    sense: str
    thetas: np.ndarray
    foms: np.ndarray
    wall: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_sense(self.sense)
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.foms = np.asarray(self.foms, dtype=float).reshape(-1)
        self.wall = np.asarray(self.wall, dtype=float).reshape(-1)

    def __len__(self):
        return self.foms.size

    @property
    def best_so_far(self) -> np.ndarray:
        if self.sense == MAXIMIZE:
            return np.maximum.accumulate(self.foms)
        return np.minimum.accumulate(self.foms)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.foms) if self.sense == MAXIMIZE else np.argmin(self.foms))

    @property
    def best_theta(self) -> np.ndarray:
        return self.thetas[self.best_index]

    @property
    def best_fom(self) -> float:
        return float(self.foms[self.best_index])

    def write_csv(self, path, *, timing: bool = True) -> None:
        p = self.thetas.shape[1]
        best = self.best_so_far
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", *[f"theta_{i + 1}" for i in range(p)], "fom", "best_so_far", "wall_s"])
            for i in range(len(self)):
                wall = self.wall[i] if timing else 0.0
                w.writerow([i + 1, *map(fmt, self.thetas[i]), fmt(self.foms[i]), fmt(best[i]), fmt(wall)])

    @classmethod
    def read_csv(cls, path, sense: str = MAXIMIZE) -> "OptimizationTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        p = sum(1 for h in header if h.startswith("theta_"))
        arr = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, p + 4))
        return cls(sense, arr[:, 1 : 1 + p].reshape(-1, p), arr[:, 1 + p], arr[:, 3 + p])


class BudgetExhausted(Exception):
    pass


class Recorder:
    """Wraps an objective: enforces the evaluation budget and box, logs every call.

    ``sentinel`` maps the values observed so far to a replacement for a
    non-finite objective value.
    """

    def __init__(self, objective, bounds, sense: str, budget: int, sentinel=None):
        self.objective = objective
        self.bounds = np.asarray(bounds, dtype=float)
        self.sense = check_sense(sense)
        self.budget = int(budget)
        self.sentinel = sentinel or default_sentinel(sense)
        self.thetas: list[np.ndarray] = []
        self.foms: list[float] = []
        self.wall: list[float] = []

    @property
    def remaining(self) -> int:
        return self.budget - len(self.foms)

    def __call__(self, theta) -> float:
        if self.remaining <= 0:
            raise BudgetExhausted
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(theta < lo) or np.any(theta > hi):
            raise AssertionError(f"optimizer proposed out-of-bounds point {theta}")
        t0 = time.perf_counter()
        v = float(self.objective(theta))
        if not math.isfinite(v):
            v = float(self.sentinel(np.asarray(self.foms)))
        self.wall.append(time.perf_counter() - t0)
        self.thetas.append(theta.copy())
        self.foms.append(v)
        return v

    def trace(self, **meta) -> OptimizationTrace:
        p = self.bounds.shape[0]
        th = np.array(self.thetas) if self.thetas else np.zeros((0, p))
        return OptimizationTrace(self.sense, th, np.array(self.foms), np.array(self.wall), meta)


def default_sentinel(sense: str):
    def sentinel(seen: np.ndarray) -> float:
        if seen.size == 0:
            return -1.0 if sense == MAXIMIZE else 1.0
        spread = float(np.std(seen)) if seen.size > 1 else 1.0
        spread = spread if spread > 0 else 1.0
        if sense == MAXIMIZE:
            return float(seen.min()) - 3.0 * spread
        return float(seen.max()) + 3.0 * spread

    return sentinel


def unit_to_box(u, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    return np.clip(b[:, 0] + np.asarray(u, dtype=float) * (b[:, 1] - b[:, 0]), b[:, 0], b[:, 1])


def box_to_unit(theta, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    return (np.asarray(theta, dtype=float) - b[:, 0]) / (b[:, 1] - b[:, 0])


def check_bounds(bounds) -> np.ndarray:
    b = np.atleast_2d(np.asarray(bounds, dtype=float))
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must be a (P, 2) array of [lo, hi]")
    if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("bounds must be finite with lo < hi in every dimension")
    return b
