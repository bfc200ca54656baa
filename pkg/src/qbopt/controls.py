"""Maps optimizer vectors to time-dependent controls.

Two parametrizations:

* :class:`RampSpec` -- interaction ratio Gamma(t) for the Bose-Hubbard chain.
  Ten knot values at t_i = i T / 10; the last knot sits at t = T where
  Gamma is pinned to 1, so the tenth optimizer coordinate is carried along
  but ignored.  A natural cubic spline runs through (0, 0), the nine free
  knots and (T, 1); the result is clamped to [0, 1].
* :class:`PulseSpec` -- Rabi frequency and detuning for the Rydberg array.
  Three knots each at T/4, T/2, 3T/4, joined by the interpolating
  quadratic.  Omega is multiplied by a Tukey window and clamped at 0.
  Frequencies are in Hz (cycles per second).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from qbopt.trace import fmt

N_RAMP_KNOTS = 10
GHZ = 1e9
OMEGA_BOUNDS = (0.0, 2.5 * GHZ)
DELTA_BOUNDS = (-2.5 * GHZ, 4.0 * GHZ)
PULSE_TIME = 1e-6
DEFAULT_TAPER = 0.2


def _check_time(t, total):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > total * (1 + 1e-12)) or not np.all(np.isfinite(t)):
        raise ValueError(f"time outside [0, {total}]")
    return np.minimum(t, total)


@dataclass(frozen=True)
class RampSpec:
    knot_values: tuple
    total_time: float

    def __post_init__(self):
        k = np.asarray(self.knot_values, dtype=float)
        if k.shape != (N_RAMP_KNOTS,):
            raise ValueError(f"ramp needs {N_RAMP_KNOTS} knot values")
        if np.any(k < 0) or np.any(k > 1):
            raise ValueError("ramp knots must lie in [0, 1]")
        if not self.total_time > 0:
            raise ValueError("total time must be positive")
        object.__setattr__(self, "knot_values", tuple(float(v) for v in k))
        times = np.linspace(0.0, self.total_time, N_RAMP_KNOTS + 1)
        values = np.concatenate([[0.0], k[:-1], [1.0]])
        object.__setattr__(self, "_spline", CubicSpline(times, values, bc_type="natural"))

    @classmethod
    def from_vector(cls, theta, total_time: float) -> "RampSpec":
        return cls(tuple(np.asarray(theta, dtype=float)), total_time)

    @classmethod
    def linear(cls, total_time: float) -> "RampSpec":
        return cls(tuple(np.arange(1, N_RAMP_KNOTS + 1) / N_RAMP_KNOTS), total_time)

    def to_vector(self) -> np.ndarray:
        return np.array(self.knot_values)

    @staticmethod
    def bounds() -> np.ndarray:
        return np.tile([0.0, 1.0], (N_RAMP_KNOTS, 1))

    def __call__(self, t):
        return eval_ramp(self, t)


def eval_ramp(spec: RampSpec, t):
    t = _check_time(t, spec.total_time)
    out = np.clip(spec._spline(t), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def tukey(t, total: float, taper: float = DEFAULT_TAPER):
    """Tapered-cosine window: cosine edges of width taper*T/2, flat 1 in between."""
    if not 0 < taper <= 1:
        raise ValueError("taper must lie in (0, 1]")
    x = np.asarray(t, dtype=float) / total
    edge = taper / 2.0
    w = np.ones_like(x)
    left, right = x < edge, x > 1.0 - edge
    w[left] = 0.5 * (1.0 - np.cos(np.pi * x[left] / edge))
    w[right] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - x[right]) / edge))
    w = np.clip(w, 0.0, 1.0)
    return float(w) if w.ndim == 0 else w


def quadratic_through(times, values) -> np.ndarray:
    """Coefficients (highest power first) of the quadratic through three points."""
    return np.linalg.solve(np.vander(np.asarray(times, dtype=float), 3), np.asarray(values, dtype=float))


@dataclass(frozen=True)
class PulseSpec:
    rabi_knots: tuple
    detuning_knots: tuple
    total_time: float = PULSE_TIME
    tukey_taper: float = DEFAULT_TAPER

    def __post_init__(self):
        om = np.asarray(self.rabi_knots, dtype=float)
        de = np.asarray(self.detuning_knots, dtype=float)
        if om.shape != (3,) or de.shape != (3,):
            raise ValueError("pulse needs three Rabi and three detuning knots")
        if np.any(om < OMEGA_BOUNDS[0]) or np.any(om > OMEGA_BOUNDS[1]):
            raise ValueError("Rabi knots outside [0, 2.5 GHz]")
        if np.any(de < DELTA_BOUNDS[0]) or np.any(de > DELTA_BOUNDS[1]):
            raise ValueError("detuning knots outside [-2.5 GHz, 4 GHz]")
        if not 0 < self.tukey_taper <= 1:
            raise ValueError("taper must lie in (0, 1]")
        object.__setattr__(self, "rabi_knots", tuple(float(v) for v in om))
        object.__setattr__(self, "detuning_knots", tuple(float(v) for v in de))

    @property
    def knot_times(self) -> np.ndarray:
        return self.total_time * np.array([0.25, 0.5, 0.75])

    @property
    def rabi_poly(self) -> np.ndarray:
        return quadratic_through(self.knot_times, self.rabi_knots)

    @property
    def detuning_poly(self) -> np.ndarray:
        return quadratic_through(self.knot_times, self.detuning_knots)

    @classmethod
    def from_vector(cls, theta, total_time: float = PULSE_TIME, taper: float = DEFAULT_TAPER) -> "PulseSpec":
        theta = np.asarray(theta, dtype=float)
        return cls(tuple(theta[:3]), tuple(theta[3:6]), total_time, taper)

    def to_vector(self) -> np.ndarray:
        return np.array([*self.rabi_knots, *self.detuning_knots])

    @staticmethod
    def bounds() -> np.ndarray:
        return np.array([OMEGA_BOUNDS] * 3 + [DELTA_BOUNDS] * 3)

    def __call__(self, t):
        return eval_pulse(self, t)

    def scalar_drive(self):
        """Fast ``t -> (Omega, Delta)`` for scalar t; t is clipped into [0, T]."""
        a2, a1, a0 = self.rabi_poly
        b2, b1, b0 = self.detuning_poly
        total, edge = self.total_time, self.tukey_taper / 2.0

        def drive(t):
            t = min(max(t, 0.0), total)
            x = t / total
            if x < edge:
                w = 0.5 * (1.0 - math.cos(math.pi * x / edge))
            elif x > 1.0 - edge:
                w = 0.5 * (1.0 - math.cos(math.pi * (1.0 - x) / edge))
            else:
                w = 1.0
            return max((a2 * t + a1) * t + a0, 0.0) * w, (b2 * t + b1) * t + b0

        return drive


def eval_pulse(spec: PulseSpec, t):
    """Return (Omega(t), Delta(t)) in Hz."""
    t = _check_time(t, spec.total_time)
    om = np.polyval(spec.rabi_poly, t) * tukey(t, spec.total_time, spec.tukey_taper)
    om = np.maximum(om, 0.0)
    de = np.polyval(spec.detuning_poly, t)
    if np.ndim(om) == 0:
        return float(om), float(de)
    return om, de


def write_ramp_csv(spec: RampSpec, path, samples: int = 201) -> None:
    ts = np.linspace(0.0, spec.total_time, samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gamma"])
        for t, g in zip(ts, eval_ramp(spec, ts)):
            w.writerow([fmt(t), fmt(g)])


def write_pulse_csv(spec: PulseSpec, path, samples: int = 201) -> None:
    ts = np.linspace(0.0, spec.total_time, samples)
    om, de = eval_pulse(spec, ts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "omega", "delta"])
        for row in zip(ts, om, de):
            w.writerow([fmt(v) for v in row])
