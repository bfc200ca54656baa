"""Bayesian optimization: random design, GP surrogate, UCB/EI acquisition.

All surrogate work happens in the unit cube; parameters are mapped to the
user's box only when the objective is called.  Minimization is handled by
negating observations, so the surrogate always models a quantity to be
maximized while the trace keeps the user's values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from qbopt.gp import (
    Dataset,
    FitResult,
    GpModel,
    HyperBounds,
    KernelParams,
    NoiseParams,
    Prediction,
    fit_hyperparameters,
)
from qbopt.simplex import simplex_minimize
from qbopt.trace import MAXIMIZE, OptimizationTrace, Recorder, check_bounds, check_sense, unit_to_box

UCB = "UCB"
EI = "EI"

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = UCB
    ucb_k_start: float = 5.0
    ucb_k_end: float = 0.0

    def __post_init__(self):
        if self.kind not in (UCB, EI):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.kind == UCB and not (self.ucb_k_start >= self.ucb_k_end >= 0):
            raise ValueError("UCB schedule needs k_start >= k_end >= 0")


@dataclass(frozen=True)
class BoConfig:
    bounds: tuple
    n_init: int
    m_iters: int
    refit_every: int = 10
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    seed: int = 0
    n_probe: int = 1024
    n_refine: int = 8
    refine_maxfev: int = 100
    fit_restarts: int = 5

    def __post_init__(self):
        check_bounds(self.bounds)
        if self.n_init < 1:
            raise ValueError("n_init must be positive")
        if self.m_iters < 0:
            raise ValueError("m_iters must be non-negative")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")


def ucb(pred: Prediction, k: float) -> float:
    return pred.mean + k * math.sqrt(pred.variance)


def expected_improvement(pred: Prediction, y_best: float) -> float:
    return float(ei_values(np.array([pred.mean]), np.array([pred.variance]), y_best)[0])


def ucb_values(mean, var, k):
    return mean + k * np.sqrt(var)


def ei_values(mean, var, y_best, tiny=1e-24):
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    gain = mean - y_best
    out = np.maximum(gain, 0.0)
    ok = sd * sd > tiny
    if np.any(ok):
        z = gain[ok] / sd[ok]
        out[ok] = gain[ok] * ndtr(z) + sd[ok] * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.maximum(out, 0.0)


def k_schedule(iteration: int, config: BoConfig) -> float:
    """UCB weight at BO iteration ``iteration`` (1-based), linear from start to end."""
    m = config.m_iters
    if not (1 <= iteration <= m):
        raise ValueError(f"iteration {iteration} outside 1..{m}")
    acq = config.acquisition
    if m == 1:
        return float(acq.ucb_k_start)
    frac = (iteration - 1) / (m - 1)
    return float(acq.ucb_k_start + (acq.ucb_k_end - acq.ucb_k_start) * frac)


def _acq_fn(model: GpModel, acq: AcquisitionSpec, k_now: float, y_best: float):
    if acq.kind == UCB:
        return lambda m, v: ucb_values(m, v, k_now)
    return lambda m, v: ei_values(m, v, y_best)


def maximize_acquisition(
    model: GpModel,
    acq: AcquisitionSpec,
    k_now: float,
    y_best: float,
    bounds,
    rng: np.random.Generator,
    *,
    n_probe: int = 1024,
    n_refine: int = 8,
    maxfev: int = 100,
) -> np.ndarray:
    """Random probing of the box followed by simplex refinement of the best probes."""
    b = check_bounds(bounds)
    lo, hi = b[:, 0], b[:, 1]
    p = b.shape[0]
    score = _acq_fn(model, acq, k_now, y_best)
    probes = lo + rng.random((n_probe, p)) * (hi - lo)
    vals = score(*model.predict_many(probes))
    top = np.argsort(-vals, kind="stable")[:n_refine]
    best_x, best_v = probes[top[0]].copy(), float(vals[top[0]])
    if np.ptp(vals) == 0.0:
        return best_x

    point = model.point_predictor()
    if acq.kind == UCB:
        def neg(x):
            m, v = point(x)
            return -(m + k_now * math.sqrt(v))
    else:
        def neg(x):
            m, v = point(x)
            return -float(ei_values(np.array([m]), np.array([v]), y_best)[0])

    step = 0.05 * (hi - lo)
    for i in top:
        res = simplex_minimize(neg, probes[i], step, lo, hi, maxfev=maxfev, xatol=1e-6, fatol=1e-12)
        if -res.fun > best_v:
            best_x, best_v = res.x, -res.fun
    return np.clip(best_x, lo, hi)


def _bo_sentinel(sense, kernel_ref):
    def sentinel(seen):
        s0 = math.sqrt(kernel_ref[0].variance) if kernel_ref[0] is not None else 1.0
        if seen.size == 0:
            return -3.0 * s0 if sense == MAXIMIZE else 3.0 * s0
        if sense == MAXIMIZE:
            return float(seen.min()) - 3.0 * s0
        return float(seen.max()) + 3.0 * s0

    return sentinel


def run_bo(objective, config: BoConfig, sense: str = MAXIMIZE, *, callback=None) -> OptimizationTrace:
    """Run ``n_init`` random evaluations followed by ``m_iters`` BO steps.

    Hyperparameters are refitted before BO iterations 1, 1 + refit_every, ...
    and kept fixed (with incremental Cholesky updates) in between.
    """
    check_sense(sense)
    bounds = check_bounds(config.bounds)
    p = bounds.shape[0]
    unit = np.tile([0.0, 1.0], (p, 1))
    sign = 1.0 if sense == MAXIMIZE else -1.0
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    rng_design, rng_acq, rng_fit = (np.random.default_rng(s) for s in seeds)

    kernel_ref = [None]
    rec = Recorder(objective, bounds, sense, config.n_init + config.m_iters, _bo_sentinel(sense, kernel_ref))

    design = rng_design.random((config.n_init, p))
    for u in design:
        rec(unit_to_box(u, bounds))

    us = [u for u in design]
    ys = [sign * v for v in rec.foms]
    refits: list[int] = []
    lmls: list[float] = []
    model = None
    if config.m_iters:
        y0 = np.array(ys)
        vy = float(np.var(y0)) if np.var(y0) > 0 else 1.0
        kernel, noise = KernelParams(vy, 0.3), NoiseParams(1e-2 * vy)
        kernel_ref[0] = kernel

    for it in range(1, config.m_iters + 1):
        if (it - 1) % config.refit_every == 0:
            data = Dataset(np.array(us), np.array(ys))
            if len(data) >= 2:
                fit: FitResult = fit_hyperparameters(
                    data, (kernel, noise), HyperBounds(), restarts=config.fit_restarts, rng=rng_fit
                )
                kernel, noise = fit.kernel, fit.noise
                lmls.append(fit.log_marginal_likelihood)
            kernel_ref[0] = kernel
            model = GpModel(kernel, noise, data, center=True)
            refits.append(it)
        u = maximize_acquisition(
            model,
            config.acquisition,
            k_schedule(it, config),
            max(ys),
            unit,
            rng_acq,
            n_probe=config.n_probe,
            n_refine=config.n_refine,
            maxfev=config.refine_maxfev,
        )
        v = rec(unit_to_box(u, bounds))
        us.append(u)
        ys.append(sign * v)
        model = model.add_observation(u, sign * v)
        if callback is not None:
            callback(it, model)

    meta = {"optimizer": "bo", "refits": refits, "seed": config.seed}
    if kernel_ref[0] is not None:
        meta["kernel"] = {"variance": kernel.variance, "lengthscale": kernel.lengthscale}
        meta["noise_variance"] = noise.noise_variance
    return rec.trace(**meta)


# --- 1-D demonstration problem ---------------------------------------------

TOY_BOUNDS = ((0.0, 4.0),)


def toy_objective(theta) -> float:
    """Smooth two-peak function on [0, 4]; global maximum near 2.4662, secondary peak near 0.731."""
    x = float(np.asarray(theta, dtype=float).reshape(-1)[0])
    return math.exp(-0.5 * (x - 2.6) ** 2) * math.sin(3.0 * x + 0.5) + 0.25 * math.exp(-((x - 0.8) ** 2) / 0.1)
