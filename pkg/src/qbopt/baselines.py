"""Comparison optimizers: SPSA, Nelder-Mead, differential evolution, random search.

Every method works in the unit cube, spends exactly ``budget`` objective
evaluations and returns the same :class:`OptimizationTrace` as ``run_bo``.
The x-axis of all traces is the evaluation count, so one SPSA step shows
up as two records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qbopt.simplex import simplex_minimize
from qbopt.trace import MAXIMIZE, BudgetExhausted, OptimizationTrace, Recorder, check_bounds, unit_to_box

SPSA, NELDER_MEAD, DIFF_EVOLUTION, RANDOM = "spsa", "nm", "de", "random"


@dataclass(frozen=True)
class SpsaConfig:
    """Gains a_k = a / (k + A)**alpha and c_k = c / k**gamma, in unit-cube units.

    ``a=None`` calibrates a so the first step moves ``first_step`` of the box.
    ``A=None`` uses 10% of the number of steps.
    """

    alpha: float = 0.602
    gamma: float = 0.101
    c: float = 0.1
    a: float | None = None
    A: float | None = None
    first_step: float = 0.05

    def __post_init__(self):
        if not (0 < self.alpha <= 1 and 0 < self.gamma <= 1):
            raise ValueError("alpha and gamma must lie in (0, 1]")
        if self.c <= 0 or (self.a is not None and self.a <= 0):
            raise ValueError("a and c must be positive")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    bounds: tuple
    budget: int
    seed: int = 0
    spsa: SpsaConfig = SpsaConfig()
    nm_initial_edge: float = 0.05
    de_popsize: int = 15
    de_mutation: float = 0.8
    de_crossover: float = 0.9

    def __post_init__(self):
        if self.method not in (SPSA, NELDER_MEAD, DIFF_EVOLUTION, RANDOM):
            raise ValueError(f"unknown baseline method {self.method!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        check_bounds(self.bounds)


def _setup(objective, config: BaselineConfig, sense: str):
    bounds = check_bounds(config.bounds)
    rec = Recorder(objective, bounds, sense, config.budget)
    sign = -1.0 if sense == MAXIMIZE else 1.0  # internal loss is minimized

    def loss(u):
        return sign * rec(unit_to_box(u, bounds))

    return bounds.shape[0], rec, loss, np.random.default_rng(config.seed)


def spsa(objective, config: BaselineConfig, sense: str = MAXIMIZE) -> OptimizationTrace:
    p, rec, loss, rng = _setup(objective, config, sense)
    sc = config.spsa
    steps = max(config.budget // 2, 1)
    A = 0.1 * steps if sc.A is None else sc.A
    a = sc.a
    theta = rng.random(p)
    k = 0
    try:
        while rec.remaining >= 2:
            k += 1
            ck = sc.c / k**sc.gamma
            delta = rng.choice([-1.0, 1.0], size=p)
            plus = np.clip(theta + ck * delta, 0.0, 1.0)
            minus = np.clip(theta - ck * delta, 0.0, 1.0)
            g = (loss(plus) - loss(minus)) / (2.0 * ck * delta)
            if a is None:
                gmag = float(np.mean(np.abs(g)))
                a = sc.first_step * (A + 1) ** sc.alpha / gmag if gmag > 0 else 1.0
            ak = a / (k + A) ** sc.alpha
            theta = np.clip(theta - ak * g, 0.0, 1.0)
        if rec.remaining:
            loss(theta)
    except BudgetExhausted:
        pass
    return rec.trace(optimizer=SPSA, seed=config.seed, final_theta=unit_to_box(theta, config.bounds).tolist())


def nelder_mead(objective, config: BaselineConfig, sense: str = MAXIMIZE) -> OptimizationTrace:
    """Simplex search from a random start; restarts at the incumbent on convergence."""
    p, rec, loss, rng = _setup(objective, config, sense)
    x = rng.random(p)
    lo, hi = np.zeros(p), np.ones(p)
    restarts = 0
    while rec.remaining > 0:
        res = simplex_minimize(loss, x, config.nm_initial_edge, lo, hi, maxfev=rec.remaining, xatol=1e-12)
        x = res.x
        restarts += 1
    return rec.trace(optimizer=NELDER_MEAD, seed=config.seed, restarts=restarts - 1)


def differential_evolution(objective, config: BaselineConfig, sense: str = MAXIMIZE) -> OptimizationTrace:
    """DE/rand/1/bin with uniform initialization; stops mid-generation at the budget."""
    p, rec, loss, rng = _setup(objective, config, sense)
    npop = max(config.de_popsize * p, 4)
    F, CR = config.de_mutation, config.de_crossover
    pop = rng.random((npop, p))
    fit = np.full(npop, np.inf)
    try:
        for i in range(npop):
            fit[i] = loss(pop[i])
        while True:
            for i in range(npop):
                others = [j for j in range(npop) if j != i]
                r1, r2, r3 = rng.choice(others, size=3, replace=False)
                mutant = pop[r1] + F * (pop[r2] - pop[r3])
                cross = rng.random(p) < CR
                cross[rng.integers(p)] = True
                trial = np.clip(np.where(cross, mutant, pop[i]), 0.0, 1.0)
                ft = loss(trial)
                if ft <= fit[i]:
                    pop[i], fit[i] = trial, ft
    except BudgetExhausted:
        pass
    return rec.trace(optimizer=DIFF_EVOLUTION, seed=config.seed)


def random_search(objective, config: BaselineConfig, sense: str = MAXIMIZE) -> OptimizationTrace:
    p, rec, loss, rng = _setup(objective, config, sense)
    for u in rng.random((config.budget, p)):
        loss(u)
    return rec.trace(optimizer=RANDOM, seed=config.seed)


METHODS = {SPSA: spsa, NELDER_MEAD: nelder_mead, DIFF_EVOLUTION: differential_evolution, RANDOM: random_search}


def run_baseline(objective, config: BaselineConfig, sense: str = MAXIMIZE) -> OptimizationTrace:
    return METHODS[config.method](objective, config, sense)
