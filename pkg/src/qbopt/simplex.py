"""Bounded Nelder-Mead simplex search.

Coefficients are the classic ones (reflection 1, expansion 2, contraction
1/2, shrink 1/2).  Trial points are projected onto the box, so every
function evaluation happens inside the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RHO, CHI, PSI, SIGMA = 1.0, 2.0, 0.5, 0.5


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    converged: bool


class _Stop(Exception):
    pass


def simplex_minimize(
    f,
    x0,
    step,
    lo,
    hi,
    *,
    maxfev: int = 1000,
    xatol: float = 1e-12,
    fatol: float = np.inf,
) -> SimplexResult:
    """Minimize ``f`` from ``x0``; initial simplex edges are ``step`` per axis.

    Terminates when the simplex diameter (max vertex distance from the best
    vertex, per axis) is below ``xatol`` and the spread of function values is
    below ``fatol``, or after ``maxfev`` evaluations.  The termination test is
    applied after each iteration, so a degenerate starting simplex still goes
    through one shrink step.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    nfev = 0
    best = [None, np.inf]

    def ev(x):
        nonlocal nfev
        if nfev >= maxfev:
            raise _Stop
        nfev += 1
        v = float(f(x))
        if v != v:  # nan
            v = np.inf
        if v < best[1]:
            best[0], best[1] = x.copy(), v
        return v

    sim = np.empty((n + 1, n))
    sim[0] = x0
    for i in range(n):
        y = x0.copy()
        # step away from the nearer wall so the vertex stays distinct
        y[i] = x0[i] + step[i] if x0[i] + step[i] <= hi[i] else x0[i] - step[i]
        sim[i + 1] = np.clip(y, lo, hi)
    fs = np.empty(n + 1)
    converged = False
    try:
        for i in range(n + 1):
            fs[i] = ev(sim[i])
        while True:
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            centroid = sim[:-1].mean(axis=0)
            xr = np.clip(centroid + RHO * (centroid - sim[-1]), lo, hi)
            fr = ev(xr)
            shrink = False
            if fr < fs[0]:
                xe = np.clip(centroid + RHO * CHI * (centroid - sim[-1]), lo, hi)
                fe = ev(xe)
                if fe < fr:
                    sim[-1], fs[-1] = xe, fe
                else:
                    sim[-1], fs[-1] = xr, fr
            elif fr < fs[-2]:
                sim[-1], fs[-1] = xr, fr
            elif fr < fs[-1]:
                xc = np.clip(centroid + PSI * RHO * (centroid - sim[-1]), lo, hi)
                fc = ev(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                else:
                    shrink = True
            else:
                xcc = np.clip(centroid - PSI * (centroid - sim[-1]), lo, hi)
                fcc = ev(xcc)
                if fcc < fs[-1]:
                    sim[-1], fs[-1] = xcc, fcc
                else:
                    shrink = True
            if shrink:
                for j in range(1, n + 1):
                    sim[j] = sim[0] + SIGMA * (sim[j] - sim[0])
                    fs[j] = ev(sim[j])
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            diam = np.max(np.abs(sim[1:] - sim[0])) if n else 0.0
            if diam <= xatol and np.max(np.abs(fs[1:] - fs[0])) <= fatol:
                converged = True
                break
    except _Stop:
        pass
    return SimplexResult(best[0] if best[0] is not None else x0, best[1], nfev, converged)
