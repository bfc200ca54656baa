"""Exact diagonalization of the rescaled periodic Bose-Hubbard chain.

    H(G) = -(1 - G) sum_i (b_i b_{i+1}^+ + b_{i+1} b_i^+) + (G / 2) sum_j n_j (n_j - 1)

with site L+1 identified with site 1, hbar = 1 and time in the inverse
units of this Hamiltonian.  States live in the fixed-N Fock sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.linalg import eigsh

from qbopt.controls import RampSpec

DIM_CAP = 10**6
DENSE_LIMIT = 2000
DEFAULT_STEPS = 2000


class BasisTooLarge(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation tuples with sum N, in descending lexicographic order."""

    sites: int
    bosons: int
    states: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    def __len__(self):
        return self.states.shape[0]

    def state_index(self, occupation) -> int:
        return self.index[tuple(int(n) for n in occupation)]


def _compositions(n: int, parts: int):
    if parts == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, parts - 1):
            yield (first, *rest)


@lru_cache(maxsize=16)
def build_basis(sites: int, bosons: int, cap: int = DIM_CAP) -> FockBasis:
    if sites < 1 or bosons < 0:
        raise ValueError("need L >= 1 and N >= 0")
    dim = math.comb(bosons + sites - 1, bosons)
    if dim > cap:
        raise BasisTooLarge(f"Fock space dimension {dim} exceeds cap {cap}")
    states = np.array(list(_compositions(bosons, sites)), dtype=np.int64).reshape(dim, sites)
    index = {tuple(s): i for i, s in enumerate(states.tolist())}
    return FockBasis(sites, bosons, states, index)


@lru_cache(maxsize=16)
def _hopping(basis: FockBasis) -> sp.csr_matrix:
    """sum_i (b_i b_{i+1}^+ + h.c.) with periodic wrap, as a real symmetric matrix."""
    L = basis.sites
    rows, cols, vals = [], [], []
    bonds = [(i, (i + 1) % L) for i in range(L)]
    for s_idx, occ in enumerate(basis.states.tolist()):
        for i, j in bonds:
            for src, dst in ((i, j), (j, i)):
                if src == dst:
                    # single site: b b^+ = n + 1
                    rows.append(s_idx)
                    cols.append(s_idx)
                    vals.append(occ[src] + 1.0)
                    continue
                if occ[src] == 0:
                    continue
                amp = math.sqrt(occ[src] * (occ[dst] + 1))
                new = list(occ)
                new[src] -= 1
                new[dst] += 1
                rows.append(basis.index[tuple(new)])
                cols.append(s_idx)
                vals.append(amp)
    n = len(basis)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=16)
def _interaction(basis: FockBasis) -> np.ndarray:
    n = basis.states
    return 0.5 * (n * (n - 1)).sum(axis=1).astype(float)


@dataclass(frozen=True, eq=False)
class BhHamiltonian:
    basis: FockBasis
    gamma: float
    matrix: sp.csr_matrix = field(repr=False)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _check_gamma(gamma: float) -> float:
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"Gamma must lie in [0, 1], got {gamma}")
    return float(gamma)


def build_hamiltonian(basis: FockBasis, gamma: float) -> BhHamiltonian:
    g = _check_gamma(gamma)
    H = -(1.0 - g) * _hopping(basis) + g * sp.diags(_interaction(basis))
    return BhHamiltonian(basis, g, sp.csr_matrix(H))


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    basis: FockBasis

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (len(self.basis),):
            raise ValueError("amplitude vector does not match basis size")
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _eigh(H: BhHamiltonian, k: int | None = None):
    n = len(H.basis)
    if n <= DENSE_LIMIT or (k is not None and k >= n - 1):
        w, v = np.linalg.eigh(H.dense())
        return (w, v) if k is None else (w[:k], v[:, :k])
    w, v = eigsh(H.matrix, k=k or 6, which="SA")
    order = np.argsort(w)
    return w[order], v[:, order]


def full_spectrum(H: BhHamiltonian) -> np.ndarray:
    if len(H.basis) > DENSE_LIMIT:
        raise BasisTooLarge("full spectrum only available for dense-sized bases")
    return np.linalg.eigvalsh(H.dense())


def ground_state(H: BhHamiltonian) -> tuple[float, StateVector]:
    w, v = _eigh(H, 1)
    vec = v[:, 0].astype(complex)
    # fix the global sign so the largest component is positive
    vec *= np.sign(vec[np.argmax(np.abs(vec))].real)
    return float(w[0]), StateVector(vec, H.basis)


def lowest_gap(L: int, N: int, gamma: float) -> float:
    basis = build_basis(L, N)
    H = build_hamiltonian(basis, gamma)
    if len(basis) <= DENSE_LIMIT:
        w = np.linalg.eigvalsh(H.dense())[:2]
    else:
        w = np.sort(eigsh(H.matrix, k=2, which="SA")[0])
    return float(w[1] - w[0])


class DegenerateGap(ArithmeticError):
    pass


def _golden_min(f, a: float, b: float, tol: float) -> float:
    inv = (math.sqrt(5) - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def quantum_speed_limit(L: int, N: int, grid_size: int = 101, tol: float = 1e-6) -> tuple[float, float]:
    """Minimum ground/first-excited gap over Gamma in [0, 1], and pi / gap."""
    if grid_size < 51:
        raise ValueError("grid_size must be >= 51")
    grid = np.linspace(0.0, 1.0, grid_size)
    gaps = np.array([lowest_gap(L, N, g) for g in grid])
    i = int(np.argmin(gaps))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    g_star = _golden_min(lambda g: lowest_gap(L, N, g), a, b, tol)
    gap = min(lowest_gap(L, N, g_star), float(gaps[i]))
    if gap < 1e-12:
        raise DegenerateGap(f"ground-state gap closes near Gamma={g_star:.6f}")
    return gap, math.pi / gap


# --- states -----------------------------------------------------------------


def superfluid_state(basis: FockBasis) -> StateVector:
    """(sum_i b_i^+)^N |0>, normalized: amplitudes proportional to N!/sqrt(prod n_i!)."""
    lg = np.array([sum(math.lgamma(n + 1) for n in occ) for occ in basis.states.tolist()])
    amp = np.exp(-0.5 * (lg - lg.min()))
    return StateVector(amp / np.linalg.norm(amp), basis)


def mott_state(basis: FockBasis) -> StateVector:
    L, N = basis.sites, basis.bosons
    if N % L:
        raise ValueError("Mott state needs commensurate filling N % L == 0")
    vec = np.zeros(len(basis), dtype=complex)
    vec[basis.state_index([N // L] * L)] = 1.0
    return StateVector(vec, basis)


def fock_state(basis: FockBasis, occupation) -> StateVector:
    vec = np.zeros(len(basis), dtype=complex)
    vec[basis.state_index(occupation)] = 1.0
    return StateVector(vec, basis)


# --- dynamics ---------------------------------------------------------------


@lru_cache(maxsize=16)
def _translation_sector(basis: FockBasis):
    """Isometry onto translation-invariant states (one column per cyclic orbit)."""
    L = basis.sites
    seen = np.full(len(basis), -1)
    cols = []
    for i, occ in enumerate(basis.states.tolist()):
        if seen[i] >= 0:
            continue
        members = sorted({basis.index[tuple(occ[s:] + occ[:s])] for s in range(L)})
        seen[members] = len(cols)
        cols.append(members)
    P = np.zeros((len(basis), len(cols)))
    for c, members in enumerate(cols):
        P[members, c] = 1.0 / math.sqrt(len(members))
    hop = _hopping(basis)
    hop_r = P.T @ (hop @ P)
    int_r = P.T @ (_interaction(basis)[:, None] * P)
    return P, hop_r, int_r


def _propagate_eigh(psi, hop, inter, gammas, dt):
    """Reference propagation through one eigendecomposition per substep."""
    Hs = -(1.0 - gammas)[:, None, None] * hop[None] + gammas[:, None, None] * inter[None]
    w, v = np.linalg.eigh(Hs)
    phases = np.exp(-1j * w * dt)
    for k in range(len(gammas)):
        psi = v[k] @ (phases[k] * (v[k].T @ psi))
    return psi


@njit(cache=True)
def _propagate_taylor(re, im, hop, inter, gammas, dt):
    """exp(-i H dt) psi per substep by a Taylor series on the vector.

    Each substep is split into pieces with ||H||_1 dt <= 1/2, and the series
    runs until the next term falls below 1e-17 of the accumulated vector, so
    the result agrees with exact exponentiation to rounding.
    """
    n = re.size
    H = np.empty((n, n))
    for k in range(gammas.size):
        g = gammas[k]
        hnorm = 0.0
        for j in range(n):
            col = 0.0
            for i in range(n):
                H[i, j] = -(1.0 - g) * hop[i, j] + g * inter[i, j]
                col += abs(H[i, j])
            hnorm = max(hnorm, col)
        pieces = max(1, int(math.ceil(2.0 * hnorm * dt)))
        h = dt / pieces
        for _ in range(pieces):
            tr, ti = re.copy(), im.copy()
            for m in range(1, 80):
                # term <- (-i h / m) H term
                ar, ai = H @ tr, H @ ti
                c = h / m
                tr, ti = c * ai, -c * ar
                re += tr
                im += ti
                small = 0.0
                big = 0.0
                for i in range(n):
                    small = max(small, abs(tr[i]) + abs(ti[i]))
                    big = max(big, abs(re[i]) + abs(im[i]))
                if small <= 1e-17 * big:
                    break
    return re, im


def _propagate(psi, hop, inter, gammas, dt):
    psi = np.asarray(psi)
    re, im = _propagate_taylor(np.array(psi.real, dtype=np.float64), np.array(psi.imag, dtype=np.float64),
                               np.ascontiguousarray(hop, dtype=np.float64),
                               np.ascontiguousarray(inter, dtype=np.float64),
                               np.ascontiguousarray(gammas, dtype=np.float64), float(dt))
    return re + 1j * im


def evolve(psi0: StateVector, ramp: RampSpec, steps: int = DEFAULT_STEPS) -> StateVector:
    """Midpoint piecewise-constant propagation of i dpsi/dt = H(Gamma(t)) psi.

    Each of ``steps`` equal substeps applies exp(-i H(Gamma(t_mid)) dt) through
    a convergent Taylor series.  Translation-invariant initial states are
    propagated inside the zero-momentum sector, which the Hamiltonian never
    leaves; the result is identical to the full-space propagation.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if abs(psi0.norm - 1.0) > 1e-9:
        raise ValueError(f"initial state not normalized (norm {psi0.norm})")
    basis = psi0.basis
    dt = ramp.total_time / steps
    gammas = np.asarray(ramp((np.arange(steps) + 0.5) * dt), dtype=float)
    psi = psi0.amplitudes
    use_sector = basis.sites > 1 and len(basis) <= DENSE_LIMIT
    if use_sector:
        P, hop_r, int_r = _translation_sector(basis)
        red = P.T @ psi
        use_sector = np.linalg.norm(P @ red - psi) < 1e-12
    if use_sector:
        out = P @ _propagate(red.astype(complex), hop_r, int_r, gammas, dt)
    elif len(basis) <= DENSE_LIMIT:
        hop = _hopping(basis).toarray()
        out = _propagate(psi.copy(), hop, np.diag(_interaction(basis)), gammas, dt)
    else:
        from scipy.sparse.linalg import expm_multiply

        out = psi.copy()
        for g in gammas:
            out = expm_multiply(-1j * dt * build_hamiltonian(basis, g).matrix, out)
    drift = abs(np.linalg.norm(out) - 1.0)
    if drift > 1e-9:
        raise ArithmeticError(f"norm drift {drift:.2e} during propagation")
    return StateVector(out, basis)


def evolve_constant(psi0: StateVector, gamma: float, time: float) -> StateVector:
    w, v = np.linalg.eigh(build_hamiltonian(psi0.basis, gamma).dense())
    return StateVector(v @ (np.exp(-1j * w * time) * (v.T @ psi0.amplitudes)), psi0.basis)


# --- figures of merit -------------------------------------------------------


def fidelity_mi(psi: StateVector) -> float:
    target = mott_state(psi.basis)
    return float(abs(np.vdot(target.amplitudes, psi.amplitudes)) ** 2)


def occupation_variance(psi: StateVector) -> np.ndarray:
    """Exact per-site variance <n_i^2> - <n_i>^2 under the Born distribution."""
    p = psi.probabilities
    n = psi.basis.states.astype(float)
    m1 = p @ n
    m2 = p @ (n * n)
    return m2 - m1 * m1


def fom_exp_exact(psi: StateVector) -> float:
    return float(occupation_variance(psi).mean())


def sample_occupations(psi: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(psi.probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(shots), side="right")
    return psi.basis.states[np.minimum(idx, len(cdf) - 1)]


def fom_exp(psi: StateVector, shots: int, rng: np.random.Generator) -> float:
    """Site-averaged sample variance of the occupation numbers over ``shots`` draws."""
    if shots < 2:
        raise ValueError("need at least two shots for a sample variance")
    occ = sample_occupations(psi, shots, rng)
    return float(occ.var(axis=0, ddof=1).mean())


def instantaneous_populations(psi: StateVector, gamma: float, groups=((0, 1), (1, 6), (6, None))) -> list[float]:
    """Weights of psi on the instantaneous eigenstates of H(gamma), summed per index range."""
    w, v = np.linalg.eigh(build_hamiltonian(psi.basis, gamma).dense())
    pops = np.abs(v.T @ psi.amplitudes) ** 2
    return [float(pops[a:b].sum()) for a, b in groups]


def population_trace(psi0: StateVector, ramp: RampSpec, samples: int = 41, steps: int = DEFAULT_STEPS,
                     groups=((0, 1), (1, 6), (6, None))):
    """Grouped instantaneous populations at ``samples`` equally spaced times."""
    times = np.linspace(0.0, ramp.total_time, samples)
    out = []
    for t in times:
        if t == 0:
            psi = psi0
        else:
            sub = int(max(1, round(steps * t / ramp.total_time)))
            psi = evolve(psi0, _TruncatedRamp(ramp, t), sub)
        out.append(instantaneous_populations(psi, float(ramp(t)), groups))
    return times, np.array(out)


class _TruncatedRamp:
    """The first ``t_end`` of a ramp, usable wherever evolve expects a ramp."""

    def __init__(self, ramp: RampSpec, t_end: float):
        self.ramp = ramp
        self.total_time = t_end

    def __call__(self, t):
        return self.ramp(t)


# --- objective --------------------------------------------------------------


FIDELITY = "fidelity"
FEXP = "fexp"


class BoseHubbardTask:
    """Ramp-parameter objective for the superfluid to Mott-insulator transfer.

    ``fom="fidelity"`` returns F_MI (maximize); ``fom="fexp"`` returns the
    shot-sampled site-averaged occupation variance (minimize).
    """

    def __init__(self, L=5, N=5, total_time=None, time_factor=1.0, fom=FIDELITY, shots=1000,
                 steps=DEFAULT_STEPS, seed=0, qsl_grid=101):
        if fom not in (FIDELITY, FEXP):
            raise ValueError(f"unknown Bose-Hubbard FoM {fom!r}")
        self.basis = build_basis(L, N)
        self.fom = fom
        self.shots = shots
        self.steps = steps
        if total_time is None:
            total_time = time_factor * quantum_speed_limit(L, N, qsl_grid)[1]
        self.total_time = float(total_time)
        self.psi0 = superfluid_state(self.basis)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
        self.sense = "maximize" if fom == FIDELITY else "minimize"

    @property
    def bounds(self) -> np.ndarray:
        return RampSpec.bounds()

    def final_state(self, theta) -> StateVector:
        return evolve(self.psi0, RampSpec.from_vector(theta, self.total_time), self.steps)

    def fidelity(self, theta) -> float:
        return fidelity_mi(self.final_state(theta))

    def __call__(self, theta) -> float:
        psi = self.final_state(theta)
        if self.fom == FIDELITY:
            return fidelity_mi(psi)
        return fom_exp(psi, self.shots, self.rng)
