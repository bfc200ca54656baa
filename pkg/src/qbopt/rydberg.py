"""Laser-driven Rydberg arrays in the two-level (ground/Rydberg) approximation.

    H = -Delta sum_i n_i + (Omega / 2) sum_i sigma^x_i + sum_{i<j} V_ij n_i n_j

Omega, Delta and V are in Hz; the propagator is exp(-2 pi i H dt).  Basis
index s has bit i set when atom i is excited, so s = sum_i bit_i 2**i.

Integration uses a fourth-order commutator-free Magnus step whose two
exponentials are applied by Chebyshev expansion, with step-doubling error
control.  When the initial state is invariant under the lattice's
symmetry group, propagation runs in the symmetric subspace, which the
Hamiltonian leaves invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit

from qbopt.controls import DELTA_BOUNDS, OMEGA_BOUNDS, PulseSpec

C6_DEFAULT = 1.56e-26  # Hz m^6
SPACING = 1.5e-6
MAX_ATOMS = 14
DEFAULT_TOL = 1e-8
TWO_PI = 2.0 * math.pi


class TooManyAtoms(MemoryError):
    pass


class StepSizeCollapse(ArithmeticError):
    pass


# --- geometry ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice:
    positions: np.ndarray
    spacing: float = SPACING
    geometry: str = "custom"

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("positions must be 3-vectors")
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        if np.any(d[np.triu_indices(len(pos), 1)] <= 0):
            raise ValueError("atoms must sit at distinct positions")
        object.__setattr__(self, "positions", pos)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    def subset(self, occupied) -> "Lattice":
        occ = np.asarray(occupied, dtype=int)
        return Lattice(self.positions[occ].reshape(-1, 3), self.spacing, self.geometry + "-partial")


def chain(n=9, spacing=SPACING) -> Lattice:
    return Lattice(np.c_[np.arange(n) * spacing, np.zeros(n), np.zeros(n)], spacing, f"chain-{n}")


def square(rows=3, cols=3, spacing=SPACING) -> Lattice:
    pts = [(i * spacing, j * spacing, 0.0) for i in range(rows) for j in range(cols)]
    return Lattice(np.array(pts), spacing, f"square-{rows}x{cols}")


def cube(nx=2, ny=2, nz=2, spacing=SPACING) -> Lattice:
    pts = [(i * spacing, j * spacing, k * spacing) for i in range(nx) for j in range(ny) for k in range(nz)]
    return Lattice(np.array(pts), spacing, f"cube-{nx}x{ny}x{nz}")


PRESETS = {"chain-9": chain, "square-3x3": square, "cube-2x2x2": cube}
TARGET_EXCITATIONS = {"chain-9": 5, "square-3x3": 5, "cube-2x2x2": 4}


def lattice_preset(name: str, spacing: float = SPACING) -> Lattice:
    if name not in PRESETS:
        raise ValueError(f"unknown lattice {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](spacing=spacing)


@dataclass(frozen=True)
class RydbergParams:
    c6: float = C6_DEFAULT
    detection_prob: float = 1.0
    fill_prob: float = 1.0

    def __post_init__(self):
        if not self.c6 > 0:
            raise ValueError("C6 must be positive (repulsive interactions)")
        for name in ("detection_prob", "fill_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def interaction(r_i, r_j, c6: float = C6_DEFAULT) -> float:
    d = float(np.linalg.norm(np.asarray(r_i, dtype=float) - np.asarray(r_j, dtype=float)))
    if d == 0:
        raise ValueError("coincident positions")
    return c6 / d**6


def pair_interactions(lattice: Lattice, c6: float = C6_DEFAULT) -> np.ndarray:
    pos = lattice.positions
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    V = np.zeros_like(d)
    off = ~np.eye(len(pos), dtype=bool)
    V[off] = c6 / d[off] ** 6
    return V


# --- basis ------------------------------------------------------------------


def _check_atoms(n: int):
    if n > MAX_ATOMS:
        raise TooManyAtoms(f"{n} atoms exceed the 2^{MAX_ATOMS} state-vector cap")


@lru_cache(maxsize=32)
def basis_bits(n: int) -> np.ndarray:
    """(2^n, n) array of occupation bits; row s is the binary expansion of s."""
    _check_atoms(n)
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.int8)


@lru_cache(maxsize=32)
def excitation_counts(n: int) -> np.ndarray:
    return basis_bits(n).sum(axis=1).astype(np.int64)


def interaction_diagonal(lattice: Lattice, c6: float = C6_DEFAULT) -> np.ndarray:
    """sum_{i<j} V_ij b_i b_j for every basis state."""
    b = basis_bits(lattice.n_sites).astype(float)
    V = pair_interactions(lattice, c6)
    return 0.5 * np.einsum("si,ij,sj->s", b, V, b)


@lru_cache(maxsize=32)
def _flip_operator(n: int) -> sp.csr_matrix:
    """(1/2) sum_i sigma^x_i."""
    dim = 2**n
    s = np.arange(dim)
    rows = np.tile(s, n)
    cols = np.concatenate([s ^ (1 << i) for i in range(n)])
    return sp.csr_matrix((np.full(rows.size, 0.5), (rows, cols)), shape=(dim, dim))


def _resolve(lattice: Lattice, occupied) -> Lattice:
    return lattice if occupied is None else lattice.subset(sorted(occupied))


def build_hamiltonian(lattice: Lattice, omega: float, delta: float, params: RydbergParams = RydbergParams(),
                      occupied=None) -> sp.csr_matrix:
    if omega < 0:
        raise ValueError("Rabi frequency must be non-negative")
    lat = _resolve(lattice, occupied)
    n = lat.n_sites
    _check_atoms(n)
    diag = -delta * excitation_counts(n) + interaction_diagonal(lat, params.c6)
    return sp.csr_matrix(omega * _flip_operator(n) + sp.diags(diag))


def zero_field_spectrum(lattice: Lattice, delta_grid, params: RydbergParams = RydbergParams()):
    """Energies at Omega = 0 in basis order, shape (len(delta_grid), 2^N), and n_e per state."""
    dg = np.asarray(delta_grid, dtype=float)
    ne = excitation_counts(lattice.n_sites)
    eps = interaction_diagonal(lattice, params.c6)
    return eps[None, :] - dg[:, None] * ne[None, :], ne


def configuration_energies(lattice: Lattice, n_e: int, c6: float = C6_DEFAULT):
    """Interaction energies of all configurations with n_e excitations, ascending.

    Returns a list of (energy, excited-site tuple) pairs.
    """
    ne = excitation_counts(lattice.n_sites)
    eps = interaction_diagonal(lattice, c6)
    bits = basis_bits(lattice.n_sites)
    idx = np.flatnonzero(ne == n_e)
    out = [(float(eps[s]), tuple(int(i) for i in np.flatnonzero(bits[s]))) for s in idx]
    return sorted(out)


def minimal_configurations(lattice: Lattice, n_e: int, c6: float = C6_DEFAULT, rtol: float = 1e-9):
    confs = configuration_energies(lattice, n_e, c6)
    e0 = confs[0][0]
    return [c for e, c in confs if e <= e0 + rtol * max(abs(e0), 1.0)]


# --- states -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpinState:
    amplitudes: np.ndarray
    n_atoms: int

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (2**self.n_atoms,):
            raise ValueError("amplitude vector must have length 2^N")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def ground(cls, n: int) -> "SpinState":
        _check_atoms(n)
        a = np.zeros(2**n, dtype=complex)
        a[0] = 1.0
        return cls(a, n)

    @classmethod
    def basis_state(cls, n: int, excited) -> "SpinState":
        _check_atoms(n)
        a = np.zeros(2**n, dtype=complex)
        a[sum(1 << int(i) for i in excited)] = 1.0
        return cls(a, n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


# --- symmetry reduction -----------------------------------------------------


def lattice_automorphisms(lattice: Lattice, rtol: float = 1e-9) -> list[tuple]:
    """Site permutations preserving all pairwise distances (backtracking search)."""
    pos = lattice.positions
    n = len(pos)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    scale = d.max() if n > 1 else 1.0
    key = np.round(d / scale / rtol).astype(np.int64) if n > 1 else d.astype(np.int64)
    perms = []
    img = [-1] * n
    used = [False] * n

    def extend(i):
        if i == n:
            perms.append(tuple(img))
            return
        for c in range(n):
            if used[c] or key[i, i] != key[c, c]:
                continue
            if all(key[i, j] == key[c, img[j]] for j in range(i)):
                img[i], used[c] = c, True
                extend(i + 1)
                used[c] = False
        img[i] = -1

    extend(0)
    return perms


@lru_cache(maxsize=64)
def _sector_cached(positions_key: bytes, n: int):
    lattice = Lattice(np.frombuffer(positions_key).reshape(n, 3))
    perms = lattice_automorphisms(lattice)
    bits = basis_bits(n).astype(np.int64)
    images = np.stack([bits @ (1 << np.asarray(p, dtype=np.int64)) for p in perms])  # (G, dim)
    rep = images.min(axis=0)
    reps, label = np.unique(rep, return_inverse=True)
    counts = np.bincount(label)
    dim = 2**n
    P = sp.csr_matrix((1.0 / np.sqrt(counts[label]), (np.arange(dim), label)), shape=(dim, len(reps)))
    return P, reps


def symmetric_sector(lattice: Lattice):
    """Isometry P (2^N x m) onto the symmetric subspace, and one representative state per column."""
    return _sector_cached(np.ascontiguousarray(lattice.positions).tobytes(), lattice.n_sites)


# --- integrator kernels -----------------------------------------------------


@njit(cache=True)
def _bessel_series(z, out, cutoff):
    """J_k(z) for k < len(out) by Miller's backward recurrence.

    Returns the number of leading terms whose magnitude exceeds ``cutoff``
    (at least two).
    """
    n = out.size
    for k in range(n):
        out[k] = 0.0
    if z < 1e-14:
        out[0] = 1.0
        return 2
    m = max(n, int(z)) + 32
    m += m % 2
    jp1 = 0.0
    j = 1e-280
    norm = 0.0
    for k in range(m, 0, -1):
        jm1 = 2.0 * k / z * j - jp1
        jp1 = j
        j = jm1
        km1 = k - 1
        if km1 < n:
            out[km1] = j
        if km1 % 2 == 0 and km1 > 0:
            norm += 2.0 * j
        if abs(j) > 1e250:
            j *= 1e-250
            jp1 *= 1e-250
            norm *= 1e-250
            for q in range(km1, n):
                out[q] *= 1e-250
    norm += j
    last = 1
    for k in range(n):
        out[k] /= norm
        if abs(out[k]) > cutoff:
            last = k + 1
    return max(last, 2)


@njit(cache=True)
def _chebyshev_expm(indptr, indices, data, vdiag, ne, xnorm, omega, delta, vweight, tau, psi, cutoff):
    """exp(-2 pi i tau (omega X + diag(vweight V - delta n))) psi by Chebyshev expansion.

    The spectrum is bracketed by Gershgorin bounds; returns the new vector
    and the number of operator applications.
    """
    n = psi.size
    d = vweight * vdiag - delta * ne
    r = abs(omega) * xnorm
    lo = d.min() - r
    hi = d.max() + r
    half = max(0.5 * (hi - lo), 1e-300)
    mid = 0.5 * (hi + lo)
    z = 2.0 * np.pi * tau * half
    coefs = np.empty(int(z + 12.0 * max(z, 1.0) ** (1.0 / 3.0)) + 40)
    terms = _bessel_series(z, coefs, cutoff)
    sd = omega * data / half
    dd = (d - mid) / half
    t0 = psi.copy()
    t1 = np.empty(n, np.complex128)
    t2 = np.empty(n, np.complex128)
    for row in range(n):
        acc = dd[row] * t0[row]
        for p in range(indptr[row], indptr[row + 1]):
            acc += sd[p] * t0[indices[p]]
        t1[row] = acc
    out = coefs[0] * t0 - 2j * coefs[1] * t1
    ph = -1j
    for k in range(2, terms):
        ph = ph * (-1j)
        c = 2.0 * coefs[k] * ph
        for row in range(n):
            acc = dd[row] * t1[row]
            for p in range(indptr[row], indptr[row + 1]):
                acc += sd[p] * t1[indices[p]]
            v = 2.0 * acc - t0[row]
            t2[row] = v
            out[row] += c * v
        t0, t1, t2 = t1, t2, t0
    phase = np.exp(-1j * 2.0 * np.pi * tau * mid)
    for row in range(n):
        out[row] *= phase
    return out, terms


_S3 = math.sqrt(3.0) / 6.0
_C1, _C2 = 0.5 - _S3, 0.5 + _S3
_A1, _A2 = 0.25 + _S3, 0.25 - _S3


@njit(cache=True)
def _cf4(indptr, indices, data, vdiag, ne, xnorm, psi, o1, d1, o2, d2, h, cutoff):
    """Fourth-order commutator-free Magnus step; fields sampled at the Gauss nodes.

    exp(h (a2 A1 + a1 A2)) exp(h (a1 A1 + a2 A2)): each exponential carries
    half of the time-independent interaction term.
    """
    a1, a2 = 0.25 + np.sqrt(3.0) / 6.0, 0.25 - np.sqrt(3.0) / 6.0
    psi, m1 = _chebyshev_expm(indptr, indices, data, vdiag, ne, xnorm,
                              a1 * o1 + a2 * o2, a1 * d1 + a2 * d2, 0.5, h, psi, cutoff)
    psi, m2 = _chebyshev_expm(indptr, indices, data, vdiag, ne, xnorm,
                              a2 * o1 + a1 * o2, a2 * d1 + a1 * d2, 0.5, h, psi, cutoff)
    return psi, m1 + m2


@njit(cache=True)
def _doubling_attempt(indptr, indices, data, vdiag, ne, xnorm, psi, f, h, cutoff):
    """One step of size h and two of size h/2; returns (fine result, error estimate, matvecs).

    ``f`` holds (Omega, Delta) at the six nodes: full step (2), first half (2), second half (2).
    """
    full, m0 = _cf4(indptr, indices, data, vdiag, ne, xnorm, psi, f[0], f[1], f[2], f[3], h, cutoff)
    mid, m1 = _cf4(indptr, indices, data, vdiag, ne, xnorm, psi, f[4], f[5], f[6], f[7], 0.5 * h, cutoff)
    fine, m2 = _cf4(indptr, indices, data, vdiag, ne, xnorm, mid, f[8], f[9], f[10], f[11], 0.5 * h, cutoff)
    err = 0.0
    for r in range(psi.size):
        e = fine[r] - full[r]
        err += e.real * e.real + e.imag * e.imag
    return fine, np.sqrt(err) / 15.0, m0 + m1 + m2


class _Propagator:
    """Operator data for omega X + diag(w V - delta n) in a fixed (sub)space."""

    def __init__(self, X: sp.csr_matrix, vdiag, ne, x_norm):
        X = sp.csr_matrix(X)
        X.sort_indices()
        self.args = (
            X.indptr.astype(np.int64),
            X.indices.astype(np.int64),
            X.data.astype(np.float64),
            np.asarray(vdiag, dtype=float),
            np.asarray(ne, dtype=float),
            float(x_norm),
        )
        self.matvecs = 0

    def expm(self, psi, omega, delta, tau, v_weight=1.0, cutoff=1e-17):
        out, terms = _chebyshev_expm(*self.args, float(omega), float(delta), float(v_weight), float(tau),
                                     np.ascontiguousarray(psi, dtype=np.complex128), cutoff)
        self.matvecs += terms
        return out

    def cf4(self, psi, drive, t, h, cutoff=1e-17):
        o1, d1 = drive(t + _C1 * h)
        o2, d2 = drive(t + _C2 * h)
        out, m = _cf4(*self.args, np.ascontiguousarray(psi, dtype=np.complex128), o1, d1, o2, d2, h, cutoff)
        self.matvecs += m
        return out

    def attempt(self, psi, drive, t, h, cutoff):
        nodes = (t + _C1 * h, t + _C2 * h, t + 0.5 * _C1 * h, t + 0.5 * _C2 * h,
                 t + 0.5 * h + 0.5 * _C1 * h, t + 0.5 * h + 0.5 * _C2 * h)
        f = np.array([v for tn in nodes for v in drive(tn)], dtype=np.float64)
        fine, err, m = _doubling_attempt(*self.args, psi, f, h, cutoff)
        self.matvecs += m
        return fine, err


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    matvecs: int = 0
    sector_dim: int = 0


def _integrate(prop, drive, psi, total, tol, checkpoints=(), max_step=None, stats=None):
    """Adaptive CF4 with step doubling; returns the final state and states at checkpoints.

    A step is accepted when the Richardson estimate |fine - coarse| / 15 of
    its local error is at most ``tol``; the finer (two half-steps) result is
    kept, so every accepted step is exactly unitary up to series truncation.
    """
    max_step = max_step or total / 500.0
    cutoff = 1e-15
    dt = total / 4000.0
    t = 0.0
    marks = sorted(float(c) for c in checkpoints if 0.0 < c < total)
    saved = []
    mi = 0
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    while t < total * (1 - 1e-14):
        target = marks[mi] if mi < len(marks) else total
        h = min(dt, max_step, target - t)
        fine, err = prop.attempt(psi, drive, t, h, cutoff)
        if err <= tol:
            psi, t = fine, t + h
            if stats is not None:
                stats.accepted += 1
            if mi < len(marks) and t >= target * (1 - 1e-14):
                saved.append(psi.copy())
                mi += 1
        elif stats is not None:
            stats.rejected += 1
        factor = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (tol / err) ** 0.2))
        # a step shortened only to hit a checkpoint does not shrink the next one
        dt = h * factor if (err > tol or h >= dt * 0.999) else max(dt, h * factor)
        if dt < total * 1e-12:
            raise StepSizeCollapse(f"step size collapsed at t = {t:.6e} s")
    while len(saved) < len(marks):
        saved.append(psi.copy())
    if stats is not None:
        stats.matvecs = prop.matvecs
    return psi, saved


def _drive_fn(pulse):
    if hasattr(pulse, "scalar_drive"):
        return pulse.scalar_drive()

    def drive(t):
        om, de = pulse(min(max(t, 0.0), pulse.total_time))
        return float(om), float(de)

    return drive


@dataclass(frozen=True)
class ConstantDrive:
    """Time-independent (Omega, Delta) without a window, for convention checks."""

    omega: float
    delta: float
    total_time: float

    def __call__(self, t):
        return self.omega, self.delta


def _setup(psi0: SpinState, lattice: Lattice, params: RydbergParams, use_symmetry: bool):
    n = lattice.n_sites
    if psi0.n_atoms != n:
        raise ValueError("state and lattice sizes differ")
    if abs(psi0.norm - 1.0) > 1e-9:
        raise ValueError(f"initial state not normalized (norm {psi0.norm})")
    X = _flip_operator(n)
    vdiag = interaction_diagonal(lattice, params.c6)
    ne = excitation_counts(n)
    if use_symmetry and n > 1:
        P, reps = symmetric_sector(lattice)
        red = P.T @ psi0.amplitudes
        if np.linalg.norm(P @ red - psi0.amplitudes) < 1e-12 and P.shape[1] < P.shape[0]:
            Xr = sp.csr_matrix(P.T @ X @ P)
            Xr.eliminate_zeros()
            return _Propagator(Xr, vdiag[reps], ne[reps], n / 2.0), red.astype(complex), P
    return _Propagator(X, vdiag, ne, n / 2.0), psi0.amplitudes.copy(), None


def evolve(psi0: SpinState, pulse, lattice: Lattice, params: RydbergParams = RydbergParams(),
           tolerance: float = DEFAULT_TOL, *, checkpoints=(), use_symmetry=True, stats=None):
    """Integrate i dpsi/dt = 2 pi H(Omega(t), Delta(t)) psi over [0, pulse.total_time].

    ``tolerance`` bounds the estimated local error per accepted step.  With
    ``checkpoints`` the return value is (final state, [states at those times]).
    """
    prop, psi, P = _setup(psi0, lattice, params, use_symmetry)
    if stats is not None:
        stats.sector_dim = psi.size
    fin, saved = _integrate(prop, _drive_fn(pulse), psi, pulse.total_time, tolerance, checkpoints, stats=stats)

    def finish(v):
        v = P @ v if P is not None else v
        drift = abs(np.linalg.norm(v) - 1.0)
        if drift > 1e-6:
            raise ArithmeticError(f"norm drift {drift:.2e} exceeds 1e-6")
        return SpinState(v / np.linalg.norm(v), lattice.n_sites)

    out = finish(fin)
    if len(checkpoints):
        return out, [finish(v) for v in saved]
    return out


# --- figures of merit -------------------------------------------------------


def manifold_fidelities(psi: SpinState) -> np.ndarray:
    """F_0 .. F_N: population in each fixed-excitation-number manifold."""
    return np.bincount(excitation_counts(psi.n_atoms), weights=psi.probabilities, minlength=psi.n_atoms + 1)


def fidelity_manifold(psi: SpinState, n_e: int) -> float:
    if not 0 <= n_e <= psi.n_atoms:
        return 0.0
    return float(manifold_fidelities(psi)[n_e])


def site_excitation_probabilities(psi: SpinState) -> np.ndarray:
    return psi.probabilities @ basis_bits(psi.n_atoms)


def sample_configurations(psi: SpinState, shots: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(psi.probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.minimum(idx, cdf.size - 1)


def detected_excitations_fom(psi: SpinState, detection_prob: float = 1.0, shots: int | None = None,
                             rng: np.random.Generator | None = None) -> float:
    """Expected number of detected excitations; exact when ``shots`` is None."""
    if shots is None:
        return float(detection_prob * site_excitation_probabilities(psi).sum())
    rng = rng if rng is not None else np.random.default_rng()
    states = sample_configurations(psi, shots, rng)
    counts = excitation_counts(psi.n_atoms)[states]
    return float(rng.binomial(counts, detection_prob).mean())


def detected_manifold_fidelity(psi: SpinState, n_e: int, detection_prob: float = 1.0) -> float:
    """Probability that exactly n_e excitations are detected.

    Each excited atom is registered independently with ``detection_prob``;
    with perfect detection this is F_{n_e}.
    """
    from scipy.stats import binom

    F = manifold_fidelities(psi)
    k = np.arange(F.size)
    return float(F @ binom.pmf(n_e, k, detection_prob))


# --- noise models -----------------------------------------------------------


def perturb_pulse(pulse: PulseSpec, relative_sigma: float, rng: np.random.Generator) -> PulseSpec:
    """Multiply every knot by (1 + eps), eps ~ N(0, sigma^2), then clamp to the bounds."""
    if relative_sigma < 0:
        raise ValueError("relative_sigma must be >= 0")
    if relative_sigma == 0:
        return pulse
    eps = rng.normal(0.0, relative_sigma, 6)
    om = np.clip(np.asarray(pulse.rabi_knots) * (1 + eps[:3]), *OMEGA_BOUNDS)
    de = np.clip(np.asarray(pulse.detuning_knots) * (1 + eps[3:]), *DELTA_BOUNDS)
    return PulseSpec(tuple(om), tuple(de), pulse.total_time, pulse.tukey_taper)


def sample_imperfect_lattice(lattice: Lattice, fill_prob: float, rng: np.random.Generator) -> tuple:
    """Indices of occupied sites; each is filled independently with ``fill_prob``."""
    if not 0 <= fill_prob <= 1:
        raise ValueError("fill_prob must lie in [0, 1]")
    return tuple(int(i) for i in np.flatnonzero(rng.random(lattice.n_sites) < fill_prob))


# --- objective --------------------------------------------------------------


MANIFOLD = "manifold"
DETECTED = "detected-count"


class RydbergTask:
    """Pulse-parameter objective (maximize).

    ``fom="manifold"`` returns F_{n_e}(T) on the full lattice.  ``fom="detected-count"``
    returns the probability that n_e excitations are detected, on a lattice
    with random vacancies and with optional pulse noise; each call uses one
    fresh realization from the task's own stream.  Sites missing from a
    realization are removed from the simulation; they hold no excitation.
    """

    def __init__(self, geometry="chain-9", fom=MANIFOLD, target=None, params=RydbergParams(),
                 pulse_noise=0.0, tolerance=DEFAULT_TOL, seed=0, total_time=1e-6, taper=0.2):
        if fom not in (MANIFOLD, DETECTED):
            raise ValueError(f"unknown Rydberg FoM {fom!r}")
        self.lattice = lattice_preset(geometry)
        self.fom = fom
        self.target = TARGET_EXCITATIONS[geometry] if target is None else int(target)
        self.params = params
        self.pulse_noise = float(pulse_noise)
        self.tolerance = tolerance
        self.total_time = total_time
        self.taper = taper
        self.sense = "maximize"
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))

    @property
    def bounds(self) -> np.ndarray:
        return PulseSpec.bounds()

    def pulse(self, theta) -> PulseSpec:
        return PulseSpec.from_vector(theta, self.total_time, self.taper)

    def final_state(self, theta, occupied=None, pulse=None) -> SpinState:
        lat = _resolve(self.lattice, occupied)
        pulse = pulse if pulse is not None else self.pulse(theta)
        return evolve(SpinState.ground(lat.n_sites), pulse, lat, self.params, self.tolerance)

    def realization_fom(self, theta, rng: np.random.Generator, cache: dict | None = None) -> float:
        """FoM of one noisy realization (vacancies, pulse noise, imperfect detection).

        With ``cache`` and no pulse noise, realizations whose vacancy patterns
        are related by a lattice symmetry share one simulation.
        """
        occ = sample_imperfect_lattice(self.lattice, self.params.fill_prob, rng)
        pulse = perturb_pulse(self.pulse(theta), self.pulse_noise, rng)
        if not occ:
            return 1.0 if self.target == 0 else 0.0
        key = None
        if cache is not None and self.pulse_noise == 0:
            key = min(tuple(sorted(p[i] for i in occ)) for p in self._symmetries)
            if key in cache:
                return cache[key]
        psi = self.final_state(theta, occ, pulse)
        value = detected_manifold_fidelity(psi, self.target, self.params.detection_prob)
        if key is not None:
            cache[key] = value
        return value

    @property
    def _symmetries(self):
        if not hasattr(self, "_perms"):
            self._perms = lattice_automorphisms(self.lattice)
        return self._perms

    def averaged_fom(self, theta, realizations: int = 50, seed: int = 0) -> float:
        """Mean FoM over independent realizations drawn from streams derived from ``seed``."""
        streams = np.random.SeedSequence([int(seed), 3]).spawn(realizations)
        cache: dict = {}
        return float(np.mean([self.realization_fom(theta, np.random.default_rng(s), cache) for s in streams]))

    def __call__(self, theta) -> float:
        if self.fom == MANIFOLD:
            return fidelity_manifold(self.final_state(theta), self.target)
        return self.realization_fom(theta, self.rng)
