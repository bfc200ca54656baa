"""Gaussian-process regression with an isotropic Matérn 5/2 covariance.

The covariance used here is

    k(x) = s2 * (1 + x/l + x**2 / (3 l**2)) * exp(-x/l)

i.e. the textbook Matérn 5/2 form with the sqrt(5) factors folded into the
lengthscale.  It is a valid covariance (Matérn 5/2 with lengthscale
``sqrt(5) * l``), so fitted lengthscales are smaller by that factor than
the ones reported by most GP libraries.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, get_blas_funcs, solve_triangular
from numba import njit
from scipy.spatial.distance import cdist

from qbopt.simplex import simplex_minimize

MAX_JITTER_FACTOR = 1e-2
DEFAULT_JITTER_FACTOR = 1e-8


class GPNumericError(ArithmeticError):
    """Covariance matrix could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    variance: float
    lengthscale: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"kernel variance must be positive, got {self.variance}")
        if not (self.lengthscale > 0 and math.isfinite(self.lengthscale)):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")


@dataclass(frozen=True)
class NoiseParams:
    noise_variance: float = 0.0

    def __post_init__(self):
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise ValueError(f"noise variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if x.size == 0:
            x = x.reshape(0, x.shape[-1] if x.ndim == 2 else 0)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} outputs")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def matern52(distance, params: KernelParams):
    """Covariance as a function of Euclidean distance; accepts scalars or arrays."""
    x = np.asarray(distance, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("distance must be finite and non-negative")
    r = x / params.lengthscale
    out = params.variance * (1.0 + r + r * r / 3.0) * np.exp(-r)
    return float(out) if out.ndim == 0 else out


def gram(points, kernel: KernelParams, jitter: float = 0.0) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, P) array")
    K = matern52(cdist(pts, pts), kernel)
    K[np.diag_indices_from(K)] += jitter
    return K


def cross_covariance(a, b, kernel: KernelParams) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return matern52(cdist(a, b), kernel)


@dataclass(frozen=True, eq=False)
class GpModel:
    """Factorized GP posterior.

    Instances are immutable; :meth:`add_observation` and :meth:`with_params`
    return new models.  With ``center=True`` the outputs are shifted to zero
    mean before conditioning and the shift is added back to predictions.
    """

    kernel: KernelParams
    noise: NoiseParams
    data: Dataset
    center: bool = False
    jitter: float = field(default=-1.0)
    chol: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    offset: float = 0.0

    def __post_init__(self):
        if self.jitter < 0:
            object.__setattr__(self, "jitter", DEFAULT_JITTER_FACTOR * self.kernel.variance)
        if self.chol is None and len(self.data):
            self._factorize()
        elif len(self.data) and self.weights is None:
            self._solve_weights()

    @classmethod
    def empty(cls, dim: int, kernel: KernelParams, noise: NoiseParams | None = None, center=False):
        data = Dataset(np.zeros((0, dim)), np.zeros(0))
        return cls(kernel, noise or NoiseParams(), data, center=center)

    def __len__(self):
        return len(self.data)

    def _factorize(self):
        jitter = self.jitter
        K = gram(self.data.inputs, self.kernel, self.noise.noise_variance)
        limit = MAX_JITTER_FACTOR * self.kernel.variance
        while True:
            try:
                L = cholesky(K + jitter * np.eye(len(K)), lower=True, check_finite=False)
                break
            except LinAlgError:
                jitter *= 10.0
                if jitter > limit * (1 + 1e-12):
                    raise GPNumericError(
                        f"covariance not positive definite with jitter {jitter / 10:.3g} "
                        f"(D={len(K)}, variance={self.kernel.variance:.3g}, "
                        f"lengthscale={self.kernel.lengthscale:.3g})"
                    ) from None
        object.__setattr__(self, "jitter", jitter)
        object.__setattr__(self, "chol", L)
        self._solve_weights()

    def _solve_weights(self):
        y = self.data.outputs
        offset = float(y.mean()) if self.center else 0.0
        alpha = cho_solve((self.chol, True), y - offset, check_finite=False)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "weights", alpha)

    def add_observation(self, x, y: float) -> "GpModel":
        """Condition on one more point using a rank-one Cholesky extension."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        data = Dataset(np.vstack([self.data.inputs, x]), np.append(self.data.outputs, y))
        if not len(self.data):
            return GpModel(self.kernel, self.noise, data, self.center, self.jitter)
        k = cross_covariance(self.data.inputs, x, self.kernel)[:, 0]
        row = solve_triangular(self.chol, k, lower=True, check_finite=False)
        d2 = self.kernel.variance + self.noise.noise_variance + self.jitter - row @ row
        if d2 <= 0:
            return GpModel(self.kernel, self.noise, data, self.center, self.jitter)
        n = len(self.data)
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.chol
        L[n, :n] = row
        L[n, n] = math.sqrt(d2)
        return GpModel(self.kernel, self.noise, data, self.center, self.jitter, chol=L)

    def with_params(self, kernel: KernelParams, noise: NoiseParams) -> "GpModel":
        return GpModel(kernel, noise, self.data, self.center)

    def predict_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if not len(self.data):
            return np.zeros(len(q)), np.full(len(q), self.kernel.variance)
        if q.shape[1] != self.data.dim:
            raise ValueError(f"query dimension {q.shape[1]} != model dimension {self.data.dim}")
        if self.chol.shape[0] != len(self.data):
            raise AssertionError("stale factorization")
        ks = cross_covariance(self.data.inputs, q, self.kernel)
        mean = ks.T @ self.weights + self.offset
        v = solve_triangular(self.chol, ks, lower=True, check_finite=False)
        var = self.kernel.variance - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def point_predictor(self):
        """Return ``f(x) -> (mean, variance)`` for one query, skipping validation.

        Same arithmetic as :meth:`predict_many`, with per-call overhead low
        enough for inner loops such as acquisition refinement.
        """
        if not len(self.data):
            s0 = self.kernel.variance
            return lambda x: (0.0, s0)
        X, w, off = self.data.inputs, self.weights, self.offset
        L = np.asfortranarray(self.chol)
        var0, ell = self.kernel.variance, self.kernel.lengthscale
        trsv = get_blas_funcs("trsv", (L,))

        def f(x):
            r = np.sqrt(((X - x) ** 2).sum(axis=1)) / ell
            k = var0 * (1.0 + r + r * r / 3.0) * np.exp(-r)
            v = trsv(L, k, lower=1)
            return float(k @ w) + off, max(var0 - float(v @ v), 0.0)

        return f

    def predict(self, query) -> Prediction:
        mean, var = self.predict_many(np.asarray(query, dtype=float).reshape(1, -1))
        return Prediction(float(mean[0]), float(var[0]))

    def log_marginal_likelihood(self) -> float:
        n = len(self.data)
        if n == 0:
            return 0.0
        r = self.data.outputs - self.offset
        return float(
            -0.5 * r @ self.weights
            - np.log(np.diag(self.chol)).sum()
            - 0.5 * n * math.log(2 * math.pi)
        )

    def to_dict(self) -> dict:
        return {
            "kernel": {"variance": self.kernel.variance, "lengthscale": self.kernel.lengthscale},
            "noise_variance": self.noise.noise_variance,
            "jitter": self.jitter,
            "center": self.center,
            "inputs": self.data.inputs.tolist(),
            "outputs": self.data.outputs.tolist(),
            "log_marginal_likelihood": self.log_marginal_likelihood(),
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@njit(cache=True)
def _gram_from_distances(dist, variance, lengthscale, diag):
    """Lower triangle of the Matern Gram matrix plus ``diag`` on the diagonal."""
    n = dist.shape[0]
    K = np.zeros((n, n))
    inv = 1.0 / lengthscale
    for i in range(n):
        for j in range(i):
            r = dist[i, j] * inv
            K[i, j] = variance * (1.0 + r + r * r / 3.0) * np.exp(-r)
        K[i, i] = variance + diag
    return K


@dataclass(frozen=True)
class HyperBounds:
    """Box constraints; variance bounds are multiples of var(y)."""

    lengthscale: tuple[float, float] = (1e-3, 10.0)
    variance: tuple[float, float] = (1e-4, 1e4)
    noise: tuple[float, float] = (1e-8, 1.0)


@dataclass(frozen=True)
class FitResult:
    kernel: KernelParams
    noise: NoiseParams
    log_marginal_likelihood: float
    ok: bool = True


def _log_box(data: Dataset, bounds: HyperBounds) -> np.ndarray:
    vy = float(np.var(data.outputs))
    if not vy > 0:
        vy = 1.0
    return np.log(
        np.array(
            [
                [bounds.variance[0] * vy, bounds.variance[1] * vy],
                [bounds.lengthscale[0], bounds.lengthscale[1]],
                [bounds.noise[0] * vy, bounds.noise[1] * vy],
            ]
        )
    )


def fit_hyperparameters(
    data: Dataset,
    init: tuple[KernelParams, NoiseParams],
    bounds: HyperBounds = HyperBounds(),
    *,
    restarts: int = 5,
    center: bool = True,
    rng: np.random.Generator | None = None,
    maxfev: int = 150,
) -> FitResult:
    """Maximize the log marginal likelihood over log-parameters.

    The first local search starts at ``init`` (clipped into the box); the
    remaining ones start at log-uniform random points.  The returned value
    is never worse than ``init`` itself.
    """
    if len(data) < 2:
        raise ValueError("need at least two observations to fit hyperparameters")
    rng = rng if rng is not None else np.random.default_rng(0)
    box = _log_box(data, bounds)
    lo, hi = box[:, 0], box[:, 1]
    dist = cdist(data.inputs, data.inputs)
    n = len(data)
    y = data.outputs - (data.outputs.mean() if center else 0.0)
    half_log2pi = 0.5 * n * math.log(2 * math.pi)

    def nlml(z):
        s2, ell, sn2 = np.exp(z)
        K = _gram_from_distances(dist, s2, ell, sn2 + DEFAULT_JITTER_FACTOR * s2)
        try:
            L = cholesky(K, lower=True, check_finite=False)
        except LinAlgError:
            return math.inf
        a = cho_solve((L, True), y, check_finite=False)
        return 0.5 * y @ a + np.log(np.diag(L)).sum() + half_log2pi

    def lml_of(kernel, noise):
        try:
            return GpModel(kernel, noise, data, center).log_marginal_likelihood()
        except GPNumericError:
            return -math.inf

    init_lml = lml_of(*init)
    z0 = np.clip(np.log([init[0].variance, init[0].lengthscale, max(init[1].noise_variance, 1e-300)]), lo, hi)
    starts = [z0] + [lo + rng.random(3) * (hi - lo) for _ in range(restarts - 1)]

    best_z, best_f = None, math.inf
    for z in starts:
        res = simplex_minimize(nlml, z, 0.1 * (hi - lo), lo, hi, maxfev=maxfev, xatol=1e-3, fatol=1e-4)
        if res.fun < best_f:
            best_z, best_f = res.x, res.fun

    if best_z is None or not math.isfinite(best_f):
        warnings.warn("hyperparameter fit failed on every restart; keeping initial values")
        return FitResult(init[0], init[1], init_lml, ok=False)

    s2, ell, sn2 = np.exp(best_z)
    kernel, noise = KernelParams(float(s2), float(ell)), NoiseParams(float(sn2))
    lml = lml_of(kernel, noise)
    if lml < init_lml:
        return FitResult(init[0], init[1], init_lml)
    return FitResult(kernel, noise, lml)
