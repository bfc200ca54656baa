import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbopt.gp import (
    DEFAULT_JITTER_FACTOR,
    Dataset,
    GPNumericError,
    GpModel,
    HyperBounds,
    KernelParams,
    NoiseParams,
    cross_covariance,
    fit_hyperparameters,
    gram,
    matern52,
)

# frozen high-precision values
K_AT_ONE = 0.858385362733365417  # (7/3) e^-1
HALF_LOG_2PI = 0.918938533204672742


def dense_predict(X, y, q, s2, ell, sn2, jitter, center=False):
    """Direct dense solve of the noisy GP posterior, element by element."""
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            r = np.linalg.norm(X[i] - X[j]) / ell
            K[i, j] = s2 * (1 + r + r * r / 3) * math.exp(-r)
    A = K + (sn2 + jitter) * np.eye(n)
    k = np.array([s2 * (1 + r + r * r / 3) * math.exp(-r) for r in np.linalg.norm(X - q, axis=1) / ell])
    off = y.mean() if center else 0.0
    mean = k @ np.linalg.solve(A, y - off) + off
    var = s2 - k @ np.linalg.solve(A, k)
    return mean, var


def dense_lml(X, y, s2, ell, sn2, jitter):
    n = len(X)
    K = gram(X, KernelParams(s2, ell), sn2 + jitter)
    _, logdet = np.linalg.slogdet(K)
    return -0.5 * y @ np.linalg.inv(K) @ y - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)


# --- matern52 ---------------------------------------------------------------


def test_matern_at_zero_is_variance():
    assert matern52(0.0, KernelParams(2.5, 0.7)) == 2.5


def test_matern_at_one():
    assert matern52(1.0, KernelParams(1.0, 1.0)) == pytest.approx(K_AT_ONE, abs=1e-15)


def test_matern_far_tail():
    assert matern52(1e6 * 0.3, KernelParams(5.0, 0.3)) < 1e-300


@pytest.mark.parametrize("bad", [-1e-9, math.inf, math.nan])
def test_matern_domain(bad):
    with pytest.raises(ValueError):
        matern52(bad, KernelParams(1.0, 1.0))


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e2), st.lists(st.floats(0, 50), min_size=2, max_size=20))
def test_matern_monotone(s2, ell, xs):
    xs = np.sort(xs)
    k = matern52(xs, KernelParams(s2, ell))
    assert np.all(np.diff(k) <= 1e-15 * s2)
    assert np.all(k <= s2 * (1 + 1e-15)) and np.all(k >= 0)


@pytest.mark.parametrize("kw", [dict(variance=0, lengthscale=1), dict(variance=1, lengthscale=-1),
                                dict(variance=math.nan, lengthscale=1)])
def test_kernel_params_validated(kw):
    with pytest.raises(ValueError):
        KernelParams(**kw)


def test_noise_params_validated():
    with pytest.raises(ValueError):
        NoiseParams(-1e-3)


# --- gram -------------------------------------------------------------------


def test_gram_single_point():
    K = gram([[0.2, 0.4]], KernelParams(1.7, 0.5), 1e-3)
    assert K.shape == (1, 1) and K[0, 0] == pytest.approx(1.7 + 1e-3, abs=1e-15)


def test_gram_identical_points():
    K = gram([[0.3, 0.3], [0.3, 0.3]], KernelParams(2.0, 0.5), 0.01)
    assert np.allclose(K, [[2.01, 2.0], [2.0, 2.01]], atol=1e-15)


def test_gram_matches_double_loop():
    rng = np.random.default_rng(11)
    X = rng.random((5, 3))
    kern = KernelParams(1.3, 0.4)
    K = gram(X, kern)
    for i in range(5):
        for j in range(5):
            r = math.sqrt(sum((X[i, d] - X[j, d]) ** 2 for d in range(3))) / 0.4
            assert K[i, j] == pytest.approx(1.3 * (1 + r + r * r / 3) * math.exp(-r), abs=1e-14)


def test_gram_rejects_bad_shapes():
    with pytest.raises(ValueError):
        gram(np.zeros((0, 2)), KernelParams(1, 1))
    with pytest.raises(ValueError):
        cross_covariance(np.zeros((2, 2)), np.zeros((1, 3)), KernelParams(1, 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 10), st.floats(1e-2, 10), st.integers(0, 2**32 - 1))
def test_gram_psd(n, p, ell, seed):
    X = np.random.default_rng(seed).random((n, p))
    K = gram(X, KernelParams(1.0, ell), DEFAULT_JITTER_FACTOR)
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-12


# --- prediction -------------------------------------------------------------


def test_empty_model_returns_prior():
    m = GpModel.empty(3, KernelParams(2.2, 0.5))
    p = m.predict([0.1, 0.2, 0.3])
    assert (p.mean, p.variance) == (0.0, 2.2)


def test_noiseless_interpolation():
    rng = np.random.default_rng(3)
    X, y = rng.random((12, 4)), rng.normal(size=12)
    m = GpModel(KernelParams(1.0, 0.5), NoiseParams(0.0), Dataset(X, y))
    mean, var = m.predict_many(X)
    assert np.allclose(mean, y, atol=1e-6)
    assert np.all(var <= 10 * m.jitter)


def test_three_point_noisy_oracle():
    rng = np.random.default_rng(5)
    X, y = rng.random((3, 2)), rng.normal(size=3)
    m = GpModel(KernelParams(0.8, 0.3), NoiseParams(0.01), Dataset(X, y))
    q = rng.random(2)
    mean, var = dense_predict(X, y, q, 0.8, 0.3, 0.01, m.jitter)
    p = m.predict(q)
    assert p.mean == pytest.approx(mean, abs=1e-10)
    assert p.variance == pytest.approx(var, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 10), st.booleans(), st.integers(0, 2**32 - 1))
def test_predict_matches_dense(n, p, center, seed):
    rng = np.random.default_rng(seed)
    X, y = rng.random((n, p)), rng.normal(size=n)
    s2, ell, sn2 = rng.uniform(0.1, 3), rng.uniform(0.1, 2), rng.uniform(1e-4, 0.1)
    m = GpModel(KernelParams(s2, ell), NoiseParams(sn2), Dataset(X, y), center=center)
    for q in rng.random((3, p)):
        mean, var = dense_predict(X, y, q, s2, ell, sn2, m.jitter, center)
        pr = m.predict(q)
        assert pr.mean == pytest.approx(mean, abs=1e-10)
        assert pr.variance == pytest.approx(max(var, 0), abs=1e-10)
        assert 0 <= pr.variance <= s2 + 1e-12


def test_prior_recovery_far_away():
    rng = np.random.default_rng(8)
    X, y = rng.random((10, 2)), rng.normal(size=10)
    m = GpModel(KernelParams(1.5, 0.1), NoiseParams(1e-3), Dataset(X, y))
    p = m.predict([1.0 + 20 * 0.1 * 1.5, 0.5])
    assert abs(p.mean) < 1e-6 and abs(p.variance - 1.5) < 1e-6


def test_incremental_equals_rebuild():
    rng = np.random.default_rng(9)
    X, y = rng.random((15, 3)), rng.normal(size=15)
    k, nz = KernelParams(1.0, 0.4), NoiseParams(1e-4)
    inc = GpModel(k, nz, Dataset(X[:10], y[:10]), center=True)
    for i in range(10, 15):
        inc = inc.add_observation(X[i], y[i])
    full = GpModel(k, nz, Dataset(X, y), center=True, jitter=inc.jitter)
    q = rng.random((20, 3))
    mi, vi = inc.predict_many(q)
    mf, vf = full.predict_many(q)
    assert np.allclose(mi, mf, atol=1e-12, rtol=0) and np.allclose(vi, vf, atol=1e-12, rtol=0)


def test_point_predictor_matches_predict_many():
    rng = np.random.default_rng(10)
    m = GpModel(KernelParams(1.2, 0.3), NoiseParams(1e-3), Dataset(rng.random((25, 5)), rng.normal(size=25)), True)
    f = m.point_predictor()
    for q in rng.random((10, 5)):
        mean, var = m.predict_many(q[None])
        a, b = f(q)
        assert a == pytest.approx(mean[0], abs=1e-12) and b == pytest.approx(var[0], abs=1e-12)


def test_query_dimension_checked():
    m = GpModel(KernelParams(1, 1), NoiseParams(), Dataset([[0.0, 0.0]], [1.0]))
    with pytest.raises(ValueError):
        m.predict([0.0, 0.0, 0.0])


def test_dataset_length_mismatch():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))


def test_jitter_escalation_failure_raises(monkeypatch):
    import qbopt.gp as gpmod

    # an indefinite matrix cannot be rescued by jitter up to 1e-2 * variance
    monkeypatch.setattr(gpmod, "gram", lambda *a, **k: -np.eye(4))
    with pytest.raises(GPNumericError, match="not positive definite"):
        GpModel(KernelParams(1.0, 1.0), NoiseParams(0.0), Dataset(np.zeros((4, 1)), np.zeros(4)))


# --- log marginal likelihood -----------------------------------------------


def test_lml_single_zero_observation():
    m = GpModel(KernelParams(1.0, 1.0), NoiseParams(0.0), Dataset([[0.5]], [0.0]), jitter=1e-10)
    assert m.log_marginal_likelihood() == pytest.approx(-HALF_LOG_2PI, abs=1e-9)


def test_lml_decreases_when_outputs_scaled():
    rng = np.random.default_rng(1)
    X, y = rng.random((8, 2)), rng.normal(size=8)
    k, n = KernelParams(1.0, 0.3), NoiseParams(1e-3)
    a = GpModel(k, n, Dataset(X, y)).log_marginal_likelihood()
    b = GpModel(k, n, Dataset(X, 10 * y)).log_marginal_likelihood()
    assert b < a


@pytest.mark.parametrize("seed", range(5))
def test_lml_matches_dense(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.random((4, 3)), rng.normal(size=4)
    m = GpModel(KernelParams(0.9, 0.6), NoiseParams(0.02), Dataset(X, y))
    assert m.log_marginal_likelihood() == pytest.approx(dense_lml(X, y, 0.9, 0.6, 0.02, m.jitter), abs=1e-9)


def test_json_dump_roundtrip(tmp_path):
    m = GpModel(KernelParams(1.0, 0.5), NoiseParams(1e-3), Dataset([[0.1], [0.7]], [0.2, -0.4]))
    path = tmp_path / "model.json"
    m.dump_json(path)
    import json

    doc = json.loads(path.read_text())
    assert doc["kernel"] == {"variance": 1.0, "lengthscale": 0.5}
    assert doc["log_marginal_likelihood"] == pytest.approx(m.log_marginal_likelihood())


# --- fitting ----------------------------------------------------------------


def _gp_draw(n, ell, noise, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 1))
    K = gram(X, KernelParams(1.0, ell), 1e-10)
    f = np.linalg.cholesky(K) @ rng.normal(size=n)
    return X, f + noise * rng.normal(size=n)


def test_fit_recovers_noise_level():
    X, y = _gp_draw(50, 0.2, 0.05, 4)
    res = fit_hyperparameters(Dataset(X, y), (KernelParams(1.0, 0.5), NoiseParams(0.1)))
    sn = math.sqrt(res.noise.noise_variance)
    assert 0.05 / 3 <= sn <= 0.05 * 3


def test_fit_within_bounds_and_not_worse():
    rng = np.random.default_rng(2)
    X, y = rng.random((20, 3)), rng.normal(size=20)
    data = Dataset(X, y)
    init = (KernelParams(float(np.var(y)), 0.3), NoiseParams(1e-2))
    res = fit_hyperparameters(data, init)
    vy = float(np.var(y))
    b = HyperBounds()
    assert b.lengthscale[0] <= res.kernel.lengthscale <= b.lengthscale[1]
    assert b.variance[0] * vy * (1 - 1e-9) <= res.kernel.variance <= b.variance[1] * vy * (1 + 1e-9)
    assert b.noise[0] * vy * (1 - 1e-9) <= res.noise.noise_variance <= b.noise[1] * vy * (1 + 1e-9)
    init_lml = GpModel(*init, data, center=True).log_marginal_likelihood()
    assert res.log_marginal_likelihood >= init_lml


def test_fit_constant_outputs_drives_noise_down():
    X = np.random.default_rng(0).random((10, 2))
    y = np.full(10, 3.0) + 1e-9 * np.arange(10)
    res = fit_hyperparameters(Dataset(X, y), (KernelParams(1.0, 0.3), NoiseParams(0.5)))
    vy = float(np.var(y))
    assert res.noise.noise_variance <= 1e-3 * vy


def test_fit_idempotent_at_optimum():
    X, y = _gp_draw(30, 0.3, 0.05, 7)
    data = Dataset(X, y)
    first = fit_hyperparameters(data, (KernelParams(1.0, 0.5), NoiseParams(0.1)))
    again = fit_hyperparameters(data, (first.kernel, first.noise), restarts=1)
    assert again.log_marginal_likelihood == pytest.approx(first.log_marginal_likelihood, abs=1e-3)


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparameters(Dataset([[0.0]], [1.0]), (KernelParams(1, 1), NoiseParams()))


def test_fit_all_restarts_fail_returns_init(monkeypatch):
    import qbopt.gp as gpmod

    def boom(*a, **k):
        raise np.linalg.LinAlgError

    monkeypatch.setattr(gpmod, "cholesky", boom)
    init = (KernelParams(1.0, 0.5), NoiseParams(1e-2))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit_hyperparameters(Dataset([[0.0], [1.0]], [0.0, 1.0]), init)
    assert not res.ok and res.kernel == init[0] and res.noise == init[1]
    assert any("failed" in str(w.message) for w in caught)
