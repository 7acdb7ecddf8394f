import math

import numpy as np
import pytest
from scipy import integrate
from sklearn.base import clone

from cmerates.cme import (ConditionalMeanEmbedding, GaussianConditionalOracle, conditional_expectation, embed_weights,
                          fit, lambda_schedule, oracle_embedding_sqnorm, oracle_embedding_value, rkhs_error,
                          theoretical_rate)
from cmerates.diagonal_model import DiagonalModel
from cmerates.kernels import KernelSpec


def _oracle_model(n, seed, lam=1e-3, oracle=None):
    oracle = oracle or GaussianConditionalOracle()
    x, y = oracle.sample(n, np.random.default_rng(seed))
    m = ConditionalMeanEmbedding(KernelSpec("gaussian", 0.1), lam, oracle.output_kernel).fit(x, y)
    return m, oracle


def test_single_point_weight():
    spec = KernelSpec("gaussian", 0.5)
    m = fit([0.2], [1.0], spec, 0.3)
    for x in (0.2, 0.9):
        k = spec([[0.2]], [[x]])[0, 0]
        assert m.embed_weights([[x]])[0, 0] == pytest.approx(k / (1.0 + 0.3), rel=1e-14)


def test_duplicate_points_are_fine():
    m = fit([0.5, 0.5, 0.5], [0.0, 1.0, 2.0], KernelSpec(), 1e-6)
    w = m.embed_weights([[0.5]])[0]
    assert np.allclose(w, w[0])


def test_argument_errors():
    with pytest.raises(ValueError):
        fit([0.1], [0.1], KernelSpec(), 0.0)
    with pytest.raises(ValueError):
        fit([0.1, 0.2], [0.1], KernelSpec(), 1e-3)
    m = fit([0.1, 0.2], [0.1, 0.3], KernelSpec(), 1e-3)
    with pytest.raises(ValueError):
        m.conditional_expectation(np.ones(3), [[0.1]])


def test_factorization_residual():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=200)
    m = fit(x, x, KernelSpec("gaussian", 0.1), 1e-4)
    L = np.tril(m.factor_[0])
    A = m.gram_ + 200 * 1e-4 * np.eye(200)
    assert np.linalg.norm(A - L @ L.T) <= 1e-8 * np.linalg.norm(A)


def test_weights_vanish_for_large_lambda():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=30)
    spec = KernelSpec("gaussian", 0.2)
    m = fit(x, x, spec, 1e8)
    w = m.embed_weights([[0.4]])[0]
    np.testing.assert_allclose(w, spec(x.reshape(-1, 1), [[0.4]])[:, 0] / (30 * 1e8), rtol=1e-6)


def test_near_orthogonal_features_give_coordinate_weights():
    x = np.linspace(0, 1, 10)
    m = fit(x, x, KernelSpec("gaussian", 0.01), 1e-6)
    w = m.embed_weights(x[3:4].reshape(1, 1))[0]
    assert np.abs(w - np.eye(10)[3]).max() <= 0.05
    g = np.arange(10.0) ** 2
    assert m.conditional_expectation(g, x[3:4].reshape(1, 1))[0] == pytest.approx(9.0, abs=0.05 * g.sum())


@pytest.mark.parametrize("seed", range(20))
def test_gram_matches_feature_operator(seed):
    rng = np.random.default_rng(seed)
    dm = DiagonalModel(n_features=16)
    n = int(rng.integers(1, 51))
    lam = float(10 ** rng.uniform(-4, -1))
    x, y, xq = rng.uniform(size=n), rng.uniform(size=n), rng.uniform(size=3)
    model = ConditionalMeanEmbedding(kernel=dm.kernel_matrix, lam=lam).fit(x, y)
    Phi, Psi, phq = dm.features(x), dm.features(y), dm.features(xq)
    # explicit operators in the feature basis
    C_xx = Phi.T @ Phi / n
    C_yx = Psi.T @ Phi / n
    ops = C_yx @ np.linalg.solve(C_xx + lam * np.eye(16), phq.T)
    gram_path = Psi.T @ model.embed_weights(xq).T
    assert np.abs(ops - gram_path).max() <= 1e-8


def test_reproducing_property():
    m, _ = _oracle_model(40, 2)
    xq = np.array([[0.3]])
    w = m.embed_weights(xq)[0]
    g = m.output_gram_[:, 0]
    assert m.conditional_expectation(g, xq)[0] == pytest.approx((m.output_gram_ @ w)[0], rel=1e-12)
    assert conditional_expectation(m, lambda Y: Y[:, 0], xq)[0] == pytest.approx(w @ m.Y_[:, 0])
    assert m.predict(xq)[0] == pytest.approx(w @ m.Y_[:, 0])
    np.testing.assert_array_equal(embed_weights(m, xq), m.transform(xq))


def test_oracle_value_quadrature():
    o = GaussianConditionalOracle(mean_fn=lambda x: np.zeros_like(x), noise_sd=1.0, output_bandwidth=1.0)
    v = oracle_embedding_value(o, 0.0, 1.0)
    assert v == pytest.approx(math.exp(-0.25) / math.sqrt(2), rel=1e-14)
    assert v == pytest.approx(0.5507, abs=1e-4)
    q, _ = integrate.quad(lambda t: math.exp(-(t - 1.0) ** 2 / 2) * math.exp(-t * t / 2) / math.sqrt(2 * math.pi),
                          -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    assert v == pytest.approx(q, abs=1e-10)
    assert oracle_embedding_value(o, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2))


def test_oracle_value_point_mass_limit():
    o = GaussianConditionalOracle(noise_sd=1e-9, output_bandwidth=0.5)
    assert oracle_embedding_value(o, 0.1, 0.7) == pytest.approx(
        math.exp(-(0.7 - math.sin(0.2 * math.pi)) ** 2 / 0.5), rel=1e-9)


def test_oracle_sqnorm_double_quadrature():
    o = GaussianConditionalOracle(noise_sd=1.0, output_bandwidth=1.0)
    assert oracle_embedding_sqnorm(o) == pytest.approx(1 / math.sqrt(3), rel=1e-14)
    phi = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)
    q, _ = integrate.dblquad(lambda a, b: math.exp(-(a - b) ** 2 / 2) * phi(a) * phi(b), -12, 12, -12, 12,
                             epsabs=1e-13, epsrel=1e-12)
    assert oracle_embedding_sqnorm(o) == pytest.approx(q, abs=1e-9)
    assert oracle_embedding_sqnorm(GaussianConditionalOracle(noise_sd=1e-9)) == pytest.approx(1.0)
    vals = [oracle_embedding_sqnorm(GaussianConditionalOracle(noise_sd=s)) for s in (0.1, 0.2, 0.5, 1.0)]
    assert np.all(np.diff(vals) < 0)


def test_oracle_domain():
    with pytest.raises(ValueError):
        GaussianConditionalOracle(noise_sd=0.0)
    with pytest.raises(ValueError):
        GaussianConditionalOracle(output_bandwidth=-1.0)


def test_rkhs_error_matches_dense_quadratic_form():
    m, o = _oracle_model(60, 3)
    xq = np.linspace(0.05, 0.95, 7)
    err = rkhs_error(m, o, xq)
    s2, l2 = o.noise_sd**2, o.output_bandwidth**2
    y = m.Y_[:, 0]
    for e, x in zip(err, xq):
        w = m.embed_weights([[x]])[0]
        L = np.exp(-(y[:, None] - y[None, :]) ** 2 / (2 * l2))
        mu = math.sqrt(l2 / (l2 + s2)) * np.exp(-(y - math.sin(2 * math.pi * x)) ** 2 / (2 * (l2 + s2)))
        sq = w @ L @ w - 2 * w @ mu + math.sqrt(l2 / (l2 + 2 * s2))
        assert e**2 == pytest.approx(sq, abs=1e-12)
    assert np.all(err >= 0)


def test_rkhs_error_exact_representation_limit():
    o = GaussianConditionalOracle(noise_sd=1e-7, output_bandwidth=0.5)
    x0 = 0.3
    m = ConditionalMeanEmbedding(KernelSpec(), 1e-12, o.output_kernel).fit([x0], [math.sin(2 * math.pi * x0)])
    assert rkhs_error(m, o, x0) < 1e-5


def test_rkhs_error_nonnegative_random_models():
    rng = np.random.default_rng(4)
    for _ in range(10):
        o = GaussianConditionalOracle(noise_sd=float(rng.uniform(0.05, 1)), output_bandwidth=float(rng.uniform(0.1, 2)))
        m, _ = _oracle_model(int(rng.integers(1, 30)), int(rng.integers(1000)), float(10 ** rng.uniform(-6, 0)), o)
        assert np.all(rkhs_error(m, o, rng.uniform(size=5)) >= 0)


def test_rkhs_error_kernel_mismatch():
    o = GaussianConditionalOracle()
    x, y = o.sample(10, np.random.default_rng(5))
    for lk in (None, KernelSpec("gaussian", 0.3), KernelSpec("laplacian", 0.5), KernelSpec("gaussian", 0.5, scale=2.0)):
        m = ConditionalMeanEmbedding(KernelSpec(), 1e-3, lk).fit(x, y)
        with pytest.raises(ValueError):
            rkhs_error(m, o, 0.5)


def test_conditional_expectation_error_bound():
    # g = l(y0, .) has |g| = 1 and E[g(Y)|x] = mu_{Y|x}(y0)
    for seed in range(5):
        m, o = _oracle_model(200, 10 + seed, lam=1e-4)
        y0 = 0.4
        g = np.exp(-(m.Y_[:, 0] - y0) ** 2 / (2 * o.output_bandwidth**2))
        xq = np.linspace(0, 1, 9)
        est = m.conditional_expectation(g, xq.reshape(-1, 1))
        truth = oracle_embedding_value(o, xq, y0)
        assert np.all(np.abs(est - truth) <= rkhs_error(m, o, xq) + 1e-12)


def test_estimator_api():
    m = ConditionalMeanEmbedding(KernelSpec("gaussian", 0.2), 1e-2)
    c = clone(m)
    assert c.get_params() == {"kernel": KernelSpec("gaussian", 0.2), "lam": 1e-2, "output_kernel": None}
    c.set_params(lam=0.5)
    assert c.lam == 0.5
    c.fit(np.zeros((3, 2)), np.ones(3))
    assert c.n_features_in_ == 2 and c.n_samples_ == 3
    with pytest.raises(ValueError):
        c.embed_weights(np.zeros((1, 3)))


def test_lambda_schedule():
    assert lambda_schedule(math.exp(2), 1.0, 0.5, 0.5, r=2) == pytest.approx(4 / math.e**2, rel=1e-14)
    assert lambda_schedule(math.exp(2), 1.0, 0.5, 0.5, r=2) == pytest.approx(0.54134, abs=1e-5)
    n = 1000
    assert lambda_schedule(n, 0.6, 1.0, 0.5) == pytest.approx((math.log(n) ** 1.1 / n) ** (1 / 1.5), rel=1e-14)
    ns = np.arange(10, 5000, 7)
    sched = [lambda_schedule(k, 0.6, 1.0, 0.5, r=2) for k in ns]
    assert np.all(np.diff(sched) < 0)
    for kw in (dict(n=2), dict(n=10, r=1.0), dict(n=10, c0=0.0)):
        args = dict(alpha=0.6, beta=1.0, p=0.5) | kw
        with pytest.raises(ValueError):
            lambda_schedule(**args)


def test_theoretical_rate():
    assert theoretical_rate(0.6, 1.0, 0.5, 0.0) == pytest.approx(1 / 3)
    assert theoretical_rate(0.6, 1.0, 0.5, 0.6) == pytest.approx(0.4 / 3)
    assert theoretical_rate(0.6, 1.0, 0.5, 1.0 - 1e-9) < 1e-8
    with pytest.raises(ValueError):
        theoretical_rate(0.6, 1.0, 0.5, 1.0)
