import math

import numpy as np
import pytest

from cmerates import diagonal_model as dm
from cmerates.concentration import (MomentEnvelope, _bernstein, bernstein_bound_rank1, bernstein_bound_selfadjoint,
                                    convexity_check, ensemble_envelope, mc_coverage, moment_check,
                                    selfadjoint_validity_threshold, variance_bound_rhs)


def _unit_env(w=True):
    return MomentEnvelope(1.0, np.array([[1.0]]), np.array([[1.0]]) if w else None)


def test_envelope_validation_and_sigma():
    with pytest.raises(ValueError):
        MomentEnvelope(0.0, np.eye(2))
    with pytest.raises(ValueError):
        MomentEnvelope(1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        MomentEnvelope(1.0, np.array([[1.0, 0.5], [0.0, 1.0]]))
    env = MomentEnvelope.diagonal(2.0, [3.0, 1.0], [0.5, 4.0])
    assert env.sigma2 == 4.0 and env.trace == pytest.approx(8.5)
    assert np.trace(env.V) >= np.linalg.norm(env.V, 2)


def test_selfadjoint_unit_example():
    # log term 1 would need delta = 4/e, outside (0, 1); evaluate the formula directly
    assert _bernstein(1, 1.0, 1.0, 1.0, 4, 2) == pytest.approx(4 + 2 * math.sqrt(2), rel=1e-14)
    assert _bernstein(1, 1.0, 1.0, 1.0, 4, 2) == pytest.approx(6.8284, abs=1e-4)
    b = math.log(8.0)
    assert bernstein_bound_selfadjoint(1, _unit_env(False), 0.5) == pytest.approx(4 * b + 2 * math.sqrt(2 * b))


def test_selfadjoint_domain():
    for d in (0.0, 1.0, 4 / math.e, -0.1):
        with pytest.raises(ValueError):
            bernstein_bound_selfadjoint(10, _unit_env(False), d)
    with pytest.raises(ValueError):
        bernstein_bound_selfadjoint(0, _unit_env(False), 0.1)


def test_selfadjoint_monotone_and_halving():
    env = MomentEnvelope.diagonal(2.0, [1.0, 0.5, 0.25])
    vals = [bernstein_bound_selfadjoint(N, env, 0.05) for N in (1, 2, 10, 100, 1000)]
    assert np.all(np.diff(vals) < 0)
    N, R, s = 100, 2.0, 1.0
    b1, b2 = math.log(4 * 1.75 / 0.05), math.log(4 * 1.75 / 0.025)
    assert b2 - b1 == pytest.approx(math.log(2))
    lo, hi = bernstein_bound_selfadjoint(N, env, 0.05), bernstein_bound_selfadjoint(N, env, 0.025)
    assert lo == pytest.approx(4 * R * b1 / N + 2 * s * math.sqrt(2 * b1 / N), rel=1e-14)
    assert hi == pytest.approx(4 * R * b2 / N + 2 * s * math.sqrt(2 * b2 / N), rel=1e-14)
    assert 0 < hi - lo <= 4 * R * math.log(2) / N + 2 * s * math.sqrt(2 * math.log(2) / N)


def test_rank1_example():
    env = MomentEnvelope(1.0, np.array([[1.0]]), np.array([[1.0]]))
    b = math.log(160)
    assert b == pytest.approx(5.0752, abs=1e-4)
    v = bernstein_bound_rank1(1000, env, 0.05)
    assert v == pytest.approx(8 * b / 1000 + 4 * math.sqrt(2 * b / 1000), rel=1e-14)
    assert v == pytest.approx(0.4436, abs=1e-4)
    assert bernstein_bound_rank1(10**14, env, 0.05) < 1e-5


def test_rank1_is_twice_selfadjoint():
    # W = 0 keeps trace and sigma^2 equal, so both bounds share the log term
    env_sa = MomentEnvelope(1.5, 2 * np.eye(3))
    env_r1 = MomentEnvelope(1.5, 2 * np.eye(3), np.zeros((3, 3)))
    b = math.log(4 * 6 / (0.1 * 2))
    for N in (1, 50, 5000):
        sa = _bernstein(N, 1.5, math.sqrt(2), b, 4, 2)
        assert bernstein_bound_selfadjoint(N, env_sa, 0.1) == pytest.approx(sa, rel=1e-14)
        assert bernstein_bound_rank1(N, env_r1, 0.1) == pytest.approx(2 * sa, rel=1e-14)
    with pytest.raises(ValueError):
        bernstein_bound_rank1(10, MomentEnvelope(1.0, np.eye(2)), 0.1)


def test_validity_threshold():
    env = MomentEnvelope(1.0, np.eye(2))
    assert selfadjoint_validity_threshold(100, env) == pytest.approx(0.02 + 2**0.75 / 10)


def test_constant_ensemble_has_zero_deviation():
    rep = mc_coverage("constant", 5, 20, 500, 0.05, 0)
    assert rep.bound == 0.0 and rep.max_deviation == 0.0 and rep.fraction == 0.0 and rep.passes


def test_ensemble_envelope_closed_form():
    rng = np.random.default_rng(0)
    dim, n = 6, 400_000
    r = rng.uniform(0.5, 1.0, n)
    u = rng.standard_normal((n, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    mean, env = ensemble_envelope("symmetric_rank1", dim, "rank1")
    np.testing.assert_allclose(mean, np.mean(r**2) * np.eye(dim) / dim, atol=3e-3)
    # X^2 = r^4 u u^T
    np.testing.assert_allclose(env.V, (u * (r**4)[:, None]).T @ u / n, atol=3e-3)
    with pytest.raises(ValueError):
        ensemble_envelope("rectangular_rank1", dim, "selfadjoint")
    with pytest.raises(ValueError):
        ensemble_envelope("gaussian", dim, "rank1")


@pytest.mark.parametrize("ensemble, kind", [("symmetric_rank1", "selfadjoint"), ("symmetric_rank1", "rank1"),
                                            ("rectangular_rank1", "rank1")])
def test_coverage_small(ensemble, kind):
    rep = mc_coverage(ensemble, 8, 100, 500, 0.05, 1, bound_kind=kind)
    assert rep.passes and rep.max_deviation < rep.bound


def test_coverage_nonincreasing_in_n():
    fr = [mc_coverage("symmetric_rank1", 4, N, 500, 0.2, 2).fraction for N in (5, 10, 20)]
    assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_coverage_deterministic_and_arguments():
    a = mc_coverage("rectangular_rank1", 4, 30, 500, 0.1, 3)
    b = mc_coverage("rectangular_rank1", 4, 30, 500, 0.1, 3)
    assert a.max_deviation == b.max_deviation
    with pytest.raises(ValueError):
        mc_coverage("symmetric_rank1", 65, 10, 500, 0.1, 0)
    with pytest.raises(ValueError):
        mc_coverage("symmetric_rank1", 4, 10, 499, 0.1, 0)
    with pytest.raises(ValueError):
        mc_coverage("symmetric_rank1", 4, 10, 500, 1.5, 0)


def _cube_samples(v, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, v.size)) * np.sqrt(3 * v)
    return X, math.sqrt(3 * v.sum())


def test_moment_check_p1_tight_and_p2_passes():
    v = np.array([0.5, 0.2, 0.1, 0.05])
    X, R = _cube_samples(v, 200_000, 0)
    res = moment_check(X, MomentEnvelope.diagonal(R, v), 2)
    assert [r.p for r in res] == [1, 2]
    assert res[0].passes and abs(res[0].min_eigenvalue) <= res[0].tolerance
    assert res[1].passes and res[1].min_eigenvalue > 0


def test_moment_check_model_noise():
    m = dm.DiagonalModel(n_features=32)
    R, V = dm.default_noise(m)
    fs = dm.sample_features(m, 20_000, seed=1)
    assert all(r.passes for r in moment_check(fs.noise, MomentEnvelope.diagonal(R, V), 4))


def test_moment_check_halved_radius_fails_at_p3():
    # red by design: with |e| <= R the p = 3 envelope (6!/2) (R/2)^4 V is 22.5 R^4 V,
    # which still dominates E[|e|^4 e e^T] <= R^4 V, so halving R cannot fail
    v = np.array([0.5, 0.2, 0.1, 0.05])
    X, R = _cube_samples(v, 100_000, 2)
    res = moment_check(X, MomentEnvelope.diagonal(R / 2, v), 3)
    assert not res[2].passes


def test_moment_check_tenth_radius_fails_at_p3():
    v = np.array([0.5, 0.2, 0.1, 0.05])
    X, R = _cube_samples(v, 100_000, 2)
    res = moment_check(X, MomentEnvelope.diagonal(R / 10, v), 3)
    assert not res[2].passes


def test_moment_check_arguments():
    env = MomentEnvelope.diagonal(1.0, [1.0])
    with pytest.raises(ValueError):
        moment_check(np.zeros((100, 1)), env, 1)
    with pytest.raises(ValueError):
        moment_check(np.zeros((10_000, 1)), env, 5)


def test_convexity_equal_points_and_one_dimension():
    from cmerates.concentration import _midpoint_violations
    x = np.random.default_rng(0).standard_normal((100, 3))
    assert _midpoint_violations(lambda v: np.einsum("ij,ij->i", v, v) ** 3, x, x) == 0
    for p in (1, 1.5, 3):
        assert convexity_check(p, 1, 10_000, 0).passes


def test_convexity_two_dimensions_p1():
    # red by design: f is not convex, see test_convexity_counterexample
    rep = convexity_check(1, 2, 100_000, 0)
    assert rep.violations_vector == 0 and rep.violations_operator == 0


def test_convexity_counterexample():
    # f(x) = |x|^2 <e2, x>^2 = x1^2 x2^2 + x2^4 has Hessian determinant 24 x2^4 - 12 x1^2 x2^2 < 0 near (2, 0.3)
    f = lambda v: (v[0] ** 2 + v[1] ** 2) * v[1] ** 2
    a, b = np.array([1.0, 0.57]), np.array([3.0, 0.03])
    assert f((a + b) / 2) == pytest.approx(0.3681)
    assert (f(a) + f(b)) / 2 == pytest.approx(0.21928041)
    rep = convexity_check(1, 2, 10_000, 0)
    assert rep.violations_vector > 0


def test_convexity_arguments():
    with pytest.raises(ValueError):
        convexity_check(0.5, 2, 10_000, 0)
    with pytest.raises(ValueError):
        convexity_check(1, 2, 100, 0)


# variance bound: an independent re-implementation with plain loops


def _basis(x, i):
    if i == 1:
        return 1.0
    k = i // 2
    return math.sqrt(2) * (math.cos(2 * math.pi * k * x) if i % 2 == 0 else math.sin(2 * math.pi * k * x))


def _reference_bound(p, beta, B, nf, lam, gamma, n, delta, R, V, alpha, grid):
    mu = [i ** (-1 / p) for i in range(1, nf + 1)]
    rho = [(lam * u ** (beta / 2) / (u + lam)) ** 2 * B**2 for u in mu]
    M = math.sqrt(max(math.fsum(rho[i] * _basis(x, i + 1) ** 2 for i in range(nf)) for x in grid))
    N_lam = math.fsum(u / (u + lam) for u in mu)
    k2 = math.fsum(u**alpha * _basis(0.0, i + 1) ** 2 for i, u in enumerate(mu))
    s2 = math.fsum(V)
    Q = max(M, R)
    tr = math.fsum(rho)
    C = mu[0]
    emb = k2 * lam ** (-alpha)
    eta = max((s2 + M**2) * C / (C + lam), max(N_lam * v + emb * r for v, r in zip(V, rho)))
    b = math.log(4 * ((2 * s2 + M**2) * N_lam + emb * tr) / (eta * delta))
    val = 3 * lam ** (-gamma / 2) * (16 * Q * math.sqrt(k2) * b / (lam ** (alpha / 2) * n) + 8 * math.sqrt(eta * b / n))
    n_req = 8 * k2 * math.log(1 / delta) * math.log(2 * math.e * N_lam * (C + lam) / C) * lam ** (-alpha)
    return dict(value=val, effective_dim=N_lam, worst_case_bias=M, Q=Q, kalpha_sup=math.sqrt(k2), sigma2=s2,
                eta=eta, beta_delta=b, trace_rho=tr, n_required=n_req)


@pytest.mark.parametrize("lam, n", [(1e-2, 500), (2e-3, 2000), (1e-4, 10**6)])
def test_variance_bound_matches_reference(lam, n):
    m = dm.DiagonalModel(n_features=64)
    R, V = dm.default_noise(m)
    grid = np.linspace(0, 1, 101)
    vb = variance_bound_rhs(m, lam, 0.2, n, 0.05, MomentEnvelope.diagonal(R, V), 0.6, grid=grid)
    ref = _reference_bound(0.5, 1.0, 1.0, 64, lam, 0.2, n, 0.05, R, list(V), 0.6, grid)
    for key, want in ref.items():
        assert getattr(vb, key) == pytest.approx(want, rel=1e-10, abs=1e-300), key
    assert vb.certified == (n >= ref["n_required"])
    assert float(vb) == vb.value


def test_variance_bound_vanishes_with_n():
    m = dm.DiagonalModel(n_features=64)
    R, V = dm.default_noise(m)
    env = MomentEnvelope.diagonal(R, V)
    vals = [variance_bound_rhs(m, 1e-3, 0.2, n, 0.05, env, 0.6).value for n in (10**3, 10**6, 10**12)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-4
    assert variance_bound_rhs(m, 1e-3, 0.2, 10**12, 0.05, env, 0.6).certified


def test_variance_bound_arguments():
    m = dm.DiagonalModel(n_features=8)
    R, V = dm.default_noise(m)
    env = MomentEnvelope.diagonal(R, V)
    with pytest.raises(ValueError):
        variance_bound_rhs(m, 1e-3, 0.2, 100, 0.05, env, 0.4)
    with pytest.raises(ValueError):
        variance_bound_rhs(m, 1e-3, 0.2, 100, 0.05, MomentEnvelope.diagonal(R, V[:4]), 0.6)
    with pytest.raises(ValueError):
        variance_bound_rhs(m, 0.0, 0.2, 100, 0.05, env, 0.6)
