"""Operator Bernstein bounds, Monte-Carlo coverage, moment envelopes and a variance bound.

``beta(delta)`` always uses the natural logarithm.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagonal_model as dm
from ._validation import check_open_unit, check_positive
from .diagonal_model import default_grid, fourier_basis
from .exceptions import NumericError
from .spectral import effective_dimension

ENSEMBLES = ("symmetric_rank1", "rectangular_rank1", "constant")
_RADIUS = (0.5, 1.0)


@dataclass(frozen=True)
class MomentEnvelope:
    """Envelope ``(R, V)`` with an optional second envelope ``W`` for non-self-adjoint draws."""

    R: float
    V: np.ndarray
    W: np.ndarray = None

    def __post_init__(self):
        check_positive(self.R, "R")
        for name in ("V", "W"):
            M = getattr(self, name)
            if M is None:
                continue
            M = np.atleast_2d(np.asarray(M, dtype=np.float64))
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be a symmetric matrix")
            if np.linalg.eigvalsh(M)[0] < -1e-12 * max(np.abs(M).max(), 1.0):
                raise ValueError(f"{name} must be PSD")
            object.__setattr__(self, name, M)

    @classmethod
    def diagonal(cls, R, v, w=None):
        return cls(R, np.diag(v), None if w is None else np.diag(w))

    @property
    def sigma2(self):
        s = np.linalg.norm(self.V, 2)
        return max(s, np.linalg.norm(self.W, 2)) if self.W is not None else s

    @property
    def trace(self):
        return float(np.trace(self.V) + (np.trace(self.W) if self.W is not None else 0.0))


def _check_count(N, name="N"):
    if int(N) != N or N < 1:
        raise ValueError(f"{name} must be a positive integer")
    return int(N)


def _bernstein(N, R, sigma, log_term, c_R, c_sigma):
    return c_R * R * log_term / N + c_sigma * sigma * math.sqrt(2 * log_term / N)


def bernstein_bound_selfadjoint(N, env, delta):
    """``4 R b / N + 2 sigma sqrt(2 b / N)`` with ``b = log(4 tr V / (delta sigma^2))``."""
    N = _check_count(N)
    delta = check_open_unit(delta, "delta")
    s2 = float(np.linalg.norm(env.V, 2))
    if s2 <= 0:
        return 0.0
    b = math.log(4 * np.trace(env.V) / (delta * s2))
    return _bernstein(N, env.R, math.sqrt(s2), b, 4, 2)


def bernstein_bound_rank1(N, env, delta):
    """``8 R b / N + 4 sigma sqrt(2 b / N)`` with ``b = log(4 tr(V + W) / (delta sigma^2))``."""
    if env.W is None:
        raise ValueError("the rank-1 bound needs the second envelope W")
    N = _check_count(N)
    delta = check_open_unit(delta, "delta")
    s2 = env.sigma2
    if s2 <= 0:
        return 0.0
    b = math.log(4 * env.trace / (delta * s2))
    return _bernstein(N, env.R, math.sqrt(s2), b, 8, 4)


def selfadjoint_validity_threshold(N, env):
    """Smallest deviation for which the self-adjoint tail estimate is stated."""
    return 2 * env.R / N + 2 ** 0.75 * math.sqrt(np.linalg.norm(env.V, 2)) / math.sqrt(N)


@dataclass(frozen=True)
class CoverageReport:
    ensemble: str
    bound_kind: str
    dim: int
    N: int
    trials: int
    delta: float
    bound: float
    exceedances: int
    max_deviation: float
    below_validity_threshold: bool
    envelope: MomentEnvelope = field(repr=False, default=None)

    @property
    def fraction(self):
        return self.exceedances / self.trials

    @property
    def passes(self):
        return self.fraction <= self.delta


def _radius_moments():
    """``E r^2`` and ``E r^4`` for ``r ~ Uniform[_RADIUS]``."""
    a, b = _RADIUS
    m2 = (b**3 - a**3) / (3 * (b - a))
    m4 = (b**5 - a**5) / (5 * (b - a))
    return m2, m4


def ensemble_envelope(ensemble, dim, bound_kind):
    """Closed-form mean and envelope for the shipped bounded ensembles."""
    r_max = _RADIUS[1]
    m2, m4 = _radius_moments()
    eye = np.eye(dim)
    if ensemble == "symmetric_rank1":
        mean = m2 / dim * eye
        if bound_kind == "selfadjoint":
            # centred draws r^2 u u^T - mean have eigenvalues r^2 - m and -m
            c = m2 / dim
            return mean, MomentEnvelope(max(r_max**2 - c, c), (m4 / dim - c**2) * eye)
        return mean, MomentEnvelope(r_max**2, m4 / dim * eye, m4 / dim * eye)
    if ensemble == "rectangular_rank1":
        if bound_kind != "rank1":
            raise ValueError("rectangular draws are not self-adjoint")
        return np.zeros((dim, dim)), MomentEnvelope(r_max, m2 / dim * eye, m2 / dim * eye)
    if ensemble == "constant":
        return eye, MomentEnvelope(1.0, np.zeros((dim, dim)), np.zeros((dim, dim)))
    raise ValueError(f"unknown ensemble {ensemble!r}; expected one of {ENSEMBLES}")


def _unit_vectors(rng, shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _trial_deviation(ensemble, dim, N, rng, mean):
    if ensemble == "constant":
        return 0.0
    r = rng.uniform(*_RADIUS, size=N)
    if ensemble == "symmetric_rank1":
        u = _unit_vectors(rng, (N, dim)) * r[:, None]
        S = u.T @ u / N - mean
        return float(np.abs(np.linalg.eigvalsh(S)).max())
    a = _unit_vectors(rng, (N, dim)) * r[:, None]
    b = _unit_vectors(rng, (N, dim))
    return float(np.linalg.norm(a.T @ b / N - mean, 2))


def mc_coverage(ensemble, dim, N, trials, delta, seed, bound_kind=None):
    """Fraction of trials where the empirical mean strays from ``E[X]`` past the Bernstein bound.

    ``bound_kind`` is ``"selfadjoint"`` or ``"rank1"``; by default symmetric
    draws use the self-adjoint bound and rectangular ones the rank-1 bound.
    Trial ``t`` draws from ``default_rng([seed, t])``.
    """
    dim, N, trials = _check_count(dim, "dim"), _check_count(N), _check_count(trials, "trials")
    if dim > 64:
        raise ValueError("dim must be <= 64")
    if trials < 500:
        raise ValueError("trials must be >= 500")
    delta = check_open_unit(delta, "delta")
    if bound_kind is None:
        bound_kind = "rank1" if ensemble == "rectangular_rank1" else "selfadjoint"
    mean, env = ensemble_envelope(ensemble, dim, bound_kind)
    if bound_kind == "selfadjoint":
        bound = bernstein_bound_selfadjoint(N, env, delta)
        below = bound < selfadjoint_validity_threshold(N, env)
    elif bound_kind == "rank1":
        bound = bernstein_bound_rank1(N, env, delta)
        below = False
    else:
        raise ValueError(f"unknown bound kind {bound_kind!r}")
    if not np.isfinite(bound):
        raise NumericError("non-finite Bernstein bound")
    devs = np.array([_trial_deviation(ensemble, dim, N, np.random.default_rng([seed, t]), mean)
                     for t in range(trials)])
    return CoverageReport(ensemble=ensemble, bound_kind=bound_kind, dim=dim, N=N, trials=trials,
                          delta=delta, bound=bound, exceedances=int((devs > bound).sum()),
                          max_deviation=float(devs.max()), below_validity_threshold=below, envelope=env)


@dataclass(frozen=True)
class MomentCheck:
    p: int
    min_eigenvalue: float
    tolerance: float

    @property
    def passes(self):
        return self.min_eigenvalue >= -self.tolerance


def moment_check(samples, env, p_max):
    """Check ``E[(e e^T)^p] <= ((2p)!/2) R^(2p-2) V`` for centred vector draws ``e``.

    ``(e e^T)^p = |e|^(2p-2) e e^T``.  The tolerance is three times the
    Frobenius norm of the entrywise standard errors.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be an (n, d) array of vector draws")
    if X.shape[0] < 10_000:
        raise ValueError("moment_check needs at least 1e4 samples")
    if not 1 <= p_max <= 4:
        raise ValueError("p_max must lie in 1..4")
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    out = []
    for p in range(1, int(p_max) + 1):
        w = sq ** (p - 1)
        est = (X * w[:, None]).T @ X / n
        # entrywise variance of w x_a x_b
        prod_sq = ((X * w[:, None]) ** 2).T @ (X**2) / n
        se = np.sqrt(np.clip(prod_sq - est**2, 0.0, None) / n)
        env_mat = math.factorial(2 * p) / 2 * env.R ** (2 * p - 2) * env.V
        min_eig = float(np.linalg.eigvalsh(env_mat - est)[0])
        out.append(MomentCheck(p=p, min_eigenvalue=min_eig, tolerance=3 * float(np.linalg.norm(se))))
    return out


@dataclass(frozen=True)
class ConvexityReport:
    p: float
    dim: int
    trials: int
    violations_vector: int
    violations_operator: int

    @property
    def passes(self):
        return self.violations_vector == 0 and self.violations_operator == 0


def _midpoint_violations(f, a, b):
    fa, fb, fm = f(a), f(b), f((a + b) / 2)
    scale = np.maximum(np.maximum(np.abs(fa), np.abs(fb)), 1.0)
    return int((fm > (fa + fb) / 2 + 1e-12 * scale).sum())


def convexity_check(p, dim, trials, seed):
    """Midpoint convexity of ``|x|^2p <y, x>^2`` and ``|A|_HS^2p |A y|^2`` on random pairs."""
    if p < 1:
        raise ValueError("p must be >= 1")
    dim = _check_count(dim, "dim")
    trials = _check_count(trials, "trials")
    if trials < 10_000:
        raise ValueError("trials must be >= 1e4")
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((trials, dim))
    x, z = rng.standard_normal((2, trials, dim))

    def f(v):
        return np.einsum("ij,ij->i", v, v) ** p * np.einsum("ij,ij->i", y, v) ** 2

    A, Z = rng.standard_normal((2, trials, dim, dim))
    yo = rng.standard_normal((trials, dim))

    def g(M):
        Ay = np.einsum("tij,tj->ti", M, yo)
        return np.einsum("tij,tij->t", M, M) ** p * np.einsum("ti,ti->t", Ay, Ay)

    return ConvexityReport(p=p, dim=dim, trials=trials, violations_vector=_midpoint_violations(f, x, z),
                           violations_operator=_midpoint_violations(g, A, Z))


@dataclass(frozen=True)
class VarianceBound:
    """Components of the high-probability bound on ``|C_hat - C^lam|_gamma``."""

    value: float
    effective_dim: float
    worst_case_bias: float
    Q: float
    kalpha_sup: float
    sigma2: float
    eta: float
    beta_delta: float
    trace_rho: float
    n_required: float
    certified: bool

    def __float__(self):
        return self.value


def variance_bound_rhs(m, lam, gamma, n, delta, env, alpha, grid=None):
    """High-probability bound on ``|C_hat - C^lam|_gamma`` for the ``n_features``-mode model.

    ``env`` describes the output noise with ``V`` in the ``{f_i}`` basis;
    ``sigma^2`` here is ``tr V``.  ``certified`` is False when ``n`` is below
    the sample size required for the bound, in which case the value is
    still returned.
    """
    lam = check_positive(lam, "lam")
    delta = check_open_unit(delta, "delta")
    n = _check_count(n, "n")
    if not m.p < alpha <= 1:
        raise ValueError("need p < alpha <= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    V = np.asarray(env.V, dtype=np.float64)
    if V.shape != (m.n_features, m.n_features):
        raise ValueError("noise envelope must match n_features")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    mu, t = m.eigenvalues, m.coefficients
    rho = (lam * mu ** (m.beta / 2) / (mu + lam)) ** 2 * t**2
    M = dm.worst_case_bias(m, lam, grid, truncate=True)
    C_norm = float(mu[0])
    N_lam = effective_dimension(mu, lam)
    k2 = float(np.sum(mu**alpha * fourier_basis([0.0], m.n_features)[0] ** 2))
    k_sup = math.sqrt(k2)
    sigma2 = float(np.trace(V))
    Q = max(M, env.R)
    tr_rho = dm.expected_bias(m, lam, truncate=True)
    emb = k2 * lam ** (-alpha)
    eta = max((sigma2 + M**2) * C_norm / (C_norm + lam),
              float(np.linalg.eigvalsh(N_lam * V + emb * np.diag(rho))[-1]))
    b = math.log(4 * ((2 * sigma2 + M**2) * N_lam + emb * tr_rho) / (eta * delta))
    value = 3 * lam ** (-gamma / 2) * (16 * Q * k_sup * b / (lam ** (alpha / 2) * n) + 8 * math.sqrt(eta * b / n))
    g = math.log(2 * math.e * N_lam * (C_norm + lam) / C_norm)
    n_req = 8 * k2 * math.log(1 / delta) * g * lam ** (-alpha)
    return VarianceBound(value=value, effective_dim=N_lam, worst_case_bias=M, Q=Q, kalpha_sup=k_sup,
                         sigma2=sigma2, eta=eta, beta_delta=b, trace_rho=tr_rho, n_required=n_req,
                         certified=n >= n_req)
