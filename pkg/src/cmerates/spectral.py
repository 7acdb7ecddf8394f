"""Empirical Mercer decompositions and eigendecay / effective-dimension diagnostics."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._series import TAIL_TOL, series_sum
from ._validation import check_open_unit, check_point, check_points, check_positive
from .exceptions import NumericError
from .kernels import KernelSpec, gram

EPS_TRUNC = 1e-10
_CHUNK = 512


@dataclass(frozen=True)
class SpectralModel:
    """Eigenvalues ``mu`` (descending) and a way to evaluate the eigenfunctions.

    Empirical models carry the Gram eigenvectors and extend them off-sample by
    the Nystrom formula ``e_i(x) = k_x . v_i / (sqrt(n) mu_i)``; at the sample
    points themselves the exact values ``sqrt(n) v_i`` are returned, which the
    formula reproduces only up to round-off of order ``eps / mu_i``.  Analytic
    models instead carry ``basis(x, m)`` returning an (len(x), m) array.
    """

    eigenvalues: np.ndarray
    eigvecs: np.ndarray = None
    sample_points: np.ndarray = None
    kernel: object = None
    basis: object = None
    condition: dict = field(default_factory=dict)

    @property
    def n(self):
        return None if self.sample_points is None else self.sample_points.shape[0]

    @property
    def n_modes(self):
        return self.eigenvalues.shape[0]

    def __post_init__(self):
        if self.basis is None and self.sample_points is not None:
            index = {row.tobytes(): s for s, row in enumerate(self.sample_points)}
            object.__setattr__(self, "_sample_index", index)

    def eigenfunctions(self, x):
        X = check_points(x, "x")
        if self.basis is not None:
            return self.basis(X, self.n_modes)
        root_n = math.sqrt(self.n)
        Kx = self.kernel(X, self.sample_points)
        E = Kx @ self.eigvecs / (root_n * self.eigenvalues)
        for r, row in enumerate(X):
            s = self._sample_index.get(row.tobytes())
            if s is not None:
                E[r] = root_n * self.eigvecs[s]
        return E

    def weighted_square_sum(self, weights, grid):
        """``sum_i w_i e_i(x)^2`` at every grid point, evaluated in row chunks."""
        X = check_points(grid, "grid")
        w = np.asarray(weights, dtype=np.float64)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], _CHUNK):
            E = self.eigenfunctions(X[start:start + _CHUNK])
            out[start:start + _CHUNK] = (E * E) @ w
        return out


@dataclass(frozen=True)
class DecayFit:
    p: float
    r2: float
    index_range: tuple
    intercept: float
    slope: float


def mercer_from_gram(g, eps_trunc=EPS_TRUNC):
    """Eigendecompose ``K / n`` and keep modes above ``eps_trunc * mu_1``.

    Equal eigenvalues stay in index order (stable sort), so the retained
    sequence is nonincreasing rather than strictly decreasing when the Gram
    matrix has repeated eigenvalues.
    """
    K = np.asarray(g.entries if hasattr(g, "entries") else g, dtype=np.float64)
    n = K.shape[0]
    try:
        w, V = np.linalg.eigh(K / n)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigendecomposition failed (n={n}, finite={np.isfinite(K).all()}, "
            f"max|K-K^T|={np.abs(K - K.T).max():.2e})"
        ) from exc
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    if w[0] <= 0:
        raise NumericError("Gram matrix has no positive eigenvalue")
    keep = w > eps_trunc * w[0]
    cond = {"largest": float(w[0]), "smallest": float(w[-1]), "retained": int(keep.sum())}
    return SpectralModel(
        eigenvalues=w[keep],
        eigvecs=V[:, keep],
        sample_points=getattr(g, "points", None),
        kernel=getattr(g, "kernel", None),
        condition=cond,
    )


def power_kernel_eval(s, alpha, x, x_prime):
    """``k^alpha(x, x') = sum_i mu_i^alpha e_i(x) e_i(x')`` over retained modes."""
    alpha = check_positive(alpha, "alpha")
    x = check_point(x)
    x_prime = check_point(x_prime, dim=x.shape[0], name="x_prime")
    E = s.eigenfunctions(np.vstack([x, x_prime]))
    return float(np.sum(s.eigenvalues**alpha * E[0] * E[1]))


def sup_norm_kalpha(s, alpha, grid):
    """Grid approximation of ``sup_x sqrt(sum_i mu_i^alpha e_i(x)^2)``."""
    alpha = check_positive(alpha, "alpha")
    vals = s.weighted_square_sum(s.eigenvalues**alpha, grid)
    return float(math.sqrt(max(vals.max(), 0.0)))


def fit_eigendecay(mu, window=None):
    """OLS of ``log mu_i`` on ``log i``; the decay exponent is ``-1 / slope``.

    ``window`` is an inclusive 1-based ``(first, last)`` index pair; the
    default ``(3, m - 2)`` avoids edge modes and falls back to all modes when
    it would hold fewer than five.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1 or mu.shape[0] < 5 or np.any(mu <= 0):
        raise ValueError("need at least 5 positive eigenvalues")
    m = mu.shape[0]
    if window is None:
        lo, hi = (3, m - 2) if m - 4 >= 5 else (1, m)
    else:
        lo, hi = int(window[0]), int(window[1])
        if lo < 1 or hi > m or hi - lo + 1 < 5:
            raise ValueError(f"window {window} must select at least 5 of {m} modes")
    idx = np.arange(lo, hi + 1, dtype=np.float64)
    slope, intercept, r2 = loglog_fit(idx, mu[lo - 1:hi])
    if slope >= 0:
        raise ValueError("eigenvalues do not decay")
    return DecayFit(p=-1.0 / slope, r2=r2, index_range=(lo, hi), intercept=intercept, slope=slope)


def loglog_fit(xs, ys):
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def effective_dimension(mu, lam):
    lam = check_positive(lam, "lam")
    mu = np.asarray(mu, dtype=np.float64)
    return float(np.sum(mu / (mu + lam)))


def power_law_effective_dimension(p, lam, tail_tol=TAIL_TOL):
    """Effective dimension of the infinite spectrum ``mu_i = i^(-1/p)``."""
    lam = check_positive(lam, "lam")

    def term(i):
        mu = i ** (-1.0 / p)
        return mu / (mu + lam)

    return series_sum(term, tail_tol=tail_tol, min_terms=8 * int(lam ** (-p)) + 1024).value


def effective_dimension_constants(p):
    """Constants ``(lower, upper)`` with ``lower <= N(lam) lam^p <= upper`` for ``lam <= 1``.

    For ``mu_i = i^(-1/p)`` the upper constant is ``int_0^inf dy / (1 + y^(1/p))``
    ``= pi p / sin(pi p)`` and the lower one is the same integral from 1.
    """
    p = check_open_unit(p, "p")
    upper = math.pi * p / math.sin(math.pi * p)
    lower, _ = integrate.quad(lambda y: 1.0 / (1.0 + y ** (1.0 / p)), 1.0, np.inf)
    return lower, upper


@dataclass(frozen=True)
class SeriesBoundReport:
    lambdas: np.ndarray
    values: np.ndarray
    slope: float
    expected_slope: float
    constant: float
    max_ratio: float
    holds: bool


def series_bound_check(p, beta, lambdas, tol=0.05, tail_tol=TAIL_TOL):
    """Check ``S(lam) = sum_i (mu_i^(beta/2) / (mu_i + lam))^2`` against ``D lam^(beta - p - 2)``.

    Uses ``mu_i = i^(-1/p)``.  ``D = beta / (beta - p)`` comes from the integral
    comparison for an exact power law.  Passes when the fitted log-log slope is
    at most ``beta - p - 2 + tol`` and every value is below the ``D`` envelope.
    """
    p = check_open_unit(p, "p")
    beta = check_positive(beta, "beta")
    if beta <= p:
        raise ValueError("series diverges unless beta > p")
    if beta >= 2:
        raise ValueError("beta must be < 2")
    lams = np.asarray(lambdas, dtype=np.float64)
    if np.any((lams <= 0) | (lams >= 1)):
        raise ValueError("lambdas must lie in (0, 1)")
    vals = []
    for lam in lams:
        def term(i, lam=lam):
            mu = i ** (-1.0 / p)
            return (mu ** (beta / 2) / (mu + lam)) ** 2

        vals.append(series_sum(term, tail_tol=tail_tol, min_terms=8 * int(lam ** (-p)) + 1024).value)
    vals = np.array(vals)
    expected = beta - p - 2
    slope, _, _ = loglog_fit(lams, vals)
    D = beta / (beta - p)
    ratio = float(np.max(vals / (D * lams**expected)))
    return SeriesBoundReport(lams, vals, slope, expected, D, ratio, bool(slope <= expected + tol and ratio <= 1.0))


@dataclass(frozen=True)
class HBoundReport:
    lhs: float
    rhs: float
    ratio: float
    holds: bool


def h_bound_check(s, alpha, lam, grid):
    """Compare ``max_x |(C + lam)^(-1/2) k(x, .)|`` with ``lam^(-alpha/2) |k^alpha|_inf`` on a grid."""
    alpha = check_positive(alpha, "alpha")
    if alpha > 1:
        raise ValueError("alpha must lie in (0, 1]")
    lam = check_positive(lam, "lam")
    mu = s.eigenvalues
    lhs = math.sqrt(max(s.weighted_square_sum(mu / (mu + lam), grid).max(), 0.0))
    rhs = lam ** (-alpha / 2) * sup_norm_kalpha(s, alpha, grid)
    # termwise mu^(1-alpha)/(mu+lam) <= lam^(-alpha); allow only round-off above it
    return HBoundReport(lhs, rhs, lhs / rhs, bool(lhs <= rhs * (1 + 1e-12)))


@dataclass(frozen=True)
class GaussianConstantsReport:
    log_terms: np.ndarray
    partial_sums: np.ndarray
    threshold: int
    max_ratio_beyond_threshold: float
    ratio_test_passes: bool
    last_increment: float
    converged: bool

    @property
    def passes(self):
        return self.ratio_test_passes and self.converged


def gaussian_constants_check(beta, sigma, k_max=200):
    """Series for the squared interpolation norm of a constant under a Gaussian kernel.

    ``sigma`` is the width in ``exp(-|x - y|^2 / sigma^2)``.  Terms are
    ``a_k = sigma^(4(beta-1)k) ((2k)!)^beta / (4^(beta k) (k!)^2)``, computed in
    log space.
    """
    beta = check_open_unit(beta, "beta")
    sigma = check_positive(sigma, "sigma")
    if k_max < 10:
        raise ValueError("k_max must be >= 10")
    k = np.arange(k_max + 1, dtype=np.float64)
    lg = np.vectorize(math.lgamma)
    log_a = (4 * (beta - 1) * k * math.log(sigma) + beta * lg(2 * k + 1)
             - beta * k * math.log(4.0) - 2 * lg(k + 1))
    partial = np.cumsum(np.exp(log_a))
    threshold = math.ceil(2 ** (1 / (2 * (1 - beta))) * math.e / sigma**2)
    ratios = np.exp(np.diff(log_a))
    beyond = ratios[threshold:] if threshold < k_max else np.array([])
    max_ratio = float(beyond.max()) if beyond.size else float("nan")
    increment = float(partial[-1] - partial[-2])
    return GaussianConstantsReport(
        log_terms=log_a,
        partial_sums=partial,
        threshold=threshold,
        max_ratio_beyond_threshold=max_ratio,
        ratio_test_passes=bool(beyond.size > 0 and max_ratio < 0.5),
        last_increment=increment,
        converged=bool(increment < 1e-12),
    )


class MercerDecomposition(TransformerMixin, BaseEstimator):
    """Empirical Mercer decomposition of a kernel under the sample measure.

    ``transform`` returns Nystrom eigenfunction values, one column per mode.

    Parameters
    ----------
    kernel : KernelSpec
    eps_trunc : float
        Relative eigenvalue cutoff.
    """

    def __init__(self, kernel=None, eps_trunc=EPS_TRUNC):
        self.kernel = kernel
        self.eps_trunc = eps_trunc

    def fit(self, X, y=None):
        X = check_points(X, "X")
        kernel = self.kernel if self.kernel is not None else KernelSpec()
        self.model_ = mercer_from_gram(gram(kernel, X), eps_trunc=self.eps_trunc)
        self.eigenvalues_ = self.model_.eigenvalues
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.eigenfunctions(X)

    def decay_fit(self, window=None):
        check_is_fitted(self, "model_")
        return fit_eigendecay(self.eigenvalues_, window=window)
