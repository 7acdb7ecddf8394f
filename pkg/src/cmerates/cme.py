"""Kernel ridge estimator of conditional mean embeddings.

For a sample ``(x_i, y_i)`` the embedding at ``x`` is ``sum_i beta_i(x) l(y_i, .)``
with weights ``beta(x) = (K + n lam I)^-1 k_x``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_positive
from .exceptions import NumericError
from .kernels import KernelSpec


def _cross(kernel, A, B=None):
    return np.asarray(kernel(A, B) if B is not None else kernel(A), dtype=np.float64)


class ConditionalMeanEmbedding(BaseEstimator):
    """Regularized CME estimator.

    Parameters
    ----------
    kernel : KernelSpec or callable, default=None
        Input kernel. A callable must return the cross-kernel matrix
        ``kernel(A, B)`` for point sets of shape ``(n, d)`` and ``(m, d)``.
        ``None`` means a unit-bandwidth gaussian.
    lam : float, default=1e-3
        Regularization strength; the system solved is ``K + n lam I``.
    output_kernel : KernelSpec or callable, default=None
        Output kernel ``l``; only needed for RKHS distances. ``None`` means a
        unit-bandwidth gaussian.
    """

    def __init__(self, kernel=None, lam=1e-3, output_kernel=None):
        self.kernel = kernel
        self.lam = lam
        self.output_kernel = output_kernel

    def _kernel(self):
        return KernelSpec() if self.kernel is None else self.kernel

    def fit(self, X, Y):
        X = check_points(X, "X")
        Y = check_points(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X and Y have different lengths: {X.shape[0]} vs {Y.shape[0]}")
        lam = check_positive(self.lam, "lam")
        n = X.shape[0]
        K = _cross(self._kernel(), X)
        A = K + n * lam * np.eye(n)
        try:
            self.factor_ = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError(f"Cholesky failed; condition number {np.linalg.cond(A):.3e}") from exc
        self.X_ = X
        self.Y_ = Y
        self.gram_ = K
        self._L = None
        self.n_features_in_ = X.shape[1]
        return self

    def _output_kernel(self):
        return KernelSpec() if self.output_kernel is None else self.output_kernel

    @property
    def output_gram_(self):
        check_is_fitted(self, "factor_")
        if getattr(self, "_L", None) is None:
            self._L = _cross(self._output_kernel(), self.Y_)
        return self._L

    @property
    def n_samples_(self):
        check_is_fitted(self, "factor_")
        return self.X_.shape[0]

    def embed_weights(self, x):
        """Weights for each query row; shape ``(m, n)`` (or ``(n,)`` for one point given as 1-d)."""
        check_is_fitted(self, "factor_")
        single = np.ndim(x) == 1 and self.n_features_in_ > 1 and np.size(x) == self.n_features_in_
        Xq = check_points(np.atleast_2d(x) if single else x, "x")
        if Xq.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} input features, got {Xq.shape[1]}")
        kx = _cross(self._kernel(), self.X_, Xq)
        W = linalg.cho_solve(self.factor_, kx).T
        return W[0] if single or np.ndim(x) == 0 else W

    transform = embed_weights

    def conditional_expectation(self, f, x):
        """Estimate ``E[f(Y) | X = x]``; ``f`` is a callable on ``Y`` rows or an array of ``f(y_i)``."""
        check_is_fitted(self, "factor_")
        vals = np.asarray(f(self.Y_) if callable(f) else f, dtype=np.float64)
        if vals.shape[0] != self.n_samples_:
            raise ValueError("f values must have one entry per training sample")
        return self.embed_weights(x) @ vals

    def predict(self, X):
        """Conditional mean of ``Y`` (the expectation of the identity)."""
        out = self.conditional_expectation(self.Y_, X)
        return out[..., 0] if self.Y_.shape[1] == 1 else out


CmeModel = ConditionalMeanEmbedding


def fit(points_x, points_y, kernel_x, lam, kernel_y=None):
    return ConditionalMeanEmbedding(kernel=kernel_x, lam=lam, output_kernel=kernel_y).fit(points_x, points_y)


def embed_weights(model, x):
    return model.embed_weights(x)


def conditional_expectation(model, f, x):
    return model.conditional_expectation(f, x)


@dataclass(frozen=True)
class GaussianConditionalOracle:
    """``Y = m(X) + noise_sd * N(0, 1)`` with a gaussian output kernel of width ``output_bandwidth``.

    The output kernel is ``exp(-(y - y')^2 / (2 output_bandwidth^2))``.
    """

    mean_fn: object = None
    noise_sd: float = 0.2
    output_bandwidth: float = 0.5

    def __post_init__(self):
        check_positive(self.noise_sd, "noise_sd")
        check_positive(self.output_bandwidth, "output_bandwidth")

    def mean(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.mean_fn is None:
            return np.sin(2 * np.pi * x)
        return np.asarray(self.mean_fn(x), dtype=np.float64)

    @property
    def output_kernel(self):
        return KernelSpec("gaussian", bandwidth=self.output_bandwidth)

    def sample(self, n, rng):
        x = rng.uniform(0.0, 1.0, size=n)
        y = self.mean(x) + self.noise_sd * rng.standard_normal(n)
        return x, y


def oracle_embedding_value(oracle, x, y):
    """``mu_{Y|x}(y)`` in closed form."""
    s2, l2 = oracle.noise_sd**2, oracle.output_bandwidth**2
    diff = np.asarray(y, dtype=np.float64) - oracle.mean(x)
    return math.sqrt(l2 / (l2 + s2)) * np.exp(-(diff**2) / (2 * (l2 + s2)))


def oracle_embedding_sqnorm(oracle):
    """``|mu_{Y|x}|^2``; independent of ``x`` for homoscedastic noise."""
    s2, l2 = oracle.noise_sd**2, oracle.output_bandwidth**2
    return math.sqrt(l2 / (l2 + 2 * s2))


def rkhs_error(model, oracle, x):
    """``|mu_hat_{Y|x} - mu_{Y|x}|`` in the output RKHS for each query point."""
    check_is_fitted(model, "factor_")
    if model.Y_.shape[1] != 1:
        raise ValueError("the gaussian oracle needs scalar outputs")
    xq = np.atleast_1d(np.asarray(x, dtype=np.float64))
    W = model.embed_weights(xq.reshape(-1, 1))
    lk = model._output_kernel()
    if not (isinstance(lk, KernelSpec) and lk.family == "gaussian" and lk.scale == 1.0
            and math.isclose(lk.bandwidth, oracle.output_bandwidth, rel_tol=1e-12)):
        raise ValueError("model output kernel must be the oracle's unit-scale gaussian")
    y = model.Y_[:, 0]
    L = model.output_gram_
    quad = np.einsum("mi,ij,mj->m", W, L, W)
    cross = np.array([w @ oracle_embedding_value(oracle, xi, y) for w, xi in zip(W, xq)])
    sq = quad - 2 * cross + oracle_embedding_sqnorm(oracle)
    if np.any(sq < -1e-10):
        warnings.warn(f"negative squared error {sq.min():.3e} clipped to 0", RuntimeWarning, stacklevel=2)
    err = np.sqrt(np.clip(sq, 0.0, None))
    return err if np.ndim(x) else float(err[0])


def lambda_schedule(n, alpha, beta, p, r=1.1, c0=1.0):
    """``c0 * ((log n)^r / n)^(1 / max(alpha, beta + p))``."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if not r > 1:
        raise ValueError("r must be > 1")
    check_positive(c0, "c0")
    return c0 * (math.log(n) ** r / n) ** (1.0 / max(alpha, beta + p))


def theoretical_rate(alpha, beta, p, gamma):
    """Exponent of ``n / log^r n`` in the gamma-norm learning rate."""
    if not 0 <= gamma < beta:
        raise ValueError("need 0 <= gamma < beta")
    return (beta - gamma) / (2 * max(alpha, beta + p))
