"""Power-law eigenvalues, a Fourier eigenbasis on [0, 1], and a diagonal CME.

Inputs are Uniform[0, 1], so the Fourier functions are exactly orthonormal in
L2 and every bias quantity has a closed series form.  The embedding operator
maps ``mu_i^(beta/2) e_i`` to ``t_i f_i`` with ``t_i = B i^(-t_decay)`` and
``{f_i}`` an orthonormal basis of the output RKHS, so output features are
coordinate vectors in ``{f_i}``.

Series quantities (expected bias, worst-case bias, power-kernel norms) are
summed over all modes with an explicit tail budget.  Sampled quantities use
the first ``n_features`` modes, i.e. the finite-rank kernel
``sum_{i <= n_features} mu_i e_i(x) e_i(x')``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import zeta

from ._series import TAIL_TOL, series_sum
from ._validation import check_points, check_positive
from .exceptions import NumericError
from .spectral import SpectralModel

DEFAULT_GRID_SIZE = 2048
_MAX_PAIRS = 32768
_MAX_PAIRS_FOLDED = 1 << 22


def fourier_basis(x, m):
    """``e_1 = 1, e_2k = sqrt(2) cos(2 pi k x), e_2k+1 = sqrt(2) sin(2 pi k x)`` for ``i <= m``."""
    x = check_points(x, "x")[:, 0]
    out = np.empty((x.shape[0], m))
    out[:, 0] = 1.0
    k = np.arange(1, m // 2 + 1)
    arg = 2 * np.pi * np.outer(x, k)
    out[:, 1::2] = math.sqrt(2) * np.cos(arg)[:, : out[:, 1::2].shape[1]]
    out[:, 2::2] = math.sqrt(2) * np.sin(arg)[:, : out[:, 2::2].shape[1]]
    return out


def default_grid(size=DEFAULT_GRID_SIZE):
    """Equispaced periodic grid ``j / size``; every profile here is 1-periodic."""
    return np.arange(size) / size


@dataclass(frozen=True)
class DiagonalModel:
    p: float = 0.5
    beta: float = 1.0
    B: float = 1.0
    t_decay: float = 0.0
    n_features: int = 256
    tail_tol: float = TAIL_TOL

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if not self.p < self.beta < 2:
            raise ValueError("need p < beta < 2")
        if not self.B > 0:
            raise ValueError("B must be > 0")
        if self.t_decay < 0:
            raise ValueError("t_decay must be >= 0")
        if int(self.n_features) < 1:
            raise ValueError("n_features must be >= 1")

    def mu(self, i):
        return np.asarray(i, dtype=np.float64) ** (-1.0 / self.p)

    def t(self, i):
        return self.B * np.asarray(i, dtype=np.float64) ** (-self.t_decay)

    @property
    def eigenvalues(self):
        return self.mu(np.arange(1, self.n_features + 1))

    @property
    def coefficients(self):
        return self.t(np.arange(1, self.n_features + 1))

    def features(self, x):
        """Coordinates of ``k(x, .)`` in the orthonormal basis ``{mu_i^(1/2) e_i}``."""
        return fourier_basis(x, self.n_features) * np.sqrt(self.eigenvalues)

    def kernel_matrix(self, A, B=None):
        FA = self.features(A)
        FB = FA if B is None else self.features(B)
        return FA @ FB.T

    def spectral_model(self, n_modes=None):
        m = self.n_features if n_modes is None else int(n_modes)
        return SpectralModel(eigenvalues=self.mu(np.arange(1, m + 1)), basis=fourier_basis)

    def kalpha_sup_sq(self, alpha):
        """``sup_x sum_i mu_i^alpha e_i(x)^2`` over all modes (attained at ``x = 0``)."""
        q = alpha / self.p
        if q <= 1:
            raise ValueError("power kernel is unbounded unless alpha > p")
        return 1.0 + 2.0 * 2.0 ** (-q) * float(zeta(q))


@dataclass(frozen=True)
class FeatureSample:
    x: np.ndarray
    ell: np.ndarray
    noise: np.ndarray
    R: float
    V_diag: np.ndarray
    seed: int

    @property
    def n(self):
        return self.x.shape[0]


def _check_lam(lam, allow_zero=False):
    return check_positive(lam, "lam", strict=not allow_zero)


def true_embedding(m, x, lam=None):
    """Output-feature coordinates of the embedding at ``x``, optionally regularized."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    idx = np.arange(1, m.n_features + 1)
    mu = m.mu(idx)
    coef = m.t(idx) * mu ** (m.beta / 2) * fourier_basis([x], m.n_features)[0]
    if lam is None:
        return coef
    lam = _check_lam(lam, allow_zero=True)
    return mu / (mu + lam) * coef


def _bias_weight(m, lam):
    """Per-mode weight ``(lam / (mu_i + lam))^2 t_i^2 mu_i^beta`` as a function of index."""
    def w(i):
        mu = m.mu(i)
        return (lam / (mu + lam)) ** 2 * m.t(i) ** 2 * mu**m.beta
    return w


def expected_bias(m, lam, truncate=False):
    """``E_X |mu^lam_{Y|X} - mu_{Y|X}|^2``, over all modes or the first ``n_features``."""
    lam = _check_lam(lam)
    if truncate:
        return float(_bias_weight(m, lam)(np.arange(1, m.n_features + 1)).sum())
    res = series_sum(_bias_weight(m, lam), tail_tol=m.tail_tol, min_terms=8 * int(lam ** (-m.p)) + 1024)
    return res.value


def expected_bias_constant(m):
    """``D`` with ``expected_bias <= B^2 D lam^(beta - p)`` for constant coefficients."""
    return m.beta / (m.beta - m.p)


@dataclass(frozen=True)
class WorstCaseProfile:
    grid: np.ndarray
    values: np.ndarray
    n_pairs: int
    tail_bound: float

    @property
    def sup(self):
        return float(np.sqrt(self.values.max()))


def _fourier_square_profile(w, grid, mean, knee, folded):
    """``sum_i w_i e_i(x)^2`` on ``grid`` given ``mean = sum_i w_i``.

    Uses ``e_2k^2 = 1 + cos(4 pi k x)`` and ``e_2k+1^2 = 1 - cos(4 pi k x)``:
    the profile is ``mean`` plus a cosine series with coefficients
    ``w_2k - w_2k+1``.  Past the knee ``w`` is decreasing and the neglected
    cosine tail is at most ``w(2K + 2)``.  On the periodic grid ``j / G`` the
    frequencies alias exactly, so coefficients are folded mod ``G`` and summed
    with one FFT.
    """
    x = check_points(grid, "grid")[:, 0]
    if np.any((x < 0) | (x > 1)):
        raise ValueError("grid must lie in [0, 1]")
    cap = _MAX_PAIRS_FOLDED if folded else _MAX_PAIRS
    budget = 1e-10 * abs(mean) if folded else 1e-8 * abs(mean)
    K = 1024
    while K < cap and (K < 2 * knee or w(np.array([2.0 * K + 2]))[0] > budget):
        K *= 2
    k = np.arange(1, K + 1, dtype=np.float64)
    d = w(2 * k) - w(2 * k + 1)
    if folded:
        G = x.shape[0]
        spec = np.bincount((2 * np.arange(1, K + 1)) % G, weights=d, minlength=G)
        vals = mean + G * np.fft.ifft(spec).real
    else:
        vals = np.full(x.shape[0], mean)
        for start in range(0, K, 4096):
            kk = k[start:start + 4096]
            vals += np.cos(4 * np.pi * np.outer(x, kk)) @ d[start:start + 4096]
    tail = float(w(np.array([2.0 * K + 2]))[0])
    return vals, K, tail


def worst_case_profile(m, lam, grid=None, grid_size=DEFAULT_GRID_SIZE, truncate=False):
    """Squared bias norm over ``grid``; ``None`` uses the periodic grid of ``grid_size`` points."""
    lam = _check_lam(lam)
    folded = grid is None
    grid = default_grid(grid_size) if folded else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    w = _bias_weight(m, lam)
    if truncate:
        wi = w(np.arange(1, m.n_features + 1))
        vals = fourier_basis(grid, m.n_features) ** 2 @ wi
        return WorstCaseProfile(grid=grid, values=vals, n_pairs=m.n_features // 2, tail_bound=0.0)
    knee = lam ** (-m.p)
    mean = series_sum(w, tail_tol=m.tail_tol, min_terms=8 * int(knee) + 1024).value
    vals, K, tail = _fourier_square_profile(w, grid, mean, knee, folded)
    return WorstCaseProfile(grid=grid, values=vals, n_pairs=K, tail_bound=tail)


def worst_case_bias(m, lam, grid=None, grid_size=DEFAULT_GRID_SIZE, truncate=False):
    """``M(lam)``: grid maximum of ``|mu_{Y|x} - mu^lam_{Y|x}|`` in the output RKHS."""
    return worst_case_profile(m, lam, grid, grid_size, truncate).sup


def _sup_over_modes(m, lam, exponent, truncate=False):
    """``sup_i lam mu_i^exponent t_i / (mu_i + lam)``.

    With ``t_i = B mu_i^(t_decay p)`` the map ``mu -> mu^e / (mu + lam)``,
    ``e = exponent + t_decay p``, is unimodal with peak at ``mu = lam e / (1 - e)``,
    so only the two indices around the peak matter.
    """
    e = exponent + m.t_decay * m.p
    last = m.n_features if truncate else np.inf
    if e >= 1:
        cands = np.array([1.0])
    else:
        i_star = (lam * e / (1 - e)) ** (-m.p)
        cands = np.unique(np.clip([math.floor(i_star), math.ceil(i_star)], 1, last)).astype(float)
    mu = m.mu(cands)
    vals = lam * mu**exponent * m.t(cands) / (mu + lam)
    return float(vals.max())


def second_moment_norm(m, lam, truncate=False):
    """``M_lam = |E[(mu - mu^lam) (x) (mu - mu^lam)]| = sup_i (lam mu_i^(beta/2) t_i / (mu_i + lam))^2``."""
    lam = _check_lam(lam)
    return _sup_over_modes(m, lam, m.beta / 2, truncate) ** 2


def operator_bias_gamma(m, lam, gamma, truncate=False):
    """``|C^lam - C|_gamma = sup_i lam mu_i^((beta - gamma)/2) |t_i| / (mu_i + lam)``."""
    lam = _check_lam(lam)
    if not 0 <= gamma < m.beta:
        raise ValueError("need 0 <= gamma < beta")
    return _sup_over_modes(m, lam, (m.beta - gamma) / 2, truncate)


def default_noise(m, level=0.01):
    """Noise variances ``level * i^-2`` and the smallest radius that needs no clipping."""
    V = level * np.arange(1, m.n_features + 1, dtype=np.float64) ** -2.0
    return math.sqrt(3.0 * V.sum()), V


def sample_features(m, n, R=None, V_diag=None, seed=0):
    """Draw ``x ~ Uniform[0, 1]`` and noisy output features ``ell = mu_{Y|x} + eps``.

    Noise coordinates are independent and uniform with variances ``V_diag``;
    a draw whose norm exceeds ``R`` is shrunk radially onto the sphere of
    radius ``R``, which keeps the covariance below ``diag(V_diag)``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    R0, V0 = default_noise(m)
    V = V0 if V_diag is None else np.asarray(V_diag, dtype=np.float64)
    R = R0 if R is None and V_diag is None else R
    if R is None:
        R = math.sqrt(3.0 * V.sum())
    R = check_positive(R, "R", strict=not np.all(V == 0))
    if V.shape != (m.n_features,) or np.any(V < 0):
        raise ValueError(f"V_diag must be {m.n_features} nonnegative variances")
    if V.sum() > R**2:
        raise ValueError("noise variances sum past R^2; bounded noise cannot carry that covariance")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=n)
    half = np.sqrt(3.0 * V)
    eps = rng.uniform(-1.0, 1.0, size=(n, m.n_features)) * half
    norms = np.linalg.norm(eps, axis=1)
    shrink = np.minimum(1.0, R / np.maximum(norms, np.finfo(float).tiny))
    eps *= shrink[:, None]
    basis = fourier_basis(x, m.n_features)
    truth = basis * (m.coefficients * m.eigenvalues ** (m.beta / 2))
    return FeatureSample(x=x, ell=truth + eps, noise=eps, R=R, V_diag=V, seed=seed)


def empirical_cme_matrix(fs, m, lam):
    """``C_YX (C_XX + lam)^-1`` from a sample, in the bases ``{mu_i^(1/2) e_i} -> {f_i}``."""
    lam = _check_lam(lam)
    Phi = m.features(fs.x)
    n = fs.n
    Cxx = Phi.T @ Phi / n
    Cyx = fs.ell.T @ Phi / n
    A = Cxx + lam * np.eye(m.n_features)
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky failed; condition number {np.linalg.cond(A):.3e}") from exc
    return linalg.cho_solve(factor, Cyx.T).T


def regularized_cme_matrix(m, lam):
    """Population ``C_YX (C_XX + lam)^-1`` in the same bases as :func:`empirical_cme_matrix`."""
    lam = _check_lam(lam)
    mu = m.eigenvalues
    return np.diag(m.coefficients * mu ** ((m.beta + 1) / 2) / (mu + lam))


def gamma_norm_error(m, C_hat, gamma, target="true_cme", lam=None):
    """Spectral norm of ``C_hat o I*_{1,gamma}`` minus the target in the gamma-norm.

    ``target`` is ``"true_cme"`` or ``"regularized"`` (which needs ``lam``).
    Everything lives on the first ``n_features`` modes.
    """
    C_hat = np.asarray(C_hat, dtype=np.float64)
    mu = m.eigenvalues
    if target == "true_cme":
        if not 0 <= gamma < m.beta:
            raise ValueError("need 0 <= gamma < beta")
        tgt = m.coefficients * mu ** ((m.beta - gamma) / 2)
    elif target == "regularized":
        if gamma < 0:
            raise ValueError("gamma must be >= 0")
        lam = _check_lam(lam)
        tgt = mu / (mu + lam) * m.coefficients * mu ** ((m.beta - gamma) / 2)
    else:
        raise ValueError(f"unknown target {target!r}")
    diff = C_hat * mu ** ((1 - gamma) / 2) - np.diag(tgt)
    return float(np.linalg.norm(diff, 2))


def sobolev_norm(T, mu, beta, gamma, method="adjoint"):
    """``|T|_{beta,gamma}`` for a matrix ``T`` from ``{mu_i^(beta/2) e_i}`` coordinates.

    ``"adjoint"`` composes with the adjoint of the embedding into the gamma
    space; ``"covariance"`` multiplies by the square root of ``I* I``.  The two
    agree for any ``T``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if not 0 <= gamma < beta:
        raise ValueError("need 0 <= gamma < beta")
    embed = np.diag(mu ** ((beta - gamma) / 2))
    if method == "adjoint":
        return float(np.linalg.norm(T @ embed.T, 2))
    if method == "covariance":
        w, V = np.linalg.eigh(embed.T @ embed)
        root = (V * np.sqrt(np.clip(w, 0, None))) @ V.T
        return float(np.linalg.norm(T @ root, 2))
    raise ValueError(f"unknown method {method!r}")


def conditioning_coefficients(m, f):
    """Coordinates of ``x -> E[f(Y) | X = x]`` in the basis ``{mu_i^(beta/2) e_i}``."""
    f = np.asarray(f, dtype=np.float64)
    return m.coefficients * f


def conditioning_norm(m):
    """``sup_{|f| <= 1} |E[f(Y) | X = .]|_{H^beta}``, from the coordinate map's singular values."""
    M = np.column_stack([conditioning_coefficients(m, e) for e in np.eye(m.n_features)])
    return float(np.linalg.norm(M, 2))
