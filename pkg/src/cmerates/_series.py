"""Infinite sums over the positive integers with an explicit tail budget.

The partial sum runs to ``N`` and the remainder is replaced by the midpoint
integral ``int_{N+1/2}^inf f``.  The error of that replacement is of order
``|f'(N + 1/2)| / 24``; ``N`` doubles until that estimate, relative to the
total, is below the budget.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .exceptions import NumericError

TAIL_TOL = 1e-10
MAX_TERMS = 200_000


@dataclass(frozen=True)
class SeriesSum:
    value: float
    n_terms: int
    tail: float
    error_bound: float


def tail_integral(f, start):
    """``int_start^inf f(x) dx`` through the substitution ``x = 1/u``."""
    if start <= 0:
        raise ValueError("start must be positive")

    def g(u):
        return f(1.0 / u) / (u * u) if u > 0 else 0.0

    value, _ = quad(g, 0.0, 1.0 / start, limit=200, epsabs=1e-15, epsrel=1e-12)
    return float(value)


def _tail_estimate(f, a):
    # crude magnitude of the remainder, only used to scale the budget
    return tail_integral(lambda x: float(f(np.array([x]))[0]), a)


def series_sum(f, *, tail_tol=TAIL_TOL, min_terms=1024, max_terms=MAX_TERMS):
    """Sum ``f(1) + f(2) + ...`` for a smooth, eventually monotone summand.

    ``f`` must accept float arrays.  ``tail_tol`` is relative to the total.
    Raises :class:`NumericError` when even ``max_terms`` leaves a correction
    error above the budget.
    """
    n = int(min(max(min_terms, 16), max_terms))
    while True:
        idx = np.arange(1, n + 1, dtype=np.float64)
        head = float(np.sum(f(idx)))
        a = n + 0.5
        h = 1e-3 * a
        slope = abs(float(f(np.array([a + h]))[0] - f(np.array([a - h]))[0])) / (2 * h)
        error = slope / 24.0
        budget = tail_tol * abs(head + _tail_estimate(f, a))
        if error <= budget or n >= max_terms:
            break
        n = min(2 * n, max_terms)
    if error > budget:
        raise NumericError(
            f"series tail correction error {error:.3e} exceeds budget {budget:.1e} at {n} terms"
        )
    tail = tail_integral(lambda x: float(f(np.array([x]))[0]), a)
    return SeriesSum(value=head + tail, n_terms=n, tail=tail, error_bound=error)
