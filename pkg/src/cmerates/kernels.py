"""Positive-definite kernels and Gram assembly.

Gaussian kernels use ``scale * exp(-|x - x'|^2 / (2 bandwidth^2))``.  A kernel
written as ``exp(-|x - y|^2 / s^2)`` corresponds to ``bandwidth = s / sqrt(2)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_point, check_points

FAMILIES = ("gaussian", "laplacian", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with its parameters.

    ``bandwidth`` is in the length units of the input domain and is ignored by
    the polynomial family, which evaluates ``scale * (<x, x'> + 1) ** degree``.
    The laplacian family uses the Euclidean distance.
    """

    family: str = "gaussian"
    bandwidth: float = 1.0
    degree: int = 2
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.family == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError("degree must be a positive integer")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return {"family": self.family, "bandwidth": self.bandwidth, "degree": self.degree, "scale": self.scale}

    def __call__(self, A, B=None):
        """Cross-kernel matrix between two point sets (``B`` defaults to ``A``)."""
        A = check_points(A, "A")
        B = A if B is None else check_points(B, "B")
        if A.shape[1] != B.shape[1]:
            raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        if self.family == "polynomial":
            return self.scale * (A @ B.T + 1.0) ** int(self.degree)
        if self.family == "gaussian":
            d2 = cdist(A, B, "sqeuclidean")
            return self.scale * np.exp(-d2 / (2.0 * self.bandwidth**2))
        d = cdist(A, B, "euclidean")
        return self.scale * np.exp(-d / self.bandwidth)

    @property
    def diagonal_is_constant(self):
        return self.family in ("gaussian", "laplacian")


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    points: np.ndarray
    kernel: KernelSpec

    @property
    def n(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def check(self, sym_tol=1e-12, psd_tol=1e-9):
        """Raise ``ValueError`` unless the matrix is symmetric and numerically PSD."""
        K = self.entries
        scale = max(np.abs(K).max(), np.finfo(float).tiny)
        if np.abs(K - K.T).max() > sym_tol * scale:
            raise ValueError("Gram matrix is not symmetric")
        w = np.linalg.eigvalsh(K)
        if w[0] < -psd_tol * max(w[-1], 0.0):
            raise ValueError(f"Gram matrix is not PSD: smallest eigenvalue {w[0]:.3e}")
        return self


def eval_kernel(spec, x, x_prime):
    x = check_point(x, name="x")
    x_prime = check_point(x_prime, dim=x.shape[0], name="x_prime")
    return float(spec(x[None, :], x_prime[None, :])[0, 0])


def gram(spec, points):
    pts = check_points(points)
    return GramMatrix(entries=spec(pts), points=pts, kernel=spec)


def kernel_vector(spec, points, x):
    pts = check_points(points)
    x = check_point(x, dim=pts.shape[1])
    return spec(pts, x[None, :])[:, 0]
