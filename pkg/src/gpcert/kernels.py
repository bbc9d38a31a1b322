"""Exponentiated-quadratic kernel primitives shared by the models and the bounds.

Everything downstream assumes a single isotropic lengthscale.  The certification
machinery relies on the product structure exp(-||a-b||^2/(2l^2)) =
prod_d exp(-(a_d-b_d)^2/(2l^2)), so anisotropic or non-EQ kernels are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class NotPositiveDefiniteError(Exception):
    """Raised when a Gram matrix cannot be factorized even after jitter escalation."""


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic EQ kernel k(a, b) = variance * exp(-||a-b||^2 / (2 lengthscale^2))."""

    variance: float
    lengthscale: float

    def __post_init__(self):
        v, l = self.variance, self.lengthscale
        if not (np.isscalar(v) and np.isfinite(v) and v > 0):
            raise ValueError(f"variance must be a finite positive scalar, got {v!r}")
        if not (np.isscalar(l) and np.isfinite(l) and l > 0):
            raise ValueError(f"lengthscale must be a finite positive scalar, got {l!r}")


def as_points(x, name: str = "points") -> np.ndarray:
    """Coerce to a finite 2-D float array of shape (n, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n, d), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (len(a), len(b)).

    Computed from the expansion ||a-b||^2 = ||a||^2 - 2 a.b + ||b||^2 and
    clipped at zero; cancellation can otherwise leave tiny negatives.
    """
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = aa - 2.0 * (a @ b.T) + bb
    return np.maximum(d2, 0.0)


def eq_kernel(a, b, spec: KernelSpec) -> float:
    """Kernel value between two single points."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"point dimensions differ: {a.shape} vs {b.shape}")
    d2 = float(np.sum((a - b) ** 2))
    return spec.variance * float(np.exp(-d2 / (2.0 * spec.lengthscale**2)))


def eq_kernel_grad(a, b, spec: KernelSpec) -> np.ndarray:
    """Gradient of eq_kernel(a, b) with respect to the first argument.

    d k / d a = -(a - b) / l^2 * k(a, b).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return -(a - b) / spec.lengthscale**2 * eq_kernel(a, b, spec)


def cross_covariance(a, b, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix K[i, j] = k(a_i, b_j)."""
    a = as_points(a, "a")
    b = as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return spec.variance * np.exp(-sq_distances(a, b) / (2.0 * spec.lengthscale**2))


def solve_psd(mat: np.ndarray, rhs: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Solve (mat + jitter*I) x = rhs for a symmetric PSD matrix.

    Uses a Cholesky factorization, never an explicit inverse.  If the
    factorization fails the jitter escalates by decades up to 1e-4 times the
    mean diagonal; past that the matrix is reported as not positive definite.
    """
    mat = np.asarray(mat, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"matrix must be square, got {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")

    scale = max(float(np.trace(mat)) / n, np.finfo(float).tiny)
    ceiling = 1e-4 * scale
    j = jitter
    while True:
        try:
            c, low = cho_factor(mat + j * np.eye(n), lower=True)
            return cho_solve((c, low), rhs)
        except np.linalg.LinAlgError:
            pass
        j = max(j * 10.0, 1e-12 * scale)
        if j > ceiling:
            raise NotPositiveDefiniteError(
                f"Cholesky failed with jitter escalated past {ceiling:.3e}"
            )
