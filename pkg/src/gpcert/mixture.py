"""Rigorous upper bounds on the supremum of signed EQ mixtures.

A signed mixture is F(x) = sum_i w_i exp(-||x - c_i||^2 / (2 l^2)) with one
shared lengthscale.  The bound proceeds in three sound steps:

1. pair_negatives: each negative component is either dropped (only lowers F)
   or absorbed with a nearby positive component into a single dominating
   positive EQ, leaving a nonnegative mixture.
2. reduce_pca: project the centers onto a k-dimensional affine subspace.
   Projection can only shrink center-to-point distances, so a nonnegative
   mixture evaluated at projected points dominates the original everywhere.
3. grid_upper_bound: the supremum of a nonnegative isotropic mixture is
   attained inside the convex hull of its centers and is a stationary point,
   so the max over a covering grid, divided by exp(-r^2/(2 l^2)) with r the
   covering radius, dominates the true supremum.

Every step only ever over-estimates, so the composition is a certified upper
bound for the original signed mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse.linalg import svds

from .kernels import as_points, sq_distances

# below this many matrix elements a dense SVD beats the iterative one
_TRUNCATED_SVD_MIN_ELEMENTS = 200_000


@dataclass
class EQMixture:
    """Signed mixture of isotropic EQ bumps with a shared lengthscale."""

    centers: np.ndarray
    weights: np.ndarray
    lengthscale: float

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.ndim != 2:
            raise ValueError(f"centers must be 2-D (m, d), got shape {self.centers.shape}")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers contain non-finite values")
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if len(self.weights) != len(self.centers):
            raise ValueError(f"{len(self.centers)} centers but {len(self.weights)} weights")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite values")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")

    @property
    def dims(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return len(self.weights)

    def evaluate(self, points) -> np.ndarray:
        """Mixture values at the given points (works for 0-dimensional centers too)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.dims != 0:
            pts = pts[None, :]
        if self.dims == 0:
            n = 1 if pts.ndim <= 1 else len(pts)
            return np.full(n, float(np.sum(self.weights)))
        gram = np.exp(-sq_distances(pts, self.centers) / (2.0 * self.lengthscale**2))
        return gram @ self.weights


@dataclass(frozen=True)
class GridBoundConfig:
    """Knobs for the mixture bound; defaults match the reported experiments."""

    pca_dims: int = 2
    grid_points_per_axis: int = 64
    safety_inflation: float = 1e-9
    pair_tolerance: float = 0.0


def find_pair_peak(
    pos_weight: float,
    neg_weight: float,
    delta: float,
    lengthscale: float,
    safety_inflation: float = 1e-9,
):
    """Peak of f(t) = P exp(-t^2/(2l^2)) - N exp(-(t-delta)^2/(2l^2)) on the line.

    Returns (x0, y0) such that f(t) <= y0 exp(-(t-x0)^2/(2l^2)) for every t,
    or None when f <= 0 everywhere (the pair is dominated and can be dropped).

    For delta > 0 the global maximum sits at the unique root t* < 0 of

        h(t) = log(P/N) + log(-t) - log(delta - t) + (delta^2 - 2 t delta)/(2 l^2),

    which is strictly decreasing on (-inf, 0) with h -> +inf on the left and
    h -> -inf at zero, so bisection is exact.  The returned y0 is inflated by
    a relative safety_inflation to absorb the last float rounding.
    """
    p, nw, l = float(pos_weight), float(neg_weight), float(lengthscale)
    if p <= 0:
        raise ValueError(f"positive weight must be > 0, got {p}")
    if nw < 0:
        raise ValueError(f"negative weight magnitude must be >= 0, got {nw}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")

    if nw == 0.0:
        return 0.0, p * (1.0 + safety_inflation)
    if delta == 0.0:
        # co-located bumps collapse to a single EQ of weight P - N
        if p <= nw:
            return None
        return 0.0, (p - nw) * (1.0 + safety_inflation)

    log_ratio = math.log(p / nw)
    inv2l2 = 1.0 / (2.0 * l * l)

    def h(t):
        return log_ratio + math.log(-t) - math.log(delta - t) + (delta * delta - 2.0 * t * delta) * inv2l2

    hi = -min(delta, l) * 1e-3
    while h(hi) > 0.0:
        hi *= 0.5
        if hi > -1e-300:
            # peak indistinguishable from zero
            hi = -1e-300
            break
    lo = -max(delta, l)
    while h(lo) < 0.0:
        lo *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    x0 = 0.5 * (lo + hi)
    y0 = p * math.exp(-x0 * x0 * inv2l2) - nw * math.exp(-((x0 - delta) ** 2) * inv2l2)
    if y0 <= 0.0:
        # can only occur when the peak collapses at the float level
        return None
    return x0, y0 * (1.0 + safety_inflation)


def pair_negatives(mix: EQMixture, tol: float = 0.0, safety_inflation: float = 1e-9) -> EQMixture:
    """Replace every negative component, yielding a pointwise dominating
    nonnegative mixture.

    Negatives are processed by decreasing magnitude.  Each one is matched with
    the nearest positive component not yet used in this pass; the pair is
    replaced with the single EQ from find_pair_peak placed on the line through
    both centers (beyond the positive center, away from the negative one).
    Negatives with no partner left, or with magnitude <= tol, are dropped,
    which can only raise the mixture.
    """
    keep = mix.weights != 0.0
    centers, weights = mix.centers[keep], mix.weights[keep]
    pos_idx = [i for i in range(len(weights)) if weights[i] > 0]
    neg_idx = [i for i in range(len(weights)) if weights[i] < 0]
    neg_idx.sort(key=lambda i: (-abs(weights[i]), i))

    out_centers = []
    out_weights = []
    available = list(pos_idx)
    for ni in neg_idx:
        mag = -weights[ni]
        if mag <= tol or not available:
            continue  # dropped: sound, the component is nonpositive everywhere
        dists = [float(np.linalg.norm(centers[pi] - centers[ni])) for pi in available]
        pick = int(np.argmin(dists))
        pi = available.pop(pick)
        delta = dists[pick]
        peak = find_pair_peak(weights[pi], mag, delta, mix.lengthscale, safety_inflation)
        if peak is None:
            continue  # pair sums to <= 0 everywhere: drop both
        x0, y0 = peak
        if delta > 0:
            direction = (centers[ni] - centers[pi]) / delta
        else:
            direction = np.zeros(mix.dims)
        out_centers.append(centers[pi] + x0 * direction)
        out_weights.append(y0)

    for pi in available:
        out_centers.append(centers[pi])
        out_weights.append(weights[pi])

    if not out_weights:
        return EQMixture(
            centers=np.zeros((0, mix.dims)), weights=np.zeros(0), lengthscale=mix.lengthscale
        )
    return EQMixture(
        centers=np.asarray(out_centers), weights=np.asarray(out_weights), lengthscale=mix.lengthscale
    )


class PcaMixture(NamedTuple):
    """Projected mixture together with the affine map that produced it."""

    mixture: EQMixture
    mean: np.ndarray
    axes: np.ndarray  # (k, d) orthonormal rows

    def project(self, points) -> np.ndarray:
        pts = as_points(points, "points")
        return (pts - self.mean[None, :]) @ self.axes.T


def pca_axes(centers: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and top-k orthonormal PCA axes (rows) of a center cloud.

    Independent of mixture weights, so one computation serves every mixture
    sharing the same centers.  If the SVD fails or is rank-deficient, the k
    coordinate axes with the greatest center variance serve as the fallback
    (any orthonormal set is sound; PCA just tends to be tightest).
    """
    centers = as_points(centers, "centers")
    d = centers.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if len(centers) == 0:
        return np.zeros(d), np.eye(k, d)
    mean = centers.mean(axis=0)
    centered = centers - mean[None, :]
    axes = None
    if centered.size >= _TRUNCATED_SVD_MIN_ELEMENTS and k < min(centered.shape) - 1:
        try:
            # fixed start vector keeps the iteration deterministic
            v0 = np.linspace(1.0, 2.0, min(centered.shape))
            _, _, vt = svds(centered, k=k, v0=v0)
            cand = vt[::-1].copy()  # svds sorts singular values ascending
            if np.allclose(cand @ cand.T, np.eye(k), atol=1e-8):
                axes = cand
        except Exception:
            axes = None
    if axes is None:
        try:
            _, _, vt = np.linalg.svd(centered, full_matrices=False)
            axes = vt[:k] if len(vt) >= k else None
        except np.linalg.LinAlgError:
            axes = None
    if axes is None or axes.shape[0] < k:
        order = np.argsort(-centered.var(axis=0), kind="stable")
        axes = np.eye(d)[order[:k]]
    return mean, axes


def reduce_pca(mix: EQMixture, k: int, axes: tuple[np.ndarray, np.ndarray] | None = None) -> PcaMixture:
    """Project the centers of a nonnegative mixture onto its top-k PCA subspace.

    Orthogonal projection never increases distances, so for every x the
    projected mixture evaluated at the projection of x dominates the original
    mixture at x.  Requires all weights >= 0.  `axes` may carry a precomputed
    (mean, axes) pair from pca_axes; the rows must be orthonormal but need not
    derive from these exact centers.
    """
    if np.any(mix.weights < 0):
        raise ValueError("reduce_pca requires a nonnegative mixture; run pair_negatives first")
    d = mix.dims
    if axes is None:
        if not 1 <= k <= d:
            raise ValueError(f"k must be in [1, {d}], got {k}")
        mean, rows = pca_axes(mix.centers, k) if len(mix) else (np.zeros(d), np.eye(k, d))
    else:
        mean, rows = axes
        mean = np.asarray(mean, dtype=float)
        rows = np.asarray(rows, dtype=float)
        if rows.shape != (k, d) or mean.shape != (d,):
            raise ValueError(f"axes shapes {rows.shape}/{mean.shape} do not match k={k}, d={d}")
        gram = rows @ rows.T
        if not np.allclose(gram, np.eye(k), atol=1e-8):
            raise ValueError("projection rows are not orthonormal")
    projected = (mix.centers - mean[None, :]) @ rows.T
    return PcaMixture(
        EQMixture(centers=projected, weights=mix.weights.copy(), lengthscale=mix.lengthscale),
        mean=mean,
        axes=rows,
    )


def grid_upper_bound(mix: EQMixture, box_lo, box_hi, grid_points_per_axis: int = 64) -> float:
    """Certified supremum bound for a nonnegative mixture via a corrected grid max.

    The grid spans [box_lo, box_hi] (which must contain every center) with
    grid_points_per_axis nodes per axis inclusive of the faces.  Any point of
    the box lies within r = 0.5 sqrt(sum_j spacing_j^2) of a node, and at the
    (interior, stationary) supremum of a nonnegative mixture the value at the
    nearest node is at least sup * exp(-r^2/(2 l^2)); dividing the grid max by
    that factor gives the bound.
    """
    if np.any(mix.weights < 0):
        raise ValueError("grid bound requires a nonnegative mixture")
    if len(mix) == 0 or float(np.sum(mix.weights)) == 0.0:
        return 0.0
    if grid_points_per_axis < 2:
        raise ValueError("need at least 2 grid points per axis")
    lo = np.asarray(box_lo, dtype=float).ravel()
    hi = np.asarray(box_hi, dtype=float).ravel()
    d = mix.dims
    if lo.shape != (d,) or hi.shape != (d,):
        raise ValueError(f"box must have {d} coordinates per corner")
    if np.any(mix.centers < lo[None, :] - 1e-12) or np.any(mix.centers > hi[None, :] + 1e-12):
        raise ValueError("box does not contain all centers")
    if d == 0:
        return float(np.sum(mix.weights))

    axes = [np.linspace(lo[j], hi[j], grid_points_per_axis) for j in range(d)]
    spacing = (hi - lo) / (grid_points_per_axis - 1)
    r2 = 0.25 * float(np.sum(spacing**2))
    correction = math.exp(-r2 / (2.0 * mix.lengthscale**2))

    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([mm.ravel() for mm in mesh], axis=1)
    best = -np.inf
    chunk = max(1, int(2e6) // max(len(mix), 1))
    for start in range(0, len(grid), chunk):
        vals = mix.evaluate(grid[start : start + chunk])
        best = max(best, float(np.max(vals)))
    return best / correction


def upper_bound_mixture(
    mix: EQMixture,
    cfg: GridBoundConfig = GridBoundConfig(),
    axes: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Upper bound on sup_x F(x) for a signed mixture over all of R^d.

    Composition of the three sound steps; returns 0 when nothing positive
    survives the pairing stage.  `axes` optionally supplies precomputed
    projection rows (see pca_axes); callers bounding many weightings of the
    same centers share one set this way.
    """
    keep = mix.weights != 0.0
    if not np.any(keep):
        return 0.0
    work = EQMixture(mix.centers[keep], mix.weights[keep], mix.lengthscale)
    if np.all(work.weights <= 0):
        return 0.0
    paired = pair_negatives(work, tol=cfg.pair_tolerance, safety_inflation=cfg.safety_inflation)
    if len(paired) == 0:
        return 0.0
    if paired.dims == 0:
        return max(0.0, float(np.sum(paired.weights)))
    k = min(cfg.pca_dims, paired.dims)
    reduced = reduce_pca(paired, k, axes=axes)
    rmix = reduced.mixture
    lo = rmix.centers.min(axis=0)
    hi = rmix.centers.max(axis=0)
    return grid_upper_bound(rmix, lo, hi, cfg.grid_points_per_axis)
