"""Certified per-dimension bounds on latent change and the input-count certificate.

For a latent model fbar(x) = sum_i alpha_i k(c_i, x) on the unit domain, the
bound for dimension d answers: how much can fbar increase when an attacker
rewrites coordinate d and nothing else?  The EQ kernel factorizes over
coordinates, so a move from t0 to t1 along d changes each component by

    alpha_i v [g_i(t1) - g_i(t0)] * (perpendicular factor in (0, 1]),

with g_i(t) = exp(-(t - c_{i,d})^2 / (2 l^2)).  The domain [0, 1] is cut into
slices; for every contiguous slice sequence, closed-form segment bounds on the
per-component 1-D change are composed (enter / cross / exit), negatives are
clamped to zero, and the resulting nonnegative mixture over the remaining
D-1 coordinates is bounded rigorously.  The per-dimension bound is the max
over both travel directions and all sequences.

Decreases of the latent are covered by negating the weights (an increase of
-fbar), so one bound per dimension covers movement toward either class.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .gpc import LatentModel, ThresholdPair
from .mixture import EQMixture, GridBoundConfig, pca_axes, upper_bound_mixture

UNBOUNDED_SAFE = "unbounded-safe"


@dataclass(frozen=True)
class Slicing:
    """Uniform partition of [lo, hi] into count slices."""

    lo: float = 0.0
    hi: float = 1.0
    count: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"bad slice interval [{self.lo}, {self.hi}]")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")

    @property
    def boundaries(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count + 1)


# segment constraint kinds, indexing the last axis of a table
FREE_FREE = 0      # start and finish anywhere inside the slice
FREE_UPPER = 1     # start inside, finish on the upper edge
LOWER_FREE = 2     # start on the lower edge, finish inside
EDGE_EDGE = 3      # cross the whole slice


@dataclass
class SegmentBoundTable:
    """Per-slice, per-center maxima of the 1-D weighted change, all 4 constraints.

    values has shape (slices, centers, 4).  Weights are alpha * variance for
    the forward direction and their negation for the reversed one.
    """

    slicing: Slicing
    values: np.ndarray
    reversed: bool


def segment_bound_1d(weight: float, center: float, lengthscale: float, a: float, b: float, constraint: int) -> float:
    """Closed-form max of weight * (g(t1) - g(t0)) over a <= t0 <= t1 <= b.

    g(t) = exp(-(t - center)^2 / (2 l^2)) is unimodal with peak at the center,
    so each constraint case reduces to evaluating g at the edges and at the
    clamped peak.
    """
    if b < a:
        raise ValueError(f"slice must satisfy a <= b, got [{a}, {b}]")
    table = _segment_table_block(
        np.array([weight]), np.array([center]), lengthscale, np.array([a]), np.array([b])
    )
    return float(table[0, 0, constraint])


def _segment_table_block(weights, centers_d, lengthscale, a, b) -> np.ndarray:
    """Vectorized segment bounds: (len(a), len(centers), 4)."""
    inv = 1.0 / (2.0 * lengthscale**2)
    a = a[:, None]
    b = b[:, None]
    c = centers_d[None, :]
    ga = np.exp(-((a - c) ** 2) * inv)
    gb = np.exp(-((b - c) ** 2) * inv)
    gc = np.exp(-((np.clip(c, a, b) - c) ** 2) * inv)  # g at the clamped peak

    w = weights[None, :]
    pos = w > 0
    out = np.zeros((a.shape[0], c.shape[1], 4))
    # positive weight: chase the peak upward, the worst start is the low edge
    out[..., FREE_FREE] = np.where(pos, w * (gc - ga), -w * (gc - gb))
    out[..., FREE_UPPER] = np.where(pos, w * np.maximum(0.0, gb - ga), -w * (gc - gb))
    out[..., LOWER_FREE] = np.where(pos, w * (gc - ga), -w * np.maximum(0.0, ga - gb))
    out[..., EDGE_EDGE] = np.where(pos, w * (gb - ga), -w * (ga - gb))
    out[:, weights == 0.0, :] = 0.0
    return out


def build_segment_table(model: LatentModel, d_hat: int, slicing: Slicing, reverse: bool = False) -> SegmentBoundTable:
    """Segment bounds for every slice and center along dimension d_hat.

    reverse=True bounds decreases of the latent by negating the weights.
    """
    if not 0 <= d_hat < model.dims:
        raise ValueError(f"dimension {d_hat} out of range for {model.dims}-dim model")
    weights = model.alpha * model.kernel.variance
    if reverse:
        weights = -weights
    bounds = slicing.boundaries
    values = _segment_table_block(
        weights, model.centers[:, d_hat], model.kernel.lengthscale, bounds[:-1], bounds[1:]
    )
    return SegmentBoundTable(slicing=slicing, values=values, reversed=reverse)


def path_weights(table: SegmentBoundTable, start: int, end: int) -> np.ndarray:
    """Per-center bound for a monotone path entering at slice start, leaving at end.

    start == end uses the free/free bound; otherwise the path starts free in
    the first slice, crosses every middle slice edge to edge, and finishes
    free in the last.
    """
    s = table.slicing.count
    if not 0 <= start <= end < s:
        raise ValueError(f"bad sequence [{start}, {end}] for {s} slices")
    if start == end:
        return table.values[start, :, FREE_FREE].copy()
    w = table.values[start, :, FREE_UPPER] + table.values[end, :, LOWER_FREE]
    if end - start > 1:
        w = w + np.sum(table.values[start + 1 : end, :, EDGE_EDGE], axis=0)
    return w


def _sequence_weight_matrix(table: SegmentBoundTable) -> np.ndarray:
    """Composed weights for every contiguous sequence: shape (s, s, centers).

    Entry [i, j] is only meaningful for i <= j.  Built from prefix sums of the
    edge-to-edge column so the whole table costs O(s^2 m).
    """
    v = table.values
    s, m = v.shape[0], v.shape[1]
    prefix = np.zeros((s + 1, m))
    np.cumsum(v[:, :, EDGE_EDGE], axis=0, out=prefix[1:])
    out = np.empty((s, s, m))
    for i in range(s):
        out[i, i] = v[i, :, FREE_FREE]
        if i + 1 < s:
            # middles are slices i+1 .. j-1
            mid = prefix[i + 1 : s] - prefix[i + 1]
            out[i, i + 1 :] = v[i, :, FREE_UPPER][None, :] + mid[: s - i - 1] + v[i + 1 :, :, LOWER_FREE]
    return out


def _perp_centers(model: LatentModel, d_hat: int) -> np.ndarray:
    return np.delete(model.centers, d_hat, axis=1)


def _shared_axes(perp: np.ndarray, cfg: GridBoundConfig):
    """One PCA basis reused by every sequence weighting over the same centers."""
    d = perp.shape[1]
    if d == 0:
        return None
    return pca_axes(perp, min(cfg.pca_dims, d))


def _bound_sequences(
    model: LatentModel,
    d_hat: int,
    slicing: Slicing,
    cfg: GridBoundConfig,
    collect: bool = False,
):
    """Max mixture bound over all sequences and directions for one dimension.

    Returns (best, records); records is a list of (reverse, start, end, bound)
    when collect is set, used by the enhancement pass.
    """
    perp = _perp_centers(model, d_hat)
    l = model.kernel.lengthscale
    axes = _shared_axes(perp, cfg)
    best = 0.0
    records = []
    for reverse in (False, True):
        table = build_segment_table(model, d_hat, slicing, reverse=reverse)
        seqw = _sequence_weight_matrix(table)
        for i in range(slicing.count):
            for j in range(i, slicing.count):
                w = np.maximum(seqw[i, j], 0.0)
                if not np.any(w > 0):
                    bnd = 0.0
                else:
                    bnd = upper_bound_mixture(EQMixture(perp, w, l), cfg, axes=axes)
                if collect:
                    records.append((reverse, i, j, bnd))
                if bnd > best:
                    best = bnd
    return best, records


def bound_dimension(
    model: LatentModel,
    d_hat: int,
    slices: int,
    cfg: GridBoundConfig = GridBoundConfig(),
) -> float:
    """Certified bound on the latent change from rewriting input d_hat alone.

    Covers every start point in the unit domain and both travel directions.
    """
    best, _ = _bound_sequences(model, d_hat, Slicing(0.0, 1.0, slices), cfg)
    return best


@dataclass(frozen=True)
class EnhanceConfig:
    """Refinement pass: re-slice the strongest coarse sequences more finely."""

    top_k: int = 100
    slices_fine: int = 16


def enhance(
    model: LatentModel,
    d_hat: int,
    slices: int,
    enh: EnhanceConfig = EnhanceConfig(),
    cfg: GridBoundConfig = GridBoundConfig(),
) -> float:
    """Tightened per-dimension bound.

    The coarse pass records the bound of every slice sequence.  The top_k
    strongest sequences per direction are re-bounded with slices_fine uniform
    slices spanning just their slab; the refined slab bound is the max over
    all contiguous sub-sequences, clamped by the coarse value (both are sound,
    so the min is too).  Sequences outside the top_k keep their coarse bounds.
    """
    coarse_slicing = Slicing(0.0, 1.0, slices)
    _, records = _bound_sequences(model, d_hat, coarse_slicing, cfg, collect=True)
    boundaries = coarse_slicing.boundaries

    refined_best = 0.0
    for reverse in (False, True):
        dir_records = sorted(
            (r for r in records if r[0] == reverse), key=lambda r: (-r[3], r[1], r[2])
        )
        selected = dir_records[: enh.top_k]
        for _, i, j, coarse_bnd in dir_records[enh.top_k :]:
            refined_best = max(refined_best, coarse_bnd)
        perp = _perp_centers(model, d_hat)
        axes = _shared_axes(perp, cfg)
        for _, i, j, coarse_bnd in selected:
            slab = Slicing(boundaries[i], boundaries[j + 1], enh.slices_fine)
            fine_best = 0.0
            table = build_segment_table(model, d_hat, slab, reverse=reverse)
            seqw = _sequence_weight_matrix(table)
            for a in range(slab.count):
                for b in range(a, slab.count):
                    w = np.maximum(seqw[a, b], 0.0)
                    if np.any(w > 0):
                        fine_best = max(
                            fine_best,
                            upper_bound_mixture(EQMixture(perp, w, model.kernel.lengthscale), cfg, axes=axes),
                        )
            refined_best = max(refined_best, min(fine_best, coarse_bnd))
    return refined_best


def bound_joint_pair(
    model: LatentModel,
    d1: int,
    d2: int,
    slices: int,
    cfg: GridBoundConfig = GridBoundConfig(),
) -> float:
    """Certified bound on the latent change from rewriting inputs d1 and d2.

    Any two-input perturbation is realized by an L-shaped pair of monotone
    axis moves (first along d1, then along d2, or the other order; the two
    orders bound identically here because each leg's off-axis factors are
    relaxed to 1).  For every pair of slice sequences and direction signs the
    two legs' composed weights are clamped and summed per center, and the
    remaining (D-2)-dim mixture is bounded.  The result is clamped by
    B_d1 + B_d2, which is a valid joint bound in its own right.
    """
    if d1 == d2:
        raise ValueError("joint bound needs two distinct dimensions")
    if model.dims < 2:
        raise ValueError("joint bound needs a model with at least 2 dimensions")
    slicing = Slicing(0.0, 1.0, slices)
    l = model.kernel.lengthscale
    d_lo, d_hi = min(d1, d2), max(d1, d2)
    perp = np.delete(model.centers, (d_lo, d_hi), axis=1)

    legs = {}
    for d in (d1, d2):
        per_dir = []
        for reverse in (False, True):
            table = build_segment_table(model, d, slicing, reverse=reverse)
            seqw = _sequence_weight_matrix(table)
            clamped = []
            for i in range(slicing.count):
                for j in range(i, slicing.count):
                    clamped.append(np.maximum(seqw[i, j], 0.0))
            per_dir.append(np.asarray(clamped))
        legs[d] = np.concatenate(per_dir, axis=0)

    best = 0.0
    singles = {}
    for d in (d1, d2):
        s_best = 0.0
        single_perp = np.delete(model.centers, d, axis=1)
        single_axes = _shared_axes(single_perp, cfg)
        for w in legs[d]:
            if np.any(w > 0):
                s_best = max(s_best, upper_bound_mixture(EQMixture(single_perp, w, l), cfg, axes=single_axes))
        singles[d] = s_best

    pair_axes = _shared_axes(perp, cfg)
    for w1 in legs[d1]:
        for w2 in legs[d2]:
            w = w1 + w2
            if not np.any(w > 0):
                continue
            bnd = upper_bound_mixture(EQMixture(perp, w, l), cfg, axes=pair_axes)
            if bnd > best:
                best = bnd
    return min(best, singles[d1] + singles[d2])


@dataclass
class CertificateResult:
    """Per-dimension bounds plus the derived certified input count."""

    per_dim_bounds: np.ndarray
    sorted_cumulative: np.ndarray
    gap: float
    certified_min_inputs: object  # int, or UNBOUNDED_SAFE
    settings: dict = field(default_factory=dict)
    elapsed: float = 0.0


def certified_inputs_from_bounds(per_dim_bounds: np.ndarray, gap: float):
    """Smallest n whose top-n bound sum reaches the gap, else unbounded-safe."""
    csum = np.cumsum(np.sort(np.asarray(per_dim_bounds, dtype=float))[::-1])
    reached = np.nonzero(csum >= gap)[0]
    if len(reached) == 0:
        return csum, UNBOUNDED_SAFE
    return csum, int(reached[0]) + 1


def certify(
    model: LatentModel,
    thresholds: ThresholdPair,
    slices: int,
    cfg: GridBoundConfig = GridBoundConfig(),
    enh: EnhanceConfig | None = None,
) -> CertificateResult:
    """Full certificate: bound every dimension, then count inputs to span the gap.

    n-1 inputs cannot cross the confident-classification gap whenever the sum
    of the n-1 largest per-dimension bounds stays below it; the certified
    count is the first n where the cumulative sum reaches the gap.
    """
    t0 = time.perf_counter()
    gap = thresholds.gap
    if gap < 0:
        raise ValueError(f"threshold gap must be >= 0, got {gap}")
    bounds = np.empty(model.dims)
    for d in range(model.dims):
        if enh is None:
            bounds[d] = bound_dimension(model, d, slices, cfg)
        else:
            bounds[d] = enhance(model, d, slices, enh, cfg)
    csum, certified = certified_inputs_from_bounds(bounds, gap)
    settings = {
        "slices": slices,
        "pca_dims": cfg.pca_dims,
        "grid_points_per_axis": cfg.grid_points_per_axis,
        "enhance_top_k": None if enh is None else enh.top_k,
        "enhance_slices_fine": None if enh is None else enh.slices_fine,
    }
    return CertificateResult(
        per_dim_bounds=bounds,
        sorted_cumulative=csum,
        gap=gap,
        certified_min_inputs=certified,
        settings=settings,
        elapsed=time.perf_counter() - t0,
    )
