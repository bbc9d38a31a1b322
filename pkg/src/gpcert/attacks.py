"""Search attacks and brute-force oracles that sandwich the certified bounds.

The certificate is a lower bound on how many inputs an attacker needs; the
attacks here construct explicit perturbations, giving the matching upper
bound.  The oracles exhaustively grid small models and anchor the soundness
tests: oracle <= certified bound must hold everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gpc import LatentModel, ThresholdPair, latent_gradient, predict_latent

_RNG_BATCH = 4096  # fixed draw granularity so seed-prefix results never depend on trial count


@dataclass
class AttackResult:
    succeeded: bool
    n_modified: int
    x_start: np.ndarray
    x_final: np.ndarray
    start_latent: float
    final_latent: float
    trace: list = field(default_factory=list)  # (dim, old_value, new_value, latent_after)


def _latent1(model: LatentModel, x: np.ndarray) -> float:
    return float(predict_latent(model, x[None, :])[0])


def axis_search_attack(
    model: LatentModel,
    x0,
    thresholds: ThresholdPair,
    max_inputs: int,
    line_resolution: int = 101,
    mode: str = "percentile",
    gap: float | None = None,
    top_candidates: int = 1,
) -> AttackResult:
    """Greedy one-coordinate-at-a-time attack.

    Each step ranks unmodified dimensions by latent-gradient magnitude, scans
    line_resolution uniform values in [0, 1] for each of the top_candidates
    highest-ranked ones, and commits the single coordinate change that moves
    the latent furthest toward the target.  The gradient alone can misjudge a
    full-range coordinate move, so candidates > 1 trades line scans for attack
    strength.  Modified coordinates stay fixed.  Deterministic throughout:
    ties break toward the better gradient rank, then the lowest dimension
    index, then the smallest scanned value.

    mode "percentile": a point starting at or below f05 must reach f95 and
    vice versa.  mode "gap": succeed once the latent has moved by the given
    gap (tried in both directions, the cheaper side wins).
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (model.dims,):
        raise ValueError(f"x0 must have {model.dims} coordinates, got {x0.shape}")
    if np.any(x0 < 0) or np.any(x0 > 1):
        raise ValueError("x0 must lie in the unit domain")
    if max_inputs < 0:
        raise ValueError("max_inputs must be >= 0")
    if line_resolution < 2:
        raise ValueError("line_resolution must be >= 2")
    if top_candidates < 1:
        raise ValueError("top_candidates must be >= 1")

    start_latent = _latent1(model, x0)
    if mode == "percentile":
        if start_latent <= thresholds.f05:
            return _directed_attack(model, x0, start_latent, thresholds.f95, +1, max_inputs, line_resolution, top_candidates)
        if start_latent >= thresholds.f95:
            return _directed_attack(model, x0, start_latent, thresholds.f05, -1, max_inputs, line_resolution, top_candidates)
        raise ValueError(
            f"start latent {start_latent:.6g} is not confidently classified "
            f"(thresholds {thresholds.f05:.6g}, {thresholds.f95:.6g})"
        )
    if mode == "gap":
        if gap is None:
            gap = thresholds.gap
        up = _directed_attack(model, x0, start_latent, start_latent + gap, +1, max_inputs, line_resolution, top_candidates)
        down = _directed_attack(model, x0, start_latent, start_latent - gap, -1, max_inputs, line_resolution, top_candidates)
        # prefer the cheaper success; ties go to the upward try
        if up.succeeded and (not down.succeeded or up.n_modified <= down.n_modified):
            return up
        if down.succeeded:
            return down
        return up
    raise ValueError(f"unknown attack mode {mode!r}")


def _directed_attack(model, x0, start_latent, target, sign, max_inputs, line_resolution, top_candidates=1):
    x = x0.copy()
    latent = start_latent
    trace = []
    modified = set()

    def done(val):
        return val >= target if sign > 0 else val <= target

    values = np.linspace(0.0, 1.0, line_resolution)
    while not done(latent) and len(trace) < max_inputs:
        grad = latent_gradient(model, x)
        order = np.argsort(-np.abs(grad), kind="stable")
        dims = [int(d) for d in order if int(d) not in modified][:top_candidates]

        best = None
        for dim in dims:
            candidates = np.tile(x, (line_resolution, 1))
            candidates[:, dim] = values
            lat = predict_latent(model, candidates)
            pick = int(np.argmax(sign * lat))
            moved = sign * float(lat[pick])
            # strictly-better keeps earlier (higher-gradient) candidates on ties
            if best is None or moved > best[0]:
                best = (moved, dim, pick, float(lat[pick]))
        _, dim, pick, new_latent = best
        old = float(x[dim])
        x[dim] = values[pick]
        latent = new_latent
        modified.add(dim)
        trace.append((dim, old, float(values[pick]), latent))

    return AttackResult(
        succeeded=bool(done(latent)),
        n_modified=len(trace),
        x_start=x0.copy(),
        x_final=x,
        start_latent=start_latent,
        final_latent=latent,
        trace=trace,
    )


def random_perturbation_search(
    model: LatentModel,
    n_dims: int,
    trials: int,
    seed: int,
) -> float:
    """Largest |latent change| found by random n_dims-input perturbations.

    Draws are consumed in fixed-size batches from one seeded stream, so the
    first T trials are identical for every run with the same seed no matter
    the total count; the result is therefore nondecreasing in trials.
    """
    d = model.dims
    if not 1 <= n_dims <= d:
        raise ValueError(f"n_dims must be in [1, {d}], got {n_dims}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    remaining = trials
    while remaining > 0:
        take = min(remaining, _RNG_BATCH)
        base = rng.random((_RNG_BATCH, d))
        dim_scores = rng.random((_RNG_BATCH, d))
        new_vals = rng.random((_RNG_BATCH, n_dims))
        base = base[:take]
        # n_dims distinct dimensions per trial, chosen by the smallest scores
        dims = np.argpartition(dim_scores[:take], n_dims - 1, axis=1)[:, :n_dims]
        perturbed = base.copy()
        np.put_along_axis(perturbed, dims, new_vals[:take], axis=1)
        delta = np.abs(predict_latent(model, perturbed) - predict_latent(model, base))
        best = max(best, float(np.max(delta)))
        remaining -= take
    return best


def axis_grid_oracle(
    model: LatentModel,
    dims,
    resolution: int,
    max_evals: float = 5e7,
) -> float:
    """Exhaustive grid maximum of |latent change| over perturbations of `dims`.

    Base points run over a uniform grid of the full domain and the listed
    dimensions are rewritten to every grid value, so the result is the exact
    maximum over the grid (a lower bound on the true maximum).  Only 1 or 2
    dimensions are supported; anything bigger is out of brute-force reach.
    """
    dims = sorted(int(d) for d in dims)
    d = model.dims
    if len(dims) not in (1, 2) or len(set(dims)) != len(dims):
        raise ValueError("dims must list 1 or 2 distinct dimensions")
    if any(not 0 <= dd < d for dd in dims):
        raise ValueError(f"dims out of range for a {d}-dim model")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    n_evals = float(resolution) ** d
    if n_evals > max_evals:
        raise ValueError(
            f"grid would need {n_evals:.3g} evaluations (cap {max_evals:.3g}); "
            "lower the resolution or the model dimension"
        )

    grid = np.linspace(0.0, 1.0, resolution)
    other = [j for j in range(d) if j not in dims]
    if other:
        mesh = np.meshgrid(*([grid] * len(other)), indexing="ij")
        perp = np.stack([mm.ravel() for mm in mesh], axis=1)
    else:
        perp = np.zeros((1, 0))
    line_mesh = np.meshgrid(*([grid] * len(dims)), indexing="ij")
    line = np.stack([mm.ravel() for mm in line_mesh], axis=1)

    best = 0.0
    n_line = len(line)
    chunk = max(1, int(2e5) // n_line)
    for start in range(0, len(perp), chunk):
        block = perp[start : start + chunk]
        pts = np.empty((len(block) * n_line, d))
        if other:
            pts[:, other] = np.repeat(block, n_line, axis=0)
        for ax, dd in enumerate(dims):
            pts[:, dd] = np.tile(line[:, ax], len(block))
        lat = predict_latent(model, pts).reshape(len(block), n_line)
        spread = float(np.max(lat.max(axis=1) - lat.min(axis=1)))
        if spread > best:
            best = spread
    return best
