"""L2-regularized logistic regression baseline with its exact input-count rule.

For a linear model on inputs normalized to [0, 1], changing input j moves the
logit by at most |w_j|, and that maximum is achievable (set the coordinate to
whichever end of [0, 1] the sign of w_j asks for).  The certified minimum
input count is therefore exact here, unlike the GP case where it is a bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gpc import ThresholdPair, compute_thresholds, sigmoid

UNBOUNDED_SAFE = "unbounded-safe"


@dataclass
class LinearModel:
    bias: float
    weights: np.ndarray
    unit_domain: bool = True  # inputs seen at fit time lay inside [0, 1]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("model coefficients must be finite")

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        return self.bias + x @ self.weights


def _objective(bias, w, x, y, c):
    z = y * (bias + x @ w)
    # log(1 + exp(-z)) evaluated stably
    loss = np.sum(np.logaddexp(0.0, -z))
    return loss + 0.5 / c * float(w @ w)


def fit_lr(
    x: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> LinearModel:
    """Damped Newton minimization of the regularized logistic loss.

    Objective: sum_i log(1 + exp(-y_i (w0 + w.x_i))) + ||w||^2 / (2C), with the
    bias unpenalized.  Each Newton step is halved until the objective does not
    increase; convergence is the gradient infinity norm dropping below tol.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if c <= 0:
        raise ValueError("C must be positive")

    n, d = x.shape
    unit_domain = bool(np.all(x >= -1e-12) and np.all(x <= 1 + 1e-12))
    xt = np.concatenate([np.ones((n, 1)), x], axis=1)
    beta = np.zeros(d + 1)  # [bias, weights]
    reg = np.zeros(d + 1)
    reg[1:] = 1.0 / c

    obj = _objective(beta[0], beta[1:], x, y, c)
    for _ in range(max_iter):
        z = y * (xt @ beta)
        s = sigmoid(-z)  # d/dz of the loss, up to the -y factor
        grad = -(xt.T @ (y * s)) + reg * beta
        if float(np.max(np.abs(grad))) < tol:
            break
        p = sigmoid(xt @ beta)
        w_diag = np.maximum(p * (1.0 - p), 1e-12)
        hess = (xt.T * w_diag) @ xt + np.diag(reg)
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        while scale > 1e-12:
            cand = beta - scale * step
            cand_obj = _objective(cand[0], cand[1:], x, y, c)
            if cand_obj <= obj:
                break
            scale *= 0.5
        beta = beta - scale * step
        obj = _objective(beta[0], beta[1:], x, y, c)

    return LinearModel(bias=float(beta[0]), weights=beta[1:], unit_domain=unit_domain)


def lr_thresholds(model: LinearModel, x_train) -> ThresholdPair:
    """Nearest-rank 5th/95th percentile thresholds of the training logits."""
    return compute_thresholds(model.logits(x_train))


def lr_certified_min_inputs(model: LinearModel, gap: float):
    """Smallest number of inputs whose total |weight| reaches the gap.

    Exact for unit-domain inputs: input j contributes at most |w_j| and can
    realize it.  Models fitted on data outside [0, 1] are rejected because the
    per-input contribution is no longer |w_j|.
    """
    if not model.unit_domain:
        raise ValueError("certified input count requires inputs normalized to [0, 1]")
    if gap < 0:
        raise ValueError("gap must be >= 0")
    mags = np.sort(np.abs(model.weights))[::-1]
    csum = np.cumsum(mags)
    reached = np.nonzero(csum >= gap)[0]
    if len(reached) == 0:
        return UNBOUNDED_SAFE
    return int(reached[0]) + 1


def lr_accuracy(model: LinearModel, x, y) -> float:
    y = np.asarray(y, dtype=float).ravel()
    pred = np.where(model.logits(x) >= 0, 1.0, -1.0)
    return float(np.mean(pred == y))
