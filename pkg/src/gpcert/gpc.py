"""Binary GP classification with a Laplace fit, reduced to a latent mean model.

The pipeline is: find the posterior mode of a logistic-likelihood GP on labels
in {-1, +1}, then regress a fresh GP onto that mode so the latent mean takes
the representer form

    fbar(x) = sum_i alpha_i k(c_i, x).

Only the mean survives this step on purpose: the certification machinery
bounds changes of the latent mean, and the predictive variance plays no part
in it.  The sparse path (DTC) produces the same representer form with m
inducing centers instead of N training points.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, as_points, cross_covariance, eq_kernel_grad, solve_psd, sq_distances

MODEL_FORMAT_HEADER = "gpcert-model v1"


@dataclass
class LabeledDataset:
    """Inputs in the unit domain with labels in {-1, +1}."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = as_points(self.x, "x")
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.y) != len(self.x):
            raise ValueError(f"{len(self.x)} points but {len(self.y)} labels")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    def __len__(self):
        return len(self.x)


@dataclass
class LaplaceFit:
    """Posterior mode of the latent GP plus convergence diagnostics."""

    f_hat: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool


@dataclass
class LatentModel:
    """Latent mean in representer form: fbar(x) = sum_i alpha[i] * k(centers[i], x)."""

    centers: np.ndarray
    alpha: np.ndarray
    kernel: KernelSpec
    noise_variance: float

    def __post_init__(self):
        self.centers = as_points(self.centers, "centers")
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        if len(self.alpha) != len(self.centers):
            raise ValueError(f"{len(self.centers)} centers but {len(self.alpha)} weights")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha contains non-finite values")
        if not (self.noise_variance >= 0 and np.isfinite(self.noise_variance)):
            raise ValueError(f"noise_variance must be finite and >= 0, got {self.noise_variance}")

    @property
    def dims(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class ThresholdPair:
    """Latent values that delimit confident classification of either class."""

    f05: float
    f95: float

    @property
    def gap(self) -> float:
        return self.f95 - self.f05


@dataclass
class SparseFitResult:
    """Sparse model plus the optimizer trace over inducing-point updates."""

    model: LatentModel
    objective_trace: list = field(default_factory=list)
    converged: bool = True


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    # log(sigma(z)) computed without overflow for large |z|
    return np.where(z >= 0, -np.log1p(np.exp(-np.abs(z))), z - np.log1p(np.exp(-np.abs(z))))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def fit_laplace(
    dataset: LabeledDataset,
    kernel: KernelSpec,
    tol: float = 1e-8,
    max_iter: int = 100,
    jitter: float | None = None,
) -> LaplaceFit:
    """Newton iteration for the mode of the logistic-likelihood GP posterior.

    Follows the numerically stable B = I + W^1/2 K W^1/2 formulation.  The
    returned mode satisfies f = K grad_log_lik(f); convergence is declared when
    the infinity norm of the stationarity residual grad_log_lik(f) - K^{-1} f
    (evaluated as grad - a with f = K a) drops below tol.
    """
    x, y = dataset.x, dataset.y
    n = len(x)
    if jitter is None:
        jitter = 1e-8 * kernel.variance
    k_mat = cross_covariance(x, x, kernel) + jitter * np.eye(n)

    t = (y + 1.0) / 2.0
    f = np.zeros(n)
    a = np.zeros(n)
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        pi = sigmoid(f)
        grad = t - pi
        w = pi * (1.0 - pi)
        sw = np.sqrt(w)
        b = np.eye(n) + sw[:, None] * k_mat * sw[None, :]
        c = np.linalg.cholesky(b)
        rhs = w * f + grad
        v = np.linalg.solve(c, sw * (k_mat @ rhs))
        a = rhs - sw * np.linalg.solve(c.T, v)
        f = k_mat @ a
        grad_norm = float(np.max(np.abs((t - sigmoid(f)) - a)))
        if grad_norm < tol:
            return LaplaceFit(f_hat=f, iterations=iterations, grad_norm=grad_norm, converged=True)
    return LaplaceFit(f_hat=f, iterations=iterations, grad_norm=grad_norm, converged=False)


def regression_weights(
    x: np.ndarray,
    f_hat: np.ndarray,
    kernel: KernelSpec,
    noise_variance: float,
) -> LatentModel:
    """Regress a GP onto the Laplace mode: alpha = (K + noise*I)^{-1} f_hat."""
    x = as_points(x, "x")
    f_hat = np.asarray(f_hat, dtype=float).ravel()
    if len(f_hat) != len(x):
        raise ValueError(f"{len(x)} points but {len(f_hat)} mode values")
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive for the regression step")
    k_mat = cross_covariance(x, x, kernel)
    alpha = solve_psd(k_mat + noise_variance * np.eye(len(x)), f_hat)
    return LatentModel(centers=x, alpha=alpha, kernel=kernel, noise_variance=noise_variance)


def predict_latent(model: LatentModel, xstar) -> np.ndarray:
    """Latent mean at query points, shape (n,)."""
    xs = as_points(xstar, "xstar")
    return cross_covariance(xs, model.centers, model.kernel) @ model.alpha


def predict_class(model: LatentModel, xstar):
    """Class labels in {-1, +1} (sign of the latent, zero mapped to +1) and p(+1)."""
    latent = predict_latent(model, xstar)
    labels = np.where(latent >= 0, 1.0, -1.0)
    return labels, sigmoid(latent)


def latent_gradient(model: LatentModel, xstar) -> np.ndarray:
    """Gradient of the latent mean at a single query point."""
    xs = np.asarray(xstar, dtype=float).ravel()
    diffs = model.centers - xs[None, :]
    k_row = cross_covariance(xs[None, :], model.centers, model.kernel)[0]
    return (diffs * (model.alpha * k_row)[:, None]).sum(axis=0) / model.kernel.lengthscale**2


def accuracy(model: LatentModel, dataset: LabeledDataset) -> float:
    labels, _ = predict_class(model, dataset.x)
    return float(np.mean(labels == dataset.y))


def compute_thresholds(latents) -> ThresholdPair:
    """Nearest-rank 5th and 95th percentiles of the training latents.

    With the sorted latents L[1..N] (1-based), f05 = L[ceil(N/20)] and
    f95 = L[ceil(19N/20)].  Ranks are computed in integer arithmetic so
    exact multiples of 20 do not drift through float rounding.
    """
    lat = np.sort(np.asarray(latents, dtype=float).ravel())
    n = len(lat)
    if n == 0:
        raise ValueError("no latents given")
    r05 = (n + 19) // 20
    r95 = (19 * n + 19) // 20
    return ThresholdPair(f05=float(lat[r05 - 1]), f95=float(lat[r95 - 1]))


# ---------------------------------------------------------------------------
# Sparse (DTC) path


def dtc_log_marginal(
    z: np.ndarray,
    x: np.ndarray,
    f_hat: np.ndarray,
    kernel: KernelSpec,
    noise_variance: float,
    jitter: float | None = None,
) -> float:
    """DTC log marginal likelihood of the mode under N(0, Kfu Kuu^-1 Kuf + noise*I).

    Evaluated through the m x m system A = Kuu + Kuf Kfu / noise, using the
    determinant lemma log|Q + s2 I| = log|A| - log|Kuu| + N log s2, so the cost
    stays O(N m^2).
    """
    z = as_points(z, "z")
    x = as_points(x, "x")
    f = np.asarray(f_hat, dtype=float).ravel()
    n, m = len(x), len(z)
    s2 = noise_variance
    if s2 <= 0:
        raise ValueError("noise_variance must be positive")
    if jitter is None:
        jitter = 1e-8 * kernel.variance

    kuu = cross_covariance(z, z, kernel) + jitter * np.eye(m)
    kuf = cross_covariance(z, x, kernel)
    a_mat = kuu + (kuf @ kuf.T) / s2

    luu = np.linalg.cholesky(kuu)
    la = np.linalg.cholesky(a_mat)
    logdet = 2.0 * float(np.sum(np.log(np.diag(la))) - np.sum(np.log(np.diag(luu)))) + n * math.log(s2)

    kuf_f = kuf @ f
    tmp = np.linalg.solve(la, kuf_f)
    quad = (f @ f) / s2 - (tmp @ tmp) / s2**2
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi)


def _farthest_point_init(x: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Indices of m training points chosen by farthest-point traversal."""
    rng = np.random.default_rng(seed)
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    while len(chosen) < m:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return np.array(chosen, dtype=int)


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-ascent settings for inducing point placement."""

    max_steps: int = 15
    initial_step: float = 0.1
    min_step: float = 1e-4
    fd_step: float = 1e-5
    seed: int = 0


def fit_sparse_dtc(
    x: np.ndarray,
    f_hat: np.ndarray,
    kernel: KernelSpec,
    noise_variance: float,
    m: int,
    opt: OptimizerConfig = OptimizerConfig(),
) -> SparseFitResult:
    """Sparse regression onto the mode with m optimized inducing centers.

    alpha = Sigma Kuf f_hat / noise with Sigma = (Kuf Kfu / noise + Kuu)^{-1}.
    Inducing inputs start at a farthest-point subset of the training data and
    follow gradient ascent on the DTC log marginal; gradients come from central
    finite differences and the step halves whenever a proposal does not improve
    the objective.  With m == N and zero steps this reproduces the dense
    regression exactly.
    """
    x = as_points(x, "x")
    f = np.asarray(f_hat, dtype=float).ravel()
    n = len(x)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")

    if m == n:
        z = x.copy()
    else:
        z = x[_farthest_point_init(x, m, opt.seed)].copy()

    s2 = noise_variance
    two_l2 = 2.0 * kernel.lengthscale**2
    jitter = 1e-8 * kernel.variance
    eye = jitter * np.eye(m)
    log_2pi_term = 0.5 * n * math.log(2.0 * math.pi)
    f_sq = float(f @ f)

    def objective_from_d2(d2_uu, d2_uf):
        # collapsing inducing points can defeat the jitter; treat that as -inf
        kuu = kernel.variance * np.exp(-d2_uu / two_l2) + eye
        kuf = kernel.variance * np.exp(-d2_uf / two_l2)
        try:
            luu = np.linalg.cholesky(kuu)
            la = np.linalg.cholesky(kuu + (kuf @ kuf.T) / s2)
        except np.linalg.LinAlgError:
            return -np.inf
        logdet = 2.0 * float(np.sum(np.log(np.diag(la))) - np.sum(np.log(np.diag(luu)))) + n * math.log(s2)
        tmp = np.linalg.solve(la, kuf @ f)
        quad = f_sq / s2 - float(tmp @ tmp) / s2**2
        return -0.5 * quad - 0.5 * logdet - log_2pi_term

    def distances(zc):
        return sq_distances(zc, zc), sq_distances(zc, x)

    d2_uu, d2_uf = distances(z)
    current = objective_from_d2(d2_uu, d2_uf)
    trace = [current]
    step = opt.initial_step
    converged = np.isfinite(current)
    h = opt.fd_step
    for _ in range(opt.max_steps):
        # central differences; a coordinate bump shifts one row of each
        # distance matrix, so each probe costs O(m n) instead of O(m n D)
        grad = np.zeros_like(z)
        for i in range(m):
            row_uf = d2_uf[i].copy()
            row_uu = d2_uu[i].copy()
            for d in range(z.shape[1]):
                duf = 2.0 * (z[i, d] - x[:, d])
                duu = 2.0 * (z[i, d] - z[:, d])
                vals = []
                for sgn in (1.0, -1.0):
                    d2_uf[i] = np.maximum(row_uf + sgn * h * duf + h * h, 0.0)
                    new_uu = np.maximum(row_uu + sgn * h * duu + h * h, 0.0)
                    new_uu[i] = 0.0
                    d2_uu[i] = new_uu
                    d2_uu[:, i] = new_uu
                    vals.append(objective_from_d2(d2_uu, d2_uf))
                grad[i, d] = (vals[0] - vals[1]) / (2.0 * h)
            d2_uf[i] = row_uf
            d2_uu[i] = row_uu
            d2_uu[:, i] = row_uu
        gnorm = float(np.sqrt(np.sum(grad * grad)))
        if gnorm == 0.0:
            break
        direction = grad / gnorm
        improved = False
        while step >= opt.min_step:
            cand = z + step * direction
            cand_uu, cand_uf = distances(cand)
            val = objective_from_d2(cand_uu, cand_uf)
            if val >= current:
                z, current = cand, val
                d2_uu, d2_uf = cand_uu, cand_uf
                improved = True
                break
            step *= 0.5
        trace.append(current)
        if not improved:
            break

    jitter = 1e-8 * kernel.variance
    kuu = cross_covariance(z, z, kernel) + jitter * np.eye(m)
    kuf = cross_covariance(z, x, kernel)
    sigma_inv = kuu + (kuf @ kuf.T) / noise_variance
    alpha = solve_psd(sigma_inv, kuf @ f) / noise_variance
    model = LatentModel(centers=z, alpha=alpha, kernel=kernel, noise_variance=noise_variance)
    return SparseFitResult(model=model, objective_trace=trace, converged=converged)


# ---------------------------------------------------------------------------
# Serialization: flat text, floats stored as shortest round-trip reprs


def save_model(model: LatentModel, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_model(model))


def dumps_model(model: LatentModel) -> str:
    buf = io.StringIO()
    buf.write(MODEL_FORMAT_HEADER + "\n")
    buf.write(f"variance {model.kernel.variance!r}\n")
    buf.write(f"lengthscale {model.kernel.lengthscale!r}\n")
    buf.write(f"noise_variance {model.noise_variance!r}\n")
    m, d = model.centers.shape
    buf.write(f"centers {m} {d}\n")
    for row in model.centers:
        buf.write(" ".join(repr(v) for v in row.tolist()) + "\n")
    buf.write("alpha\n")
    buf.write(" ".join(repr(v) for v in model.alpha.tolist()) + "\n")
    return buf.getvalue()


def load_model(path) -> LatentModel:
    with open(path, "r", encoding="ascii") as fh:
        return loads_model(fh.read())


def loads_model(text: str) -> LatentModel:
    lines = text.strip().split("\n")
    if not lines or lines[0].strip() != MODEL_FORMAT_HEADER:
        raise ValueError(f"unrecognized model header: {lines[0] if lines else '<empty>'!r}")
    fields = {}
    idx = 1
    for key in ("variance", "lengthscale", "noise_variance"):
        name, val = lines[idx].split()
        if name != key:
            raise ValueError(f"expected field {key!r}, found {name!r}")
        fields[key] = float(val)
        idx += 1
    tag, m_str, d_str = lines[idx].split()
    if tag != "centers":
        raise ValueError(f"expected 'centers', found {tag!r}")
    m, d = int(m_str), int(d_str)
    idx += 1
    centers = np.array(
        [[float(v) for v in lines[idx + i].split()] for i in range(m)], dtype=float
    ).reshape(m, d)
    idx += m
    if lines[idx].strip() != "alpha":
        raise ValueError(f"expected 'alpha', found {lines[idx]!r}")
    alpha = np.array([float(v) for v in lines[idx + 1].split()], dtype=float)
    kernel = KernelSpec(variance=fields["variance"], lengthscale=fields["lengthscale"])
    return LatentModel(centers=centers, alpha=alpha, kernel=kernel, noise_variance=fields["noise_variance"])
