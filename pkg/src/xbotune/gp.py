"""Gaussian-process regression backbone.

Squared-exponential kernel with one length scale per dimension, inputs
min-max normalized to [0, 1] per dimension, constant prior mean equal to
the training-target mean.  Hyperparameters are set by maximizing the log
marginal likelihood over a fixed multi-start grid followed by coordinate
refinement; the whole procedure is deterministic.

Covariance factorizations use a Cholesky decomposition with a jitter of
1e-8 on the diagonal, doubled up to 1e-4 if the factorization fails.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

JITTER_INITIAL = 1e-8
JITTER_MAX = 1e-4


class GpFitError(ValueError):
    pass


class GpNumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential kernel hyperparameters (normalized coordinates)."""

    length_scales: tuple[float, ...]
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        if any(ls <= 0 for ls in self.length_scales):
            raise ValueError("length scales must be positive")
        if self.signal_variance <= 0:
            raise ValueError("signal variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")


@dataclass(frozen=True)
class Posterior:
    mean: float
    std: float


@dataclass(frozen=True)
class GpModel:
    """Fitted surrogate; immutable after fit."""

    x_train: np.ndarray          # (n, d), normalized to [0, 1]
    y_train: np.ndarray          # (n,)
    bounds: tuple[tuple[float, float], ...]
    config: KernelConfig
    mean_offset: float           # constant prior mean (training-target mean)
    chol_lower: np.ndarray       # L with L L^T = K + (noise + jitter) I
    alpha: np.ndarray            # solve(K + noise I, y - mean)
    jitter: float

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]


def kernel_matrix(cfg: KernelConfig, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """k(xa, xb) for row-wise inputs in normalized coordinates."""
    ls = np.asarray(cfg.length_scales)
    diff = (xa[:, None, :] - xb[None, :, :]) / ls
    return cfg.signal_variance * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def normalize(x: np.ndarray, bounds: tuple[tuple[float, float], ...]) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def _factorize(k: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    """Cholesky of k + (noise + jitter) I, escalating jitter on failure."""
    jitter = JITTER_INITIAL
    n = k.shape[0]
    while True:
        try:
            lower = cholesky(k + (noise + jitter) * np.eye(n), lower=True, check_finite=False)
            return lower, jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
            if jitter > JITTER_MAX:
                cond = float(np.linalg.cond(k + noise * np.eye(n)))
                raise GpNumericalError(
                    f"covariance not positive definite after jitter {JITTER_MAX:g} "
                    f"(condition number {cond:.3e})"
                ) from None


def _sq_diffs(x: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (d, n, n); reused across configs."""
    diff = x[:, None, :] - x[None, :, :]
    return np.moveaxis(diff * diff, -1, 0)


def _gram(sq: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    inv_ls2 = 1.0 / np.asarray(cfg.length_scales) ** 2
    return cfg.signal_variance * np.exp(-0.5 * np.tensordot(inv_ls2, sq, axes=1))


def _length_scale_floor(xn: np.ndarray) -> float:
    """Smallest admissible length scale: the nearest-neighbour spacing.

    Below the data spacing the marginal likelihood cannot distinguish
    length scales (the Gram matrix is already diagonal), and maximizing
    it drifts into a white-noise fit that cannot interpolate.
    """
    n = xn.shape[0]
    if n < 2:
        return 1e-3
    diff = xn[:, None, :] - xn[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[dist == 0.0] = np.inf
    nearest = float(np.min(dist))
    if not np.isfinite(nearest):
        return 1e-3
    return float(np.clip(nearest, 1e-3, 0.5))


def _profiled_candidate(
    x: np.ndarray,
    sq: np.ndarray,
    r: np.ndarray,
    length_scales: tuple[float, ...],
    noise_ratio: float,
    fallback_signal: float,
) -> KernelConfig:
    """Candidate config with the maximum-likelihood signal variance folded in."""
    corr = _gram(sq, KernelConfig(length_scales, 1.0, 0.0))
    n = x.shape[0]
    try:
        lower, _ = _factorize(corr, noise_ratio)
    except GpNumericalError:
        return KernelConfig(length_scales, fallback_signal, noise_ratio * fallback_signal)
    alpha = cho_solve((lower, True), r, check_finite=False)
    sig = float(r @ alpha) / n
    if not np.isfinite(sig) or sig <= 0:
        sig = fallback_signal
    return KernelConfig(length_scales, sig, noise_ratio * sig)


def _lml(x: np.ndarray, r: np.ndarray, cfg: KernelConfig, sq: np.ndarray | None = None) -> float:
    """Log marginal likelihood of residuals r under cfg (hot path of fit)."""
    k = _gram(sq if sq is not None else _sq_diffs(x), cfg)
    try:
        lower, _ = _factorize(k, cfg.noise_variance)
    except GpNumericalError:
        return -np.inf
    alpha = cho_solve((lower, True), r, check_finite=False)
    n = x.shape[0]
    return float(
        -0.5 * r @ alpha - np.sum(np.log(np.diag(lower))) - 0.5 * n * np.log(2 * np.pi)
    )


def fit(
    x: list | np.ndarray,
    y: list | np.ndarray,
    bounds: list[tuple[float, float]] | tuple[tuple[float, float], ...],
    noise_floor: float = 0.0,
) -> GpModel:
    """Fit the surrogate to observations inside the given per-dimension bounds."""
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    y_arr = np.asarray(y, dtype=float).ravel()
    bounds_t = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if x_arr.shape[0] != y_arr.shape[0]:
        raise GpFitError("x and y must have the same number of rows")
    if x_arr.shape[0] < 2:
        raise GpFitError("need at least 2 training points")
    if x_arr.shape[1] != len(bounds_t):
        raise GpFitError("x width must match the number of bounds")

    xn = normalize(x_arr, bounds_t)
    if noise_floor <= 0.0:
        _check_conflicting_duplicates(xn, y_arr)
    sq = _sq_diffs(xn)

    mean_offset = float(np.mean(y_arr))
    r = y_arr - mean_offset
    var = float(np.var(r))
    signal0 = var if var > 0 else 1.0
    d = xn.shape[1]
    ls_floor = _length_scale_floor(xn)

    # 16-point multi-start: 8 isotropic length scales x 2 noise-to-signal
    # ratios.  For each, the signal variance is profiled out in closed form
    # (sigma^2 = r' C^-1 r / n), which keeps long length scales competitive.
    candidates = []
    for ls in np.geomspace(0.05, 2.0, 8):
        ls = max(float(ls), ls_floor)
        for noise_ratio in (1e-6, 1e-3):
            cfg = _profiled_candidate(xn, sq, r, (ls,) * d, noise_ratio, signal0)
            cfg = KernelConfig(
                cfg.length_scales,
                cfg.signal_variance,
                max(cfg.noise_variance, noise_floor),
            )
            candidates.append(cfg)

    grid_vals = [_lml(xn, r, c, sq) for c in candidates]
    best_idx = int(np.argmax(grid_vals))
    best_cfg, best_val = candidates[best_idx], grid_vals[best_idx]

    # Coordinate refinement: multiplicative steps on each hyperparameter,
    # shrinking the step, deterministic order.
    theta = [list(best_cfg.length_scales), best_cfg.signal_variance, best_cfg.noise_variance]

    def build(th) -> KernelConfig:
        return KernelConfig(tuple(th[0]), th[1], th[2])

    for factor in (4.0, 2.0, 1.4):
        improved = True
        sweeps = 0
        while improved and sweeps < 2:
            improved = False
            sweeps += 1
            for idx in range(d + 2):
                for mult in (factor, 1.0 / factor):
                    trial = [list(theta[0]), theta[1], theta[2]]
                    if idx < d:
                        trial[0][idx] = float(np.clip(theta[0][idx] * mult, ls_floor, 1e3))
                    elif idx == d:
                        trial[1] = float(np.clip(theta[1] * mult, 1e-12, 1e12))
                    else:
                        # objective observations are deterministic; the noise
                        # term is for conditioning, duplicates and penalties
                        trial[2] = float(
                            np.clip(
                                theta[2] * mult,
                                max(noise_floor, 1e-12 * signal0),
                                max(noise_floor, 1e-2 * trial[1]),
                            )
                        )
                    cfg = build(trial)
                    val = _lml(xn, r, cfg, sq)
                    if val > best_val + 1e-12:
                        best_val, theta = val, trial
                        improved = True

    cfg = build(theta)
    k = _gram(sq, cfg)
    lower, jitter = _factorize(k, cfg.noise_variance)
    alpha = cho_solve((lower, True), r)
    return GpModel(
        x_train=xn,
        y_train=y_arr,
        bounds=bounds_t,
        config=cfg,
        mean_offset=mean_offset,
        chol_lower=lower,
        alpha=alpha,
        jitter=jitter,
    )


def _check_conflicting_duplicates(xn: np.ndarray, y: np.ndarray) -> None:
    order = np.lexsort(xn.T)
    for a, b in zip(order[:-1], order[1:]):
        if np.array_equal(xn[a], xn[b]) and y[a] != y[b]:
            raise GpFitError(
                "duplicate inputs with conflicting targets and zero noise; "
                "fit with a positive noise_floor"
            )


def predict_arrays(model: GpModel, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and std (of the latent function) at query points.

    Queries outside the normalization bounds are clipped with a warning.
    """
    xq = np.atleast_2d(np.asarray(x_query, dtype=float))
    xn = normalize(xq, model.bounds)
    if np.any(xn < -1e-9) or np.any(xn > 1.0 + 1e-9):
        warnings.warn("query outside the search-space bounds; clipping", stacklevel=2)
    xn = np.clip(xn, 0.0, 1.0)
    k_star = kernel_matrix(model.config, xn, model.x_train)
    mu = k_star @ model.alpha + model.mean_offset
    v = solve_triangular(model.chol_lower, k_star.T, lower=True, check_finite=False)
    var = model.config.signal_variance - np.sum(v * v, axis=0)
    std = np.sqrt(np.maximum(var, 0.0))
    return mu, std


def predict(model: GpModel, x_query: list | np.ndarray) -> list[Posterior]:
    mu, std = predict_arrays(model, x_query)
    return [Posterior(float(m), float(s)) for m, s in zip(mu, std)]


def log_marginal_likelihood(model: GpModel) -> float:
    """Log marginal likelihood of the training data under the fitted kernel."""
    r = model.y_train - model.mean_offset
    value = _lml(model.x_train, r, model.config)
    if not np.isfinite(value):
        raise GpNumericalError("log marginal likelihood is not finite")
    return value
