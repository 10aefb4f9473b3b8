"""Gaussian-process surrogate over the encoded unit cube.

The model is a zero-mean GP (after target normalisation) with a Matern-5/2
kernel, per-coordinate lengthscales, and a Kumaraswamy CDF warp applied to
every input coordinate before distances are taken.  Observations carry
homoscedastic Gaussian noise.  Fitting is a Cholesky factorisation of the
noisy kernel matrix with escalating jitter; prediction gives the posterior
over the latent function value, i.e. the observation noise is not added
back into predictive variances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

__all__ = [
    "CholeskyFailure",
    "GpHyperParams",
    "NormalizedTargets",
    "GpPosterior",
    "LENGTHSCALE_BOUNDS",
    "AMPLITUDE_BOUNDS",
    "NOISE_BOUNDS",
    "WARP_BOUNDS",
    "kumaraswamy_warp",
    "matern52_ard",
    "kernel_matrix",
    "fit_posterior",
    "predict",
    "predict_batch",
    "log_marginal_likelihood",
    "lml_function",
]

_SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-4, 1e4)
AMPLITUDE_BOUNDS = (1e-4, 1e4)
NOISE_BOUNDS = (1e-8, 1.0)
WARP_BOUNDS = (0.1, 10.0)

_JITTER_RETRIES = 5
_STD_FLOOR = 1e-12


class CholeskyFailure(RuntimeError):
    """Kernel matrix stayed non-positive-definite after all jitter retries."""


@dataclass(frozen=True, eq=False)
class GpHyperParams:
    """Kernel and noise hyperparameters for an input width ``w``.

    Attributes
    ----------
    lengthscales : numpy.ndarray
        Per-coordinate lengthscales, shape ``(w,)``.
    amplitude : float
        Kernel variance at zero distance.
    noise_var : float
        Homoscedastic observation-noise variance.
    warp_a, warp_b : numpy.ndarray
        Per-coordinate Kumaraswamy shape parameters, shape ``(w,)``.
    """

    lengthscales: np.ndarray
    amplitude: float
    noise_var: float
    warp_a: np.ndarray
    warp_b: np.ndarray

    @property
    def width(self) -> int:
        return self.lengthscales.shape[0]

    @classmethod
    def default(cls, width: int) -> "GpHyperParams":
        """Neutral starting point: moderate lengthscales, identity warp."""
        return cls(
            lengthscales=np.full(width, 0.5),
            amplitude=1.0,
            noise_var=1e-3,
            warp_a=np.ones(width),
            warp_b=np.ones(width),
        )

    def validate(self) -> "GpHyperParams":
        w = self.width
        if self.warp_a.shape != (w,) or self.warp_b.shape != (w,):
            raise ValueError("warp parameter arrays must match the lengthscale width")
        for arr, (lo, hi), label in (
            (self.lengthscales, LENGTHSCALE_BOUNDS, "lengthscale"),
            (np.atleast_1d(self.amplitude), AMPLITUDE_BOUNDS, "amplitude"),
            (np.atleast_1d(self.noise_var), NOISE_BOUNDS, "noise_var"),
            (self.warp_a, WARP_BOUNDS, "warp_a"),
            (self.warp_b, WARP_BOUNDS, "warp_b"),
        ):
            # slack of a few ulps: exp(log(hi)) can overshoot the linear bound
            if not np.all((arr >= lo * (1.0 - 1e-12)) & (arr <= hi * (1.0 + 1e-12))):
                raise ValueError(f"{label} outside bounds [{lo}, {hi}]: {arr}")
        return self

    # The log-vector layout [lengthscales, amplitude, noise_var, warp_a, warp_b]
    # is the parameterisation used by both inference procedures.

    def to_log_vector(self) -> np.ndarray:
        return np.log(np.concatenate([
            self.lengthscales,
            [self.amplitude, self.noise_var],
            self.warp_a,
            self.warp_b,
        ]))

    @classmethod
    def from_log_vector(cls, vec: np.ndarray, width: int) -> "GpHyperParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (3 * width + 2,):
            raise ValueError(
                f"expected a log vector of length {3 * width + 2}, got {vec.shape}"
            )
        x = np.exp(vec)
        return cls(
            lengthscales=x[:width],
            amplitude=float(x[width]),
            noise_var=float(x[width + 1]),
            warp_a=x[width + 2:2 * width + 2],
            warp_b=x[2 * width + 2:],
        )

    @staticmethod
    def log_bounds(width: int) -> tuple[np.ndarray, np.ndarray]:
        """Elementwise (lower, upper) for the log-vector box."""
        lo = np.concatenate([
            np.full(width, LENGTHSCALE_BOUNDS[0]),
            [AMPLITUDE_BOUNDS[0], NOISE_BOUNDS[0]],
            np.full(2 * width, WARP_BOUNDS[0]),
        ])
        hi = np.concatenate([
            np.full(width, LENGTHSCALE_BOUNDS[1]),
            [AMPLITUDE_BOUNDS[1], NOISE_BOUNDS[1]],
            np.full(2 * width, WARP_BOUNDS[1]),
        ])
        return np.log(lo), np.log(hi)


@dataclass(frozen=True)
class NormalizedTargets:
    """Standardised targets together with the affine map that produced them."""

    z: np.ndarray
    mean: float
    scale: float


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Fitted state: design, normalised targets, and the Cholesky solve.

    ``scaled_design`` caches the warped, lengthscale-scaled design rows so
    repeated predictions do not re-warp the training inputs.
    """

    design: np.ndarray
    targets: NormalizedTargets
    theta: GpHyperParams
    chol: np.ndarray
    alpha: np.ndarray
    scaled_design: np.ndarray

    @property
    def n(self) -> int:
        return self.design.shape[0]


def kumaraswamy_warp(u, a, b):
    """Kumaraswamy CDF ``1 - (1 - u^a)^b``, elementwise.

    ``u`` may be a scalar or array with values in ``[0, 1]``; values up to
    1e-12 outside are clamped, anything further out raises ``ValueError``.
    ``a`` and ``b`` broadcast against ``u``.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
        raise ValueError("warp input must lie in [0, 1] (up to 1e-12 slack)")
    arr = np.clip(arr, 0.0, 1.0)
    out = 1.0 - (1.0 - arr ** a) ** b
    return float(out) if np.ndim(u) == 0 and np.ndim(out) == 0 else out


def _warp_rows(x: np.ndarray, theta: GpHyperParams) -> np.ndarray:
    """Apply the coordinate warp to one point or a stack of points.

    Inputs are clipped to [0, 1]; callers are responsible for staying in
    the encoded cube (validated upstream at encode time).
    """
    arr = np.clip(np.atleast_2d(np.asarray(x, dtype=float)), 0.0, 1.0)
    return 1.0 - (1.0 - arr ** theta.warp_a) ** theta.warp_b


def _matern_from_scaled(wa: np.ndarray, wb: np.ndarray,
                        amplitude: float) -> np.ndarray:
    """Kernel from pre-warped, lengthscale-scaled coordinates."""
    d2 = cdist(wa, wb, metric="sqeuclidean")
    np.maximum(d2, 0.0, out=d2)
    r = np.sqrt(d2)
    return amplitude * (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-_SQRT5 * r)


def kernel_matrix(x: np.ndarray, x2: np.ndarray, theta: GpHyperParams) -> np.ndarray:
    """Matern-5/2 cross-covariance between two stacks of encoded points."""
    wa = _warp_rows(x, theta) / theta.lengthscales
    wb = _warp_rows(x2, theta) / theta.lengthscales
    return _matern_from_scaled(wa, wb, theta.amplitude)


def matern52_ard(x: np.ndarray, x2: np.ndarray, theta: GpHyperParams) -> float:
    """Kernel value between two single encoded points."""
    return float(kernel_matrix(np.atleast_2d(x), np.atleast_2d(x2), theta)[0, 0])


def _normalize_targets(y: np.ndarray) -> NormalizedTargets:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return NormalizedTargets(z=y.copy(), mean=0.0, scale=1.0)
    mean = float(y.mean())
    std = float(y.std())
    scale = std if std >= _STD_FLOOR else 1.0
    return NormalizedTargets(z=(y - mean) / scale, mean=mean, scale=scale)


def _chol_with_jitter(k_noisy: np.ndarray, amplitude: float) -> np.ndarray:
    """Lower Cholesky factor, retrying with geometrically growing jitter."""
    try:
        return cholesky(k_noisy, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * amplitude
    eye = np.eye(k_noisy.shape[0])
    for _ in range(_JITTER_RETRIES):
        try:
            return cholesky(k_noisy + jitter * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyFailure(
        f"kernel matrix of size {k_noisy.shape[0]} is not positive definite "
        f"even with jitter up to {jitter / 10.0:g}"
    )


def fit_posterior(design: np.ndarray, y: np.ndarray,
                  theta: GpHyperParams) -> GpPosterior:
    """Factorise the model for a fixed hyperparameter setting.

    Parameters
    ----------
    design : numpy.ndarray
        Encoded inputs, shape ``(n, w)``.  ``n = 0`` is allowed and yields
        the prior.
    y : numpy.ndarray
        Raw observed values, shape ``(n,)``.
    theta : GpHyperParams
        Hyperparameters with matching width.

    Raises
    ------
    CholeskyFailure
        If the noisy kernel matrix cannot be factorised after jitter retries.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    if design.size == 0:
        design = design.reshape(0, theta.width)
    y = np.asarray(y, dtype=float)
    if design.shape[0] != y.shape[0]:
        raise ValueError("design and targets disagree on the number of rows")
    if design.shape[1] != theta.width:
        raise ValueError("design width does not match the hyperparameters")
    targets = _normalize_targets(y)
    n = design.shape[0]
    if n == 0:
        empty = np.zeros((0, 0))
        return GpPosterior(design, targets, theta, empty, np.zeros(0),
                           design.copy())
    scaled = _warp_rows(design, theta) / theta.lengthscales
    k = _matern_from_scaled(scaled, scaled, theta.amplitude)
    k[np.diag_indices_from(k)] += theta.noise_var
    chol = _chol_with_jitter(k, theta.amplitude)
    alpha = cho_solve((chol, True), targets.z, check_finite=False)
    return GpPosterior(design, targets, theta, chol, alpha, scaled)


def predict_batch(post: GpPosterior, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of the latent function at a stack of points.

    Returns raw-scale means and variances (the normalisation is undone).
    Variances exclude the observation noise and are clamped at zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = post.theta
    if post.n == 0:
        mean = np.full(x.shape[0], post.targets.mean)
        var = np.full(x.shape[0], theta.amplitude * post.targets.scale ** 2)
        return mean, var
    wx = _warp_rows(x, theta) / theta.lengthscales
    k_star = _matern_from_scaled(wx, post.scaled_design, theta.amplitude)
    mean_z = k_star @ post.alpha
    v = solve_triangular(post.chol, k_star.T, lower=True, check_finite=False)
    var_z = theta.amplitude - np.einsum("ij,ij->j", v, v)
    np.maximum(var_z, 0.0, out=var_z)
    scale = post.targets.scale
    return post.targets.mean + scale * mean_z, (scale ** 2) * var_z


def predict(post: GpPosterior, x: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at a single encoded point."""
    mean, var = predict_batch(post, np.atleast_2d(x))
    return float(mean[0]), float(var[0])


def lml_function(design: np.ndarray, y: np.ndarray):
    """Fast evaluator of the log marginal likelihood over hyperparameters.

    Precomputes the target normalisation once, which matters when the
    same data is scored under thousands of hyperparameter settings (MCMC
    and multi-start optimisation).  For every ``theta`` the returned
    callable equals ``log_marginal_likelihood(design, y, theta)``.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    z = _normalize_targets(y).z
    n = z.shape[0]
    if n == 0:
        return lambda theta: 0.0
    const = -0.5 * n * math.log(2.0 * math.pi)
    clipped = np.clip(design, 0.0, 1.0)

    def lml(theta: GpHyperParams) -> float:
        warped = 1.0 - (1.0 - clipped ** theta.warp_a) ** theta.warp_b
        scaled = warped / theta.lengthscales
        k = _matern_from_scaled(scaled, scaled, theta.amplitude)
        k[np.diag_indices_from(k)] += theta.noise_var
        chol = _chol_with_jitter(k, theta.amplitude)
        alpha = cho_solve((chol, True), z, check_finite=False)
        log_det_half = np.sum(np.log(np.diag(chol)))
        return float(-0.5 * z @ alpha - log_det_half + const)

    return lml


def log_marginal_likelihood(design: np.ndarray, y: np.ndarray,
                            theta: GpHyperParams) -> float:
    """Log marginal likelihood of the normalised targets under ``theta``."""
    post = fit_posterior(design, y, theta)
    n = post.n
    if n == 0:
        return 0.0
    z = post.targets.z
    log_det_half = float(np.sum(np.log(np.diag(post.chol))))
    return float(-0.5 * z @ post.alpha - log_det_half - 0.5 * n * math.log(2.0 * math.pi))
