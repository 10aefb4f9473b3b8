"""Hyperparameter inference for the GP surrogate.

Two procedures are provided.  ``slice_sample_thetas`` draws an ensemble of
hyperparameter settings from the posterior over the log parameterisation
using univariate slice sampling along random directions; predictions then
average over the ensemble.  ``empirical_bayes_fit`` instead maximises the
log marginal likelihood from several starting points and returns the
single best setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .sobol import MAX_DIMENSION, sobol_points
from .surrogate import CholeskyFailure, GpHyperParams, lml_function

__all__ = [
    "StepOutFailure",
    "McmcConfig",
    "slice_sample",
    "slice_sample_thetas",
    "empirical_bayes_fit",
    "log_prior",
]

_MAX_STEP_OUT = 1000
_MAX_SHRINK = 200
_EB_STARTS = 4
_EB_MAXITER = 100
_BAD_OBJECTIVE = 1e12

# Lognormal prior scales over the hyperparameters (on the log axis):
# lengthscales and amplitude get a standard normal, the warp shapes a
# tighter normal so the identity warp is preferred a priori, and the
# noise variance is log-uniform over its box.
_PRIOR_SD_SCALE = 1.0
_PRIOR_SD_WARP = 0.75


class StepOutFailure(RuntimeError):
    """Slice step-out failed to bracket the level set within the expansion cap."""


@dataclass(frozen=True)
class McmcConfig:
    """Chain schedule for slice sampling the hyperparameter posterior."""

    chain_length: int = 300
    burn_in: int = 250
    thinning: int = 5

    def validate(self) -> "McmcConfig":
        if self.chain_length < 1 or self.burn_in < 0 or self.thinning < 1:
            raise ValueError("chain_length, burn_in >= 0 and thinning must be positive")
        if self.burn_in >= self.chain_length:
            raise ValueError("burn_in must be smaller than chain_length")
        return self

    @property
    def effective_samples(self) -> int:
        return len(range(self.burn_in, self.chain_length, self.thinning))


def slice_sample(log_density, x0: np.ndarray, count: int,
                 rng: np.random.Generator, *, width: float = 1.0,
                 max_step_out: int = _MAX_STEP_OUT) -> np.ndarray:
    """Draw a Markov chain targeting ``exp(log_density)``.

    Each step picks a uniformly random direction, brackets the slice by
    stepping out in intervals of ``width``, then shrinks uniformly until a
    point inside the slice is found.  The density may return ``-inf``
    outside its support; the support must be connected along any line for
    the stepping-out procedure to be valid.

    Parameters
    ----------
    log_density : callable
        Maps a point of shape ``(k,)`` to a float (or ``-inf``).
    x0 : numpy.ndarray
        Starting point with finite log density.
    count : int
        Number of steps; one point is recorded per step.
    rng : numpy.random.Generator
        Source of randomness; fixing it fixes the chain.

    Returns
    -------
    numpy.ndarray
        Chain of shape ``(count, k)``; ``x0`` itself is not included.

    Raises
    ------
    StepOutFailure
        If a slice cannot be bracketed within ``max_step_out`` expansions.
    """
    x = np.asarray(x0, dtype=float).copy()
    k = x.shape[0]
    logp = float(log_density(x))
    if not math.isfinite(logp):
        raise ValueError("slice sampling requires a starting point with finite density")
    out = np.empty((count, k))
    for step in range(count):
        direction = rng.standard_normal(k)
        direction /= np.linalg.norm(direction)
        level = logp + math.log(rng.uniform())
        # Bracket the slice along x + t * direction.
        u = rng.uniform()
        t_lo = -width * u
        t_hi = width * (1.0 - u)
        expansions = 0
        while log_density(x + t_lo * direction) > level:
            t_lo -= width
            expansions += 1
            if expansions > max_step_out:
                raise StepOutFailure("exceeded step-out expansion limit")
        while log_density(x + t_hi * direction) > level:
            t_hi += width
            expansions += 1
            if expansions > max_step_out:
                raise StepOutFailure("exceeded step-out expansion limit")
        for _ in range(_MAX_SHRINK):
            t = rng.uniform(t_lo, t_hi)
            candidate = x + t * direction
            logp_candidate = float(log_density(candidate))
            if logp_candidate > level:
                x = candidate
                logp = logp_candidate
                break
            if t < 0.0:
                t_lo = t
            else:
                t_hi = t
        else:
            raise RuntimeError("slice shrinkage failed to find an interior point")
        out[step] = x
    return out


@lru_cache(maxsize=32)
def _log_bounds(width: int) -> tuple[np.ndarray, np.ndarray]:
    return GpHyperParams.log_bounds(width)


def log_prior(log_theta: np.ndarray, width: int) -> float:
    """Log prior density over the log-parameterised hyperparameters.

    Zero-mean normals on log lengthscales, log amplitude, and log warp
    shapes; flat on log noise variance.  Outside the hyperparameter box
    the density is ``-inf``.
    """
    lo, hi = _log_bounds(width)
    if np.any(log_theta < lo) or np.any(log_theta > hi):
        return -math.inf
    scale_part = log_theta[:width + 1]
    warp_part = log_theta[width + 2:]
    return float(
        -0.5 * np.sum((scale_part / _PRIOR_SD_SCALE) ** 2)
        - 0.5 * np.sum((warp_part / _PRIOR_SD_WARP) ** 2)
    )


def _posterior_log_density(design: np.ndarray, y: np.ndarray, width: int):
    lml = lml_function(design, y)

    def target(log_theta: np.ndarray) -> float:
        prior = log_prior(log_theta, width)
        if not math.isfinite(prior):
            return -math.inf
        theta = GpHyperParams.from_log_vector(log_theta, width)
        try:
            return lml(theta) + prior
        except CholeskyFailure:
            return -math.inf
    return target


def slice_sample_thetas(design: np.ndarray, y: np.ndarray, config: McmcConfig,
                        seed: int | np.random.SeedSequence, *,
                        sample_warp: bool = True) -> list[GpHyperParams]:
    """Posterior ensemble of hyperparameters via slice sampling.

    Runs one chain of ``config.chain_length`` steps from the default
    hyperparameters, discards ``config.burn_in``, and keeps every
    ``config.thinning``-th remaining state.  With ``sample_warp=False``
    the warp coordinates stay pinned at the identity and only
    lengthscales, amplitude, and noise are sampled.

    Returns a list of ``config.effective_samples`` settings, all inside
    the hyperparameter box.  Deterministic for a fixed seed.
    """
    config.validate()
    design = np.atleast_2d(np.asarray(design, dtype=float))
    width = design.shape[1]
    rng = np.random.default_rng(seed)
    target = _posterior_log_density(design, y, width)
    x0 = GpHyperParams.default(width).to_log_vector()

    if sample_warp:
        chain = slice_sample(target, x0, config.chain_length, rng)
    else:
        free = np.arange(width + 2)

        def embedded(u: np.ndarray) -> float:
            full = x0.copy()
            full[free] = u
            return target(full)

        sub_chain = slice_sample(embedded, x0[free], config.chain_length, rng)
        chain = np.tile(x0, (config.chain_length, 1))
        chain[:, free] = sub_chain

    kept = chain[config.burn_in::config.thinning]
    return [GpHyperParams.from_log_vector(row, width) for row in kept]


def empirical_bayes_fit(design: np.ndarray, y: np.ndarray,
                        seed: int | np.random.SeedSequence) -> GpHyperParams:
    """Single hyperparameter setting maximising the log marginal likelihood.

    Runs bounded L-BFGS-B from the default setting plus a handful of
    space-filling starts inside the log box and returns the best endpoint.
    The result never scores below the default setting (minus a numerical
    hair), because the default is itself a candidate.

    Raises
    ------
    CholeskyFailure
        If every candidate fails to factorise.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    width = design.shape[1]
    k = 3 * width + 2
    lo, hi = GpHyperParams.log_bounds(width)
    lml = lml_function(design, y)

    def objective(log_theta: np.ndarray) -> float:
        theta = GpHyperParams.from_log_vector(np.clip(log_theta, lo, hi), width)
        try:
            return -lml(theta)
        except CholeskyFailure:
            return _BAD_OBJECTIVE

    x_default = GpHyperParams.default(width).to_log_vector()
    if k <= MAX_DIMENSION:
        unit = sobol_points(k, _EB_STARTS, skip=1)
    else:
        unit = np.random.default_rng(seed).random((_EB_STARTS, k))
    starts = [x_default] + [lo + row * (hi - lo) for row in unit]

    candidates: list[tuple[float, np.ndarray]] = [(objective(x_default), x_default)]
    for x0 in starts:
        result = minimize(
            objective, x0, method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": _EB_MAXITER},
        )
        candidates.append((float(result.fun), np.asarray(result.x)))

    best_val, best_x = min(candidates, key=lambda item: item[0])
    if best_val >= _BAD_OBJECTIVE:
        raise CholeskyFailure("no hyperparameter start produced a usable factorisation")
    return GpHyperParams.from_log_vector(np.clip(best_x, lo, hi), width)
