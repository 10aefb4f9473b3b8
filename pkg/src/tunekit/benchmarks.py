"""Built-in synthetic objectives for tests, demos, and acceptance runs.

Each benchmark declares its canonical search space and, where known, its
global minimum.  ``curve-sim`` additionally exposes a per-iteration
learning-curve value so early-stopping behaviour can be exercised without
a real training job: curves decay monotonically toward a configuration-
dependent asymptote and, by construction, never cross (a configuration
with a better asymptote is better at every iteration).
"""

from __future__ import annotations

import math
import re
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from .space import SearchSpace, continuous

__all__ = [
    "UnknownBenchmarkError",
    "Benchmark",
    "get_benchmark",
    "benchmark_names",
    "branin",
    "hartmann3",
    "sphere",
    "log_valley",
    "curve_sim_params",
    "curve_sim_value",
]


class UnknownBenchmarkError(KeyError):
    """Requested benchmark name is not in the registry."""


@dataclass(frozen=True)
class Benchmark:
    """A named objective with its canonical space and known optimum."""

    name: str
    space: SearchSpace
    optimum: float | None
    evaluate: Callable[[Mapping], float]
    curve_value: Callable[[Mapping, int], float] | None = None


def branin(x1: float, x2: float) -> float:
    """Branin function; global minimum 0.397887 (three minimizers)."""
    b = 5.1 / (4.0 * math.pi ** 2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (
        (x2 - b * x1 ** 2 + c * x1 - 6.0) ** 2
        + 10.0 * (1.0 - t) * math.cos(x1)
        + 10.0
    )


_HARTMANN3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN3_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
_HARTMANN3_P = np.array([
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
])


def hartmann3(x1: float, x2: float, x3: float) -> float:
    """Hartmann 3-D function; global minimum -3.86278."""
    x = np.array([x1, x2, x3])
    inner = np.sum(_HARTMANN3_A * (x - _HARTMANN3_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN3_ALPHA * np.exp(-inner)))


def sphere(*coords: float) -> float:
    """Sum of squares; global minimum 0 at the origin."""
    return float(sum(c * c for c in coords))


def log_valley(c: float) -> float:
    """Distance of log10(c) from -3; minimised at c = 1e-3.

    Over the canonical domain [1e-9, 1e9] nearly all linear-uniform mass
    sits at large c, so this separates log from linear search scaling.
    """
    return abs(math.log10(c) + 3.0)


# Learning-curve simulator: an exponential decay from a common starting
# loss down to an asymptote set by the configuration.  The time constant
# grows with the asymptote, so worse configurations converge more slowly
# and curves never cross.
_CURVE_START = 5.0
_CURVE_TAU_BASE = 4.0
_CURVE_TAU_SLOPE = 10.0


def curve_sim_params(config: Mapping) -> tuple[float, float, float]:
    """(y_start, y_final, tau) for a curve-sim configuration."""
    y_final = 0.5 * (float(config["u1"]) ** 2 + float(config["u2"]) ** 2)
    tau = _CURVE_TAU_BASE + _CURVE_TAU_SLOPE * y_final
    return _CURVE_START, y_final, tau


def curve_sim_value(config: Mapping, iteration: int) -> float:
    """Simulated loss after ``iteration`` training iterations."""
    y_start, y_final, tau = curve_sim_params(config)
    return y_final + (y_start - y_final) * math.exp(-iteration / tau)


def _branin_benchmark() -> Benchmark:
    space = SearchSpace([
        continuous("x1", -5.0, 10.0),
        continuous("x2", 0.0, 15.0),
    ])
    return Benchmark(
        "branin", space, 0.397887,
        evaluate=lambda cfg: branin(float(cfg["x1"]), float(cfg["x2"])),
    )


def _hartmann3_benchmark() -> Benchmark:
    space = SearchSpace([continuous(f"x{i}", 0.0, 1.0) for i in (1, 2, 3)])
    return Benchmark(
        "hartmann3", space, -3.86278,
        evaluate=lambda cfg: hartmann3(*(float(cfg[f"x{i}"]) for i in (1, 2, 3))),
    )


def _sphere_benchmark(d: int) -> Benchmark:
    space = SearchSpace([continuous(f"x{i}", -1.0, 1.0) for i in range(1, d + 1)])
    return Benchmark(
        f"sphere-{d}", space, 0.0,
        evaluate=lambda cfg: sphere(*(float(cfg[f"x{i}"]) for i in range(1, d + 1))),
    )


def _log_valley_benchmark() -> Benchmark:
    space = SearchSpace([continuous("c", 1e-9, 1e9, scaling="log")])
    return Benchmark(
        "log-valley", space, 0.0,
        evaluate=lambda cfg: log_valley(float(cfg["c"])),
    )


def _curve_sim_benchmark() -> Benchmark:
    space = SearchSpace([
        continuous("u1", 0.0, 1.0),
        continuous("u2", 0.0, 1.0),
    ])
    return Benchmark(
        "curve-sim", space, None,
        evaluate=lambda cfg: curve_sim_params(cfg)[1],
        curve_value=curve_sim_value,
    )


_FIXED = {
    "branin": _branin_benchmark,
    "hartmann3": _hartmann3_benchmark,
    "log-valley": _log_valley_benchmark,
    "curve-sim": _curve_sim_benchmark,
}

_SPHERE_RE = re.compile(r"^sphere-(\d+)$")


def get_benchmark(name: str) -> Benchmark:
    """Look up a benchmark by name; ``sphere-<d>`` is parameterised."""
    factory = _FIXED.get(name)
    if factory is not None:
        return factory()
    match = _SPHERE_RE.match(name)
    if match:
        d = int(match.group(1))
        if 1 <= d <= 64:
            return _sphere_benchmark(d)
    raise UnknownBenchmarkError(
        f"unknown benchmark {name!r}; available: {', '.join(benchmark_names())}"
    )


def benchmark_names() -> list[str]:
    return sorted(_FIXED) + ["sphere-<d>"]
