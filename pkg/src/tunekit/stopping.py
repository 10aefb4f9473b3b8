"""Median-rule early stopping over intermediate metric curves.

A running trial is compared, at its latest reported iteration, against
the median of the fully completed trials' values at that iteration.  The
rule stays inactive until enough trials have completed and until the
running trial has passed a dynamically chosen warm-up iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = [
    "MissingPointError",
    "MetricCurve",
    "StopDecision",
    "QUORUM",
    "activation_threshold",
    "median_rule",
]

# Completed-trial quorum before the rule may fire, and the fraction of the
# median completed duration used as the warm-up iteration.
QUORUM = 4
_ACTIVATION_FRACTION = 0.25

Verdict = Literal["continue", "stop"]
Reason = Literal["below_activation", "no_quorum", "worse_than_median", "not_worse"]
Goal = Literal["minimize", "maximize"]


class MissingPointError(ValueError):
    """The running curve has no value at the iteration under decision."""


@dataclass
class MetricCurve:
    """Per-trial objective readings indexed by training iteration."""

    trial_id: str
    points: list[tuple[int, float]] = field(default_factory=list)

    def append(self, iteration: int, value: float) -> None:
        """Add a reading; iterations must arrive strictly increasing."""
        if iteration < 1:
            raise ValueError(f"iterations start at 1, got {iteration}")
        if self.points and iteration <= self.points[-1][0]:
            raise ValueError(
                f"iteration {iteration} does not advance past {self.points[-1][0]}"
            )
        self.points.append((int(iteration), float(value)))

    def value_at(self, iteration: int) -> float | None:
        """Exact value at ``iteration``, or None if not reported."""
        for r, v in self.points:
            if r == iteration:
                return v
            if r > iteration:
                break
        return None

    def value_at_or_before(self, iteration: int) -> float | None:
        """Latest value reported at or before ``iteration``, if any."""
        latest = None
        for r, v in self.points:
            if r > iteration:
                break
            latest = v
        return latest

    @property
    def final_iteration(self) -> int | None:
        return self.points[-1][0] if self.points else None

    @property
    def final_value(self) -> float | None:
        return self.points[-1][1] if self.points else None

    def best_value(self, goal: Goal = "minimize") -> float | None:
        """Best value seen anywhere on the curve."""
        if not self.points:
            return None
        values = [v for _, v in self.points]
        return min(values) if goal == "minimize" else max(values)


@dataclass(frozen=True)
class StopDecision:
    verdict: Verdict
    reason: Reason

    @property
    def should_stop(self) -> bool:
        return self.verdict == "stop"


def activation_threshold(completed: list[MetricCurve]) -> float:
    """First iteration at which the rule may fire.

    Returns ``+inf`` (rule inactive) until at least ``QUORUM`` completed
    curves exist; afterwards a quarter of the median completed duration,
    floored, but never below 1.
    """
    durations = [c.final_iteration for c in completed if c.final_iteration is not None]
    if len(durations) < QUORUM:
        return math.inf
    median_duration = float(np.median(durations))
    return max(1, math.floor(_ACTIVATION_FRACTION * median_duration))


def median_rule(running: MetricCurve, completed: list[MetricCurve],
                r: int, goal: Goal = "minimize") -> StopDecision:
    """Decide whether a running trial should stop at iteration ``r``.

    Completed curves without a value exactly at ``r`` contribute their
    latest earlier value; curves with nothing at or before ``r`` are
    excluded.  The decision needs ``QUORUM`` contributing curves, stops
    only on a strictly worse-than-median value, and never fires below
    the activation threshold.

    Raises
    ------
    MissingPointError
        If the running curve has no value at ``r``.
    """
    running_value = running.value_at(r)
    if running_value is None:
        raise MissingPointError(
            f"trial {running.trial_id!r} has no value at iteration {r}"
        )
    if r < activation_threshold(completed):
        return StopDecision("continue", "below_activation")
    contributions = [
        v for c in completed
        if (v := c.value_at_or_before(r)) is not None
    ]
    if len(contributions) < QUORUM:
        return StopDecision("continue", "no_quorum")
    median = float(np.median(contributions))
    worse = running_value > median if goal == "minimize" else running_value < median
    if worse:
        return StopDecision("stop", "worse_than_median")
    return StopDecision("continue", "not_worse")
