"""The asynchronous tuning loop.

One coordinator (the thread calling :func:`run_job`) owns all mutable job
state.  Trials execute concurrently through an executor and talk back
only via an ordered event queue.  Whenever a slot frees, the coordinator
refits the surrogate on everything observed so far and proposes the next
candidate, so slots never wait for each other.  Every state transition is
journaled to the store before the coordinator acts on it, which makes a
crash at any event boundary recoverable by replay.
"""

from __future__ import annotations

import logging
import queue
import time

import numpy as np

from collections.abc import Iterable

from .acquisition import AcquisitionContext, propose
from .inference import empirical_bayes_fit, slice_sample_thetas
from .jobs import (
    JobConfigError,
    TrialRecord,
    TuningJobConfig,
    TuningJobState,
    validate_job_config,
)
from .jobstore import JobStore, NotFoundError, StoreError
from .runner import Executor, TrialEvent
from .space import (
    Configuration,
    SearchSpace,
    decode,
    encode,
    sample_random,
    validate_value,
)
from .sobol import scrambled_sobol_points
from .stopping import MetricCurve, median_rule
from .surrogate import CholeskyFailure, fit_posterior

logger = logging.getLogger(__name__)

__all__ = [
    "JobAborted",
    "ParentNotFoundError",
    "UnknownTrialError",
    "initial_design_size",
    "next_candidate",
    "on_metric_report",
    "merge_warm_start",
    "run_job",
]

# Purpose tags keeping the per-job seed streams disjoint.
_SEED_INIT_DESIGN = 101
_SEED_CANDIDATE = 202
_SEED_EXECUTOR = 303

# Below this many observations the hyperparameter posterior is too flat
# for a point estimate to be meaningful; sampling is forced.
_MIN_OBS_FOR_POINT_ESTIMATE = 3


class JobAborted(RuntimeError):
    """The job hit an unrecoverable store failure and gave up."""


class ParentNotFoundError(RuntimeError):
    """A warm-start parent job id does not exist in the store."""


class UnknownTrialError(KeyError):
    """A metric report referenced a trial that was never launched."""


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _trial_index(trial_id: str) -> int:
    return int(trial_id.rsplit("-", 1)[1])


def initial_design_size(config: TuningJobConfig) -> int:
    """Number of space-filling points before model-based proposals start."""
    width = config.space.encoded_width
    return max(config.max_parallel + 1, min(2 * width, 10))


def _design_point(config: TuningJobConfig, index: int) -> Configuration:
    seed = _derive_seed(config.seed, _SEED_INIT_DESIGN)
    points = scrambled_sobol_points(config.space.encoded_width, index + 1, seed)
    return decode(points[index], config.space)


def next_candidate(state: TuningJobState, config: TuningJobConfig,
                   seed: int) -> Configuration:
    """Pick the configuration for the next trial launch.

    Random strategy always samples uniformly.  The Bayesian strategy
    walks a scrambled-Sobol initial design until enough observations and
    in-flight trials exist, then refits the hyperparameters on all
    observations (warm-start ones included) and maximises the ensemble
    acquisition, excluding pending points.
    """
    if config.strategy == "random":
        return sample_random(config.space, seed, 1)[0]

    design, y = state.observations(config.objective.goal)
    n_obs = y.shape[0]
    running = [state.trials[tid] for tid in state.running_ids]
    if n_obs + len(running) < initial_design_size(config) or n_obs == 0:
        return _design_point(config, len(state.trials))

    inference_seed = _derive_seed(seed, 1)
    propose_seed = _derive_seed(seed, 2)
    if config.inference == "mcmc" or n_obs < _MIN_OBS_FOR_POINT_ESTIMATE:
        thetas = slice_sample_thetas(design, y, config.mcmc, inference_seed)
    else:
        thetas = [empirical_bayes_fit(design, y, inference_seed)]
    posteriors = []
    for theta in thetas:
        try:
            posteriors.append(fit_posterior(design, y, theta))
        except CholeskyFailure:
            continue
    if not posteriors:
        raise CholeskyFailure("no hyperparameter sample could be factorised")
    ctx = AcquisitionContext(
        posteriors=tuple(posteriors),
        incumbent=float(np.min(y)),
        pending=tuple(tuple(t.encoded) for t in running),
        space=config.space,
    )
    return propose(ctx, propose_seed)


def on_metric_report(state: TuningJobState, config: TuningJobConfig,
                     trial_id: str, iteration: int, value: float) -> bool:
    """Record one metric report; return True when the trial should stop.

    Appends to the trial's curve and, with median early stopping enabled,
    compares the trial against fully completed curves at this iteration.
    Reports for trials already terminal are ignored (returns False).

    Raises
    ------
    UnknownTrialError
        If the trial was never launched.
    """
    trial = state.trials.get(trial_id)
    if trial is None:
        raise UnknownTrialError(trial_id)
    if trial.status != "running":
        return False
    trial.curve.append(iteration, value)
    if config.early_stopping != "median":
        return False
    completed = [t.curve for t in state.trials.values()
                 if t.status == "completed"]
    decision = median_rule(trial.curve, completed, iteration,
                           config.objective.goal)
    return decision.should_stop


def merge_warm_start(parents: Iterable[tuple[TuningJobConfig, Iterable[TrialRecord]]],
                     child_space: SearchSpace) -> list[tuple[np.ndarray, float]]:
    """Parent observations usable by a child job.

    Every completed or early-stopped parent trial is re-validated against
    the child space: values out of range, categories unknown to the
    child, or values invalid under the child's scaling (a linear-parent
    0.0 under a log-scaled child dimension) drop the observation.
    Survivors are re-encoded with the child space.  The result feeds the
    GP but never counts toward the child's trial budget.
    """
    merged: list[tuple[np.ndarray, float]] = []
    for _, trials in parents:
        for trial in trials:
            if not trial.has_observation:
                continue
            if all(dim.name in trial.config
                   and validate_value(dim, trial.config[dim.name])
                   for dim in child_space):
                merged.append((encode(trial.config, child_space),
                               float(trial.final_value)))
    return merged


class _Coordinator:
    def __init__(self, config: TuningJobConfig, store: JobStore,
                 executor: Executor) -> None:
        self.config = config
        self.store = store
        self.executor = executor
        self.state = TuningJobState()
        self.events: queue.Queue[TrialEvent] = queue.Queue()
        self.stop_requested = False
        self._status_poll_counter = 0

    # -- persistence helpers (store failures abort the job) ---------------

    def _journal(self, event: dict) -> None:
        event.setdefault("ts", time.time())
        try:
            self.store.append_event(self.config.job_id, event)
        except (StoreError, OSError) as exc:
            self._abort(exc)

    def _abort(self, cause: Exception) -> None:
        for trial_id in self.state.running_ids:
            try:
                self.executor.request_stop(trial_id)
            except Exception:
                logger.exception("stop request failed during abort")
        raise JobAborted(f"store failure: {cause}") from cause

    def _snapshot_trial(self, trial: TrialRecord) -> None:
        try:
            self.store.write_trial(self.config.job_id, trial)
        except (StoreError, OSError) as exc:
            self._abort(exc)

    def _set_job_status(self, status: str) -> None:
        self._journal({"type": "job_status_changed", "status": status})
        self.state.status = status
        try:
            self.store.set_status(self.config.job_id, status)
        except (StoreError, OSError) as exc:
            self._abort(exc)

    # -- launching ---------------------------------------------------------

    def _launch_new(self) -> None:
        config = self.config
        index = len(self.state.trials)
        trial_id = f"trial-{index + 1:04d}"
        candidate_seed = _derive_seed(config.seed, _SEED_CANDIDATE, index)
        candidate = next_candidate(self.state, config, candidate_seed)
        encoded = encode(candidate, config.space)
        now = time.time()
        self._journal({
            "type": "trial_launched", "trial_id": trial_id, "attempt": 1,
            "config": dict(candidate.values),
            "encoded": [float(v) for v in encoded], "ts": now,
        })
        record = TrialRecord(
            trial_id=trial_id, config=candidate, encoded=encoded,
            status="running", curve=MetricCurve(trial_id), attempts=1,
            started=now,
        )
        self.state.trials[trial_id] = record
        self._snapshot_trial(record)
        executor_seed = _derive_seed(config.seed, _SEED_EXECUTOR, index, 1)
        self.executor.launch(trial_id, candidate, executor_seed,
                             self.events.put)

    def _relaunch(self, trial_id: str) -> None:
        record = self.state.trials[trial_id]
        attempt = record.attempts + 1
        now = time.time()
        self._journal({
            "type": "trial_launched", "trial_id": trial_id, "attempt": attempt,
            "config": dict(record.config.values),
            "encoded": [float(v) for v in record.encoded], "ts": now,
        })
        record.status = "running"
        record.attempts = attempt
        record.curve = MetricCurve(trial_id)
        record.final_value = None
        record.started = now
        record.finished = None
        self._snapshot_trial(record)
        executor_seed = _derive_seed(self.config.seed, _SEED_EXECUTOR,
                                     _trial_index(trial_id), attempt)
        self.executor.launch(trial_id, record.config, executor_seed,
                             self.events.put)

    def _fill_slots(self) -> None:
        config = self.config
        while len(self.state.running_ids) < config.max_parallel:
            retries = sorted(self.state.retry_ids)
            if retries:
                self._relaunch(retries[0])
            elif (not self.stop_requested
                  and len(self.state.trials) < config.max_trials):
                self._launch_new()
            else:
                break

    # -- event handling ----------------------------------------------------

    def _handle_metric(self, event: TrialEvent) -> None:
        config = self.config
        if event.metric != config.objective.name:
            return
        trial = self.state.trials.get(event.trial_id)
        if trial is None or trial.status != "running":
            return
        last = trial.curve.final_iteration
        if last is not None and event.iteration <= last:
            return
        self._journal({
            "type": "metric_reported", "trial_id": event.trial_id,
            "iteration": int(event.iteration), "value": float(event.value),
        })
        should_stop = on_metric_report(self.state, config, event.trial_id,
                                       event.iteration, event.value)
        if not should_stop:
            return
        final = trial.curve.best_value(config.objective.goal)
        now = time.time()
        self._journal({
            "type": "trial_stopped", "trial_id": event.trial_id,
            "final_value": float(final), "ts": now,
        })
        trial.status = "early_stopped"
        trial.final_value = float(final)
        trial.finished = now
        self._snapshot_trial(trial)
        self.executor.request_stop(event.trial_id)

    def _handle_completed(self, event: TrialEvent) -> None:
        trial = self.state.trials.get(event.trial_id)
        if trial is None or trial.status != "running":
            return
        if trial.curve.final_value is None:
            self._handle_failed(TrialEvent(
                "failed", event.trial_id, reason="protocol_violation"))
            return
        final = trial.curve.final_value
        now = time.time()
        self._journal({
            "type": "trial_completed", "trial_id": event.trial_id,
            "final_value": float(final), "ts": now,
        })
        trial.status = "completed"
        trial.final_value = float(final)
        trial.finished = now
        self._snapshot_trial(trial)

    def _handle_failed(self, event: TrialEvent) -> None:
        trial = self.state.trials.get(event.trial_id)
        if trial is None or trial.status != "running":
            return
        can_retry = trial.attempts <= self.config.retry_limit
        now = time.time()
        self._journal({
            "type": "trial_failed", "trial_id": event.trial_id,
            "reason": event.reason or "unknown", "terminal": not can_retry,
            "ts": now,
        })
        trial.failure_reason = event.reason or "unknown"
        if can_retry:
            trial.status = "pending"
            trial.final_value = None
        else:
            trial.status = "failed"
            trial.finished = now
        self._snapshot_trial(trial)

    def _handle(self, event: TrialEvent) -> None:
        if event.kind == "metric":
            self._handle_metric(event)
        elif event.kind == "completed":
            self._handle_completed(event)
        elif event.kind == "failed":
            self._handle_failed(event)

    # -- main loop ---------------------------------------------------------

    def _poll_stop_request(self) -> None:
        if self.stop_requested:
            return
        try:
            status = self.store.read_status(self.config.job_id)
        except (StoreError, OSError):
            return
        if status == "stopping":
            self.stop_requested = True
            self.state.status = "stopping"

    def _done(self) -> bool:
        if self.state.running_ids or self.state.retry_ids:
            return False
        if self.stop_requested:
            return True
        return (len(self.state.trials) >= self.config.max_trials
                and self.state.terminal_count == len(self.state.trials))

    def run(self, resumed_state: TuningJobState | None) -> TuningJobState:
        if resumed_state is not None:
            self.state = resumed_state
        self.stop_requested = self.state.status == "stopping"
        if self.state.status == "completed":
            return self.state
        if self.state.status != "stopping":
            self._set_job_status("running")
        while True:
            self._poll_stop_request()
            self._fill_slots()
            if self._done():
                break
            event = self.events.get()
            self._handle(event)
        self._set_job_status("completed")
        return self.state


def run_job(config: TuningJobConfig, store: JobStore,
            executor: Executor) -> TuningJobState:
    """Run (or resume) a tuning job to completion.

    A fresh job id creates the job in the store; an existing one resumes
    from its journal, using the persisted configuration.  Exactly
    ``max_trials`` trials reach a terminal status unless the job is
    stopped early.  Warm-start parents are loaded from the same store.

    Raises
    ------
    JobAborted
        On unrecoverable store failure mid-run.
    ParentNotFoundError
        If a warm-start parent id is missing from the store.
    JobConfigError
        If the configuration is invalid.
    """
    validate_job_config(config)
    resumed: TuningJobState | None = None
    if store.job_exists(config.job_id):
        stored_config, _, resumed = store.load_job(config.job_id)
        if stored_config != config:
            logger.info("job %s: resuming with the stored configuration",
                        config.job_id)
        config = stored_config
    else:
        spec = getattr(executor, "spec", None)
        if spec is None:
            raise JobConfigError(
                "executor must expose a .spec for job creation")
        store.create_job(config, spec)

    parents = []
    for parent_id in config.warm_start_parents:
        try:
            parent_config, _, parent_state = store.load_job(parent_id)
        except NotFoundError as exc:
            raise ParentNotFoundError(
                f"warm-start parent {parent_id!r} not found") from exc
        parents.append((parent_config, list(parent_state.trials.values())))

    coordinator = _Coordinator(config, store, executor)
    if parents:
        warm = merge_warm_start(parents, config.space)
        state = resumed if resumed is not None else coordinator.state
        state.warm_obs = warm
    return coordinator.run(resumed)
