"""Crash-recoverable filesystem persistence for tuning jobs.

Layout per job under the store root::

    <root>/<job_id>/job.json            config + coarse status (atomic rewrite)
    <root>/<job_id>/trials/<id>.json    per-trial snapshot at status changes
    <root>/<job_id>/events.log          append-only JSON-lines event journal

The event journal is the source of truth: job state is reconstructed by
replaying it over job.json.  job.json is always written via a temp file
and rename, so readers never observe it half-written.  A torn final line
in events.log (a crash mid-append) is skipped with a warning; corruption
anywhere else is an error.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .jobs import (
    JobConfigError,
    TrialRecord,
    TuningJobConfig,
    TuningJobState,
    job_config_from_dict,
    job_config_to_dict,
    trial_record_to_dict,
)
from .runner import ExecutorSpec
from .space import Configuration, encode
from .stopping import MetricCurve

logger = logging.getLogger(__name__)

__all__ = [
    "StoreError",
    "AlreadyExistsError",
    "NotFoundError",
    "CorruptStoreError",
    "EVENT_TYPES",
    "JobStore",
]

EVENT_TYPES = frozenset({
    "trial_launched",
    "metric_reported",
    "trial_completed",
    "trial_failed",
    "trial_stopped",
    "job_status_changed",
})


class StoreError(RuntimeError):
    pass


class AlreadyExistsError(StoreError):
    pass


class NotFoundError(StoreError):
    pass


class CorruptStoreError(StoreError):
    pass


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class JobStore:
    """Single-writer persistence rooted at a directory.

    The coordinator that runs a job is the only writer for that job;
    list/describe may read concurrently and see the last flushed state.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._event_handles: dict[str, object] = {}

    # -- paths -------------------------------------------------------------

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def _job_json(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "job.json"

    def _events_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "events.log"

    def _trials_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "trials"

    # -- job lifecycle -----------------------------------------------------

    def job_exists(self, job_id: str) -> bool:
        return self._job_json(job_id).is_file()

    def create_job(self, config: TuningJobConfig, executor: ExecutorSpec) -> str:
        """Validate, then write the job directory; nothing touches disk on error."""
        payload = job_config_to_dict(config, executor, status="created")
        job_config_from_dict(payload)  # round-trip sanity before any write
        job_dir = self.job_dir(config.job_id)
        if self._job_json(config.job_id).exists():
            raise AlreadyExistsError(f"job {config.job_id!r} already exists")
        try:
            job_dir.mkdir(parents=True, exist_ok=True)
            self._trials_dir(config.job_id).mkdir(exist_ok=True)
            _atomic_write_json(self._job_json(config.job_id), payload)
            self._events_path(config.job_id).touch()
        except OSError as exc:
            raise StoreError(f"cannot create job {config.job_id!r}: {exc}") from exc
        return config.job_id

    def read_job_file(self, job_id: str) -> dict:
        path = self._job_json(job_id)
        if not path.is_file():
            raise NotFoundError(f"job {job_id!r} not found under {self.root}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptStoreError(f"cannot read job.json for {job_id!r}: {exc}") from exc

    def set_status(self, job_id: str, status: str) -> None:
        payload = self.read_job_file(job_id)
        payload["status"] = status
        try:
            _atomic_write_json(self._job_json(job_id), payload)
        except OSError as exc:
            raise StoreError(f"cannot update status for {job_id!r}: {exc}") from exc

    def read_status(self, job_id: str) -> str:
        return str(self.read_job_file(job_id).get("status", "created"))

    # -- events ------------------------------------------------------------

    def append_event(self, job_id: str, event: dict) -> None:
        """Append one journal line and flush it to disk before returning."""
        if event.get("type") not in EVENT_TYPES:
            raise ValueError(f"unknown event type {event.get('type')!r}")
        handle = self._event_handles.get(job_id)
        if handle is None:
            if not self.job_exists(job_id):
                raise NotFoundError(f"job {job_id!r} not found under {self.root}")
            try:
                handle = open(self._events_path(job_id), "a", encoding="utf-8")
            except OSError as exc:
                raise StoreError(f"cannot open events.log: {exc}") from exc
            self._event_handles[job_id] = handle
        try:
            handle.write(json.dumps(event, separators=(",", ":")) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        except OSError as exc:
            raise StoreError(f"cannot append event: {exc}") from exc

    def close(self) -> None:
        for handle in self._event_handles.values():
            try:
                handle.close()
            except OSError:
                pass
        self._event_handles.clear()

    def read_events(self, job_id: str) -> list[dict]:
        """All parseable journal entries, tolerating a torn final line."""
        path = self._events_path(job_id)
        if not path.is_file():
            if not self.job_exists(job_id):
                raise NotFoundError(f"job {job_id!r} not found under {self.root}")
            return []
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StoreError(f"cannot read events.log: {exc}") from exc
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        events = []
        for index, line in enumerate(lines):
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                if index == len(lines) - 1:
                    logger.warning(
                        "job %s: discarding torn final journal line (%s)",
                        job_id, exc)
                    break
                raise CorruptStoreError(
                    f"corrupt journal line {index + 1} for job {job_id!r}"
                ) from exc
        return events

    # -- trial snapshots ---------------------------------------------------

    def write_trial(self, job_id: str, record: TrialRecord) -> None:
        path = self._trials_dir(job_id) / f"{record.trial_id}.json"
        try:
            path.parent.mkdir(exist_ok=True)
            _atomic_write_json(path, trial_record_to_dict(record))
        except OSError as exc:
            raise StoreError(f"cannot write trial {record.trial_id!r}: {exc}") from exc

    # -- state reconstruction ---------------------------------------------

    def load_job(self, job_id: str) -> tuple[TuningJobConfig, ExecutorSpec,
                                             TuningJobState]:
        """Rebuild job state by replaying the journal over job.json.

        Trials left running by a crash are downgraded to a failed attempt:
        eligible for relaunch if attempts remain, terminally failed
        otherwise.
        """
        payload = self.read_job_file(job_id)
        try:
            config, executor, status = job_config_from_dict(payload)
        except JobConfigError as exc:
            raise CorruptStoreError(f"invalid job.json for {job_id!r}: {exc}") from exc
        state = replay_events(config, self.read_events(job_id))
        state.status = status if status in ("stopping",) else state.status
        for trial in state.trials.values():
            if trial.status == "running":
                if trial.attempts <= config.retry_limit:
                    trial.status = "pending"
                else:
                    trial.status = "failed"
                    trial.failure_reason = "interrupted"
                    trial.finished = trial.finished or time.time()
        return config, executor, state

    # -- read-only views ---------------------------------------------------

    def list_jobs(self) -> list[tuple[str, str]]:
        """(job_id, status) pairs for every job directory under the root."""
        out = []
        if not self.root.is_dir():
            return out
        for entry in sorted(self.root.iterdir()):
            if not entry.is_dir() or not (entry / "job.json").is_file():
                continue
            try:
                payload = json.loads((entry / "job.json").read_text(encoding="utf-8"))
                out.append((entry.name, str(payload.get("status", "created"))))
            except (OSError, json.JSONDecodeError):
                out.append((entry.name, "unreadable"))
        return out

    def describe(self, job_id: str) -> dict:
        """Summary of a job: counts, status, and the incumbent."""
        config, _, state = self.load_job(job_id)
        best = state.incumbent(config.objective.goal)
        return {
            "job_id": job_id,
            "status": state.status,
            "strategy": config.strategy,
            "objective": config.objective.name,
            "goal": config.objective.goal,
            "max_trials": config.max_trials,
            "counts": {
                status: state.count(status)
                for status in ("pending", "running", "completed", "failed",
                               "early_stopped")
            },
            "best_trial": best.trial_id if best else None,
            "best_value": best.final_value if best else None,
            "best_config": dict(best.config.values) if best else None,
        }


def replay_events(config: TuningJobConfig, events: list[dict]) -> TuningJobState:
    """Fold a journal into a TuningJobState. Pure; raises on malformed entries."""
    state = TuningJobState(status="created")
    for event in events:
        etype = event.get("type")
        if etype == "job_status_changed":
            state.status = str(event["status"])
            continue
        trial_id = event.get("trial_id")
        if not trial_id:
            raise CorruptStoreError(f"event without trial_id: {event!r}")
        if etype == "trial_launched":
            seen = state.trials.get(trial_id)
            cfg = Configuration(dict(event["config"]))
            encoded = (np.array(event["encoded"], dtype=float)
                       if "encoded" in event else encode(cfg, config.space))
            if seen is None:
                state.trials[trial_id] = TrialRecord(
                    trial_id=trial_id, config=cfg, encoded=encoded,
                    status="running", curve=MetricCurve(trial_id),
                    attempts=int(event.get("attempt", 1)),
                    started=float(event.get("ts", 0.0)),
                )
            else:
                # Relaunch of the same trial (retry): fresh curve, same config.
                seen.status = "running"
                seen.attempts = int(event.get("attempt", seen.attempts + 1))
                seen.curve = MetricCurve(trial_id)
                seen.final_value = None
                seen.started = float(event.get("ts", seen.started or 0.0))
                seen.finished = None
            continue
        trial = state.trials.get(trial_id)
        if trial is None:
            raise CorruptStoreError(
                f"event for unknown trial {trial_id!r}: {event!r}")
        if etype == "metric_reported":
            trial.curve.append(int(event["iteration"]), float(event["value"]))
        elif etype == "trial_completed":
            trial.status = "completed"
            trial.final_value = float(event["final_value"])
            trial.finished = float(event.get("ts", 0.0))
        elif etype == "trial_stopped":
            trial.status = "early_stopped"
            trial.final_value = float(event["final_value"])
            trial.finished = float(event.get("ts", 0.0))
        elif etype == "trial_failed":
            trial.failure_reason = str(event.get("reason", "unknown"))
            if bool(event.get("terminal", True)):
                trial.status = "failed"
                trial.finished = float(event.get("ts", 0.0))
            else:
                trial.status = "pending"
                trial.final_value = None
        else:
            raise CorruptStoreError(f"unknown event type {etype!r}")
    return state
