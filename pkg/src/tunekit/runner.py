"""Trial execution: subprocess children and built-in benchmark evaluation.

An executor owns a pool of worker slots.  ``launch`` starts one trial and
returns immediately; the trial then delivers :class:`TrialEvent` objects
through the ``emit`` callback it was given (metric reports followed by a
single completion or failure).  A trial that is stopped on request goes
silent instead of reporting a terminal event, because the coordinator has
already recorded its fate.

External children follow a small cross-language contract: the proposed
configuration is written to an ``hparams.json`` in the trial's working
directory, the environment carries ``TUNER_TRIAL_ID`` and
``TUNER_HPARAMS_FILE``, and the child reports metrics by printing lines of
the form ``tuner-metric name=<ident> iteration=<uint> value=<float>`` to
stdout.  Exit code 0 means success.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Protocol

import numpy as np

from .benchmarks import get_benchmark
from .space import Configuration, encode

logger = logging.getLogger(__name__)

__all__ = [
    "ExecutorSpecError",
    "ExecutorSpec",
    "TrialEvent",
    "Executor",
    "BuiltinExecutor",
    "ExternalExecutor",
    "HPARAMS_FILENAME",
    "ENV_TRIAL_ID",
    "ENV_HPARAMS_FILE",
    "METRIC_LINE",
    "make_executor",
    "validate_executor_spec",
]

HPARAMS_FILENAME = "hparams.json"
ENV_TRIAL_ID = "TUNER_TRIAL_ID"
ENV_HPARAMS_FILE = "TUNER_HPARAMS_FILE"

METRIC_LINE = re.compile(
    r"^tuner-metric\s+name=([A-Za-z_][A-Za-z0-9_.-]*)\s+iteration=(\d+)\s+"
    r"value=([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$"
)

_POLL_INTERVAL = 0.05


class ExecutorSpecError(ValueError):
    """Executor specification fails validation."""


@dataclass(frozen=True)
class ExecutorSpec:
    """How trials are evaluated.

    ``kind="builtin"`` evaluates a registry benchmark in-process, with
    optional Gaussian noise, a simulated iteration count, and a
    per-iteration delay (``delay_spread`` scales the delay per trial by
    its first encoded coordinate, giving heterogeneous durations).
    ``kind="external"`` spawns ``command`` per trial; ``{hparams}``,
    ``{trial_id}``, and ``{workdir}`` placeholders in the command are
    substituted before spawning.
    """

    kind: Literal["builtin", "external"]
    benchmark: str | None = None
    noise_std: float = 0.0
    iterations: int = 1
    delay: float = 0.0
    delay_spread: float = 0.0
    command: tuple[str, ...] = ()
    workdir: str | None = None
    timeout: float = 3600.0


def validate_executor_spec(spec: ExecutorSpec) -> ExecutorSpec:
    if spec.kind == "builtin":
        if not spec.benchmark:
            raise ExecutorSpecError("builtin executor needs a benchmark name")
        get_benchmark(spec.benchmark)
        if spec.noise_std < 0:
            raise ExecutorSpecError("noise_std must be >= 0")
        if spec.iterations < 1:
            raise ExecutorSpecError("iterations must be >= 1")
        if spec.delay < 0 or spec.delay_spread < 0:
            raise ExecutorSpecError("delays must be >= 0")
    elif spec.kind == "external":
        if not spec.command:
            raise ExecutorSpecError("external executor needs a command")
        if spec.timeout <= 0:
            raise ExecutorSpecError("timeout must be > 0")
    else:
        raise ExecutorSpecError(f"unknown executor kind {spec.kind!r}")
    return spec


@dataclass(frozen=True)
class TrialEvent:
    """One message from a running trial to the coordinator."""

    kind: Literal["metric", "completed", "failed"]
    trial_id: str
    metric: str | None = None
    iteration: int | None = None
    value: float | None = None
    reason: str | None = None


EmitFn = Callable[[TrialEvent], None]


class Executor(Protocol):
    """Contract between the scheduler and any trial execution backend."""

    @property
    def spec(self) -> ExecutorSpec: ...

    def launch(self, trial_id: str, config: Configuration, seed: int,
               emit: EmitFn) -> None: ...

    def request_stop(self, trial_id: str) -> None: ...

    def shutdown(self) -> None: ...


class _StopFlags:
    """Thread-safe per-trial stop flags shared by both executors."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._flags: dict[str, threading.Event] = {}

    def register(self, trial_id: str) -> threading.Event:
        with self._lock:
            flag = self._flags.setdefault(trial_id, threading.Event())
        return flag

    def set(self, trial_id: str) -> None:
        self.register(trial_id).set()

    def set_all(self) -> None:
        with self._lock:
            flags = list(self._flags.values())
        for flag in flags:
            flag.set()


class BuiltinExecutor:
    """Evaluates registry benchmarks on a thread pool.

    Emissions are pure given (config, seed): the same trial seed yields
    the same noise draws regardless of scheduling.
    """

    def __init__(self, spec: ExecutorSpec, objective_metric: str,
                 max_workers: int) -> None:
        validate_executor_spec(spec)
        if spec.kind != "builtin":
            raise ExecutorSpecError("BuiltinExecutor requires kind='builtin'")
        self._spec = spec
        self._benchmark = get_benchmark(spec.benchmark)
        self._metric = objective_metric
        self._pool = ThreadPoolExecutor(max_workers=max_workers,
                                        thread_name_prefix="trial")
        self._stops = _StopFlags()

    @property
    def spec(self) -> ExecutorSpec:
        return self._spec

    def launch(self, trial_id: str, config: Configuration, seed: int,
               emit: EmitFn) -> None:
        flag = self._stops.register(trial_id)
        self._pool.submit(self._run, trial_id, config, seed, emit, flag)

    def _trial_delay(self, config: Configuration) -> float:
        spec = self._spec
        if spec.delay <= 0:
            return 0.0
        factor = 1.0
        if spec.delay_spread > 0:
            factor += spec.delay_spread * float(
                encode(config, self._benchmark.space)[0])
        return spec.delay * factor

    def _run(self, trial_id: str, config: Configuration, seed: int,
             emit: EmitFn, stop: threading.Event) -> None:
        spec = self._spec
        try:
            rng = np.random.default_rng(seed)
            delay = self._trial_delay(config)
            for r in range(1, spec.iterations + 1):
                if stop.is_set():
                    return
                if delay > 0:
                    time.sleep(delay)
                if self._benchmark.curve_value is not None:
                    value = self._benchmark.curve_value(config, r)
                else:
                    value = self._benchmark.evaluate(config)
                if spec.noise_std > 0:
                    value += spec.noise_std * rng.standard_normal()
                emit(TrialEvent("metric", trial_id, self._metric, r, float(value)))
            if stop.is_set():
                return
            emit(TrialEvent("completed", trial_id))
        except Exception:
            logger.exception("builtin trial %s raised", trial_id)
            emit(TrialEvent("failed", trial_id, reason="executor_error"))

    def request_stop(self, trial_id: str) -> None:
        self._stops.set(trial_id)

    def shutdown(self) -> None:
        self._stops.set_all()
        self._pool.shutdown(wait=True)


class ExternalExecutor:
    """Runs each trial as a subprocess under the stdout metric protocol."""

    def __init__(self, spec: ExecutorSpec, objective_metric: str,
                 max_workers: int) -> None:
        validate_executor_spec(spec)
        if spec.kind != "external":
            raise ExecutorSpecError("ExternalExecutor requires kind='external'")
        self._spec = spec
        self._metric = objective_metric
        self._base_dir = Path(spec.workdir) if spec.workdir else Path(
            tempfile.mkdtemp(prefix="tunekit-trials-"))
        self._pool = ThreadPoolExecutor(max_workers=max_workers,
                                        thread_name_prefix="trial")
        self._stops = _StopFlags()
        self._procs_lock = threading.Lock()
        self._procs: dict[str, subprocess.Popen] = {}

    @property
    def spec(self) -> ExecutorSpec:
        return self._spec

    def launch(self, trial_id: str, config: Configuration, seed: int,
               emit: EmitFn) -> None:
        flag = self._stops.register(trial_id)
        self._pool.submit(self._run, trial_id, config, seed, emit, flag)

    def _command_for(self, trial_dir: Path, trial_id: str) -> list[str]:
        substitutions = {
            "{hparams}": str(trial_dir / HPARAMS_FILENAME),
            "{trial_id}": trial_id,
            "{workdir}": str(trial_dir),
        }
        out = []
        for arg in self._spec.command:
            for key, value in substitutions.items():
                arg = arg.replace(key, value)
            out.append(arg)
        return out

    def _run(self, trial_id: str, config: Configuration, seed: int,
             emit: EmitFn, stop: threading.Event) -> None:
        del seed  # children derive their own randomness from hparams
        trial_dir = self._base_dir / trial_id
        trial_dir.mkdir(parents=True, exist_ok=True)
        hparams_path = trial_dir / HPARAMS_FILENAME
        # json round-trips Python floats exactly (shortest-repr encoding),
        # so the child sees bit-identical numbers.
        hparams_path.write_text(json.dumps(dict(config.values), indent=2) + "\n")
        env = dict(os.environ)
        env[ENV_TRIAL_ID] = trial_id
        env[ENV_HPARAMS_FILE] = str(hparams_path)
        try:
            proc = subprocess.Popen(
                self._command_for(trial_dir, trial_id),
                cwd=trial_dir, env=env, text=True,
                stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            logger.warning("trial %s failed to spawn: %s", trial_id, exc)
            emit(TrialEvent("failed", trial_id, reason="spawn_failure"))
            return
        with self._procs_lock:
            self._procs[trial_id] = proc

        saw_objective = False

        def consume_stdout() -> None:
            nonlocal saw_objective
            for line in proc.stdout:
                match = METRIC_LINE.match(line.rstrip("\n"))
                if not match:
                    continue
                name, iteration, value = match.groups()
                if name == self._metric:
                    saw_objective = True
                emit(TrialEvent("metric", trial_id, name, int(iteration),
                                float(value)))
            proc.stdout.close()

        reader = threading.Thread(target=consume_stdout, daemon=True)
        reader.start()
        deadline = time.monotonic() + self._spec.timeout
        timed_out = False
        while True:
            if stop.is_set():
                proc.kill()
                proc.wait()
                reader.join(timeout=5.0)
                return
            if time.monotonic() >= deadline:
                timed_out = True
                proc.kill()
                proc.wait()
                break
            try:
                proc.wait(timeout=_POLL_INTERVAL)
                break
            except subprocess.TimeoutExpired:
                continue
        reader.join(timeout=5.0)
        with self._procs_lock:
            self._procs.pop(trial_id, None)
        if stop.is_set():
            return
        if timed_out:
            emit(TrialEvent("failed", trial_id, reason="timeout"))
        elif proc.returncode != 0:
            emit(TrialEvent("failed", trial_id,
                            reason=f"exit_code_{proc.returncode}"))
        elif not saw_objective:
            emit(TrialEvent("failed", trial_id, reason="protocol_violation"))
        else:
            emit(TrialEvent("completed", trial_id))

    def request_stop(self, trial_id: str) -> None:
        self._stops.set(trial_id)

    def shutdown(self) -> None:
        self._stops.set_all()
        with self._procs_lock:
            procs = list(self._procs.values())
        for proc in procs:
            if proc.poll() is None:
                proc.kill()
        self._pool.shutdown(wait=True)


def make_executor(spec: ExecutorSpec, objective_metric: str,
                  max_workers: int) -> Executor:
    """Instantiate the executor matching ``spec.kind``."""
    if spec.kind == "builtin":
        return BuiltinExecutor(spec, objective_metric, max_workers)
    return ExternalExecutor(spec, objective_metric, max_workers)
