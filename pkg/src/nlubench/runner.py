"""Launches and supervises worker processes; implements the measurement protocols.

One worker per run: records are streamed to its stdin, stdin is closed,
predictions are read from its stdout, stderr goes to a log file and is
never parsed. Stdin feeding, stdout draining, and memory sampling all
proceed concurrently, so a worker that writes before it has read
everything cannot deadlock the harness. Wall time is spawn-to-exit on a
monotonic clock, deliberately including interpreter and model load; the
init-time subtraction downstream exists precisely to cancel that.

Every protocol aggregates repeated runs with the median of raw values,
never the mean, so a single slow or fat repetition cannot skew a figure.
Runs are strictly sequential: one worker process tree alive at a time.
"""

from __future__ import annotations

import json
import os
import resource
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from nlubench.errors import HarnessError
from nlubench.meter import MeterConfig, MeterError, NullProbe, Watcher, median
from nlubench.protocol import Prediction, Record, decode_predictions, encode_records

BATCH_ENV = "MOROCCO_BATCH"
TASK_ENV = "MOROCCO_TASK"


class RunnerError(HarnessError):
    """Base class for worker supervision failures."""


class SpawnError(RunnerError):
    """The worker process could not be started."""


class WorkerFailed(RunnerError):
    """The worker exited with a nonzero status."""

    def __init__(self, message: str, log_path: Path, exit_status: int):
        self.log_path = log_path
        self.exit_status = exit_status
        super().__init__(f"{message} (exit {exit_status}, stderr in {log_path})")


class TimedOut(RunnerError):
    """The worker exceeded its time limit and was terminated."""

    def __init__(self, message: str, log_path: Path, limit_s: float):
        self.log_path = log_path
        self.limit_s = limit_s
        super().__init__(f"{message} (limit {limit_s}s, stderr in {log_path})")


class MeasurementError(RunnerError):
    """One or more repetitions of a measurement failed; no partial median."""

    def __init__(self, message: str, failures: Sequence[tuple[int, Exception]] = ()):
        self.failures = tuple(failures)
        detail = "; ".join(f"run {i}: {exc}" for i, exc in self.failures)
        super().__init__(f"{message}: {detail}" if detail else message)


@dataclass(frozen=True)
class WorkerConfig:
    """How to launch one worker. ``{model}`` and ``{task}`` in launch tokens are substituted."""

    launch: tuple[str, ...]
    env: Mapping[str, str] = field(default_factory=dict)
    time_limit_s: float = 300.0
    mem_limit_bytes: int | None = None
    workdir: str | None = None
    batch_hint: int = 32

    def __post_init__(self):
        if not self.launch:
            raise ValueError("launch command must be non-empty")
        if self.time_limit_s <= 0:
            raise ValueError("time_limit_s must be positive")
        object.__setattr__(self, "launch", tuple(self.launch))


@dataclass(frozen=True)
class MeasurementProtocol:
    """Repetition counts for the timing and memory procedures."""

    n_throughput: int = 2000
    repeats: int = 5
    init_input_size: int = 1

    def __post_init__(self):
        if self.repeats < 1 or self.repeats % 2 == 0:
            raise ValueError("repeats must be odd so the median is a raw value")
        if self.n_throughput <= self.init_input_size:
            raise ValueError("n_throughput must exceed init_input_size")


@dataclass(frozen=True)
class RunMeasurement:
    """Everything observed during one supervised worker execution."""

    n_records: int
    wall_time_s: float
    peak_mem_bytes: int
    exit_status: int
    predictions: tuple[Prediction, ...]
    log_path: Path
    probe_kind: str
    mem_measured: bool


class Runner:
    """Runs workers under a results directory. Single-flight: one run at a time."""

    def __init__(self, results_dir: str | Path, meter_cfg: MeterConfig | None = None):
        self.results_dir = Path(results_dir)
        self.meter_cfg = meter_cfg or MeterConfig()
        self._lock = threading.Lock()
        self._seq = 0

    def _run_dir(self, model: str, task: str) -> Path:
        self._seq += 1
        stamp = time.strftime("%Y%m%dT%H%M%S") + f"-{os.getpid()}-{self._seq:04d}"
        run_dir = self.results_dir / "runs" / model / task / stamp
        run_dir.mkdir(parents=True, exist_ok=True)
        return run_dir

    def run_once(
        self,
        cfg: WorkerConfig,
        records: Sequence[Record],
        *,
        model: str = "worker",
        task: str = "",
        schema: Sequence[str] | None = None,
        meter_cfg: MeterConfig | None = None,
    ) -> RunMeasurement:
        """Spawn the worker, stream records, collect predictions and metering."""
        if not self._lock.acquire(blocking=False):
            raise RunnerError("another measurement session is active on this runner")
        try:
            return self._run_once_locked(cfg, records, model, task, schema, meter_cfg)
        finally:
            self._lock.release()

    def _run_once_locked(self, cfg, records, model, task, schema, meter_cfg) -> RunMeasurement:
        payload = encode_records(records, schema)
        meter_cfg = meter_cfg or self.meter_cfg
        run_dir = self._run_dir(model, task)
        stderr_path = run_dir / "stderr.log"
        stdout_path = run_dir / "stdout.jsonl"

        argv = [tok.format(model=model, task=task) for tok in cfg.launch]
        env = dict(os.environ)
        env.update(cfg.env)
        env[BATCH_ENV] = str(cfg.batch_hint)
        env[TASK_ENV] = task

        preexec = None
        if cfg.mem_limit_bytes is not None:
            limit = cfg.mem_limit_bytes

            def preexec():
                resource.setrlimit(resource.RLIMIT_AS, (limit, limit))

        with stderr_path.open("wb") as stderr_fh:
            start = time.monotonic()
            try:
                proc = subprocess.Popen(
                    argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=stderr_fh,
                    cwd=cfg.workdir,
                    env=env,
                    start_new_session=True,
                    preexec_fn=preexec,
                )
            except OSError as exc:
                raise SpawnError(f"cannot start worker {argv!r}: {exc}") from exc

            watcher = Watcher(proc.pid, meter_cfg)
            try:
                stdout_data, _ = proc.communicate(input=payload, timeout=cfg.time_limit_s)
            except subprocess.TimeoutExpired:
                _kill_tree(proc)
                stdout_data, _ = proc.communicate()
                try:
                    watcher.finish()
                except MeterError:
                    pass  # the timeout is the error worth reporting
                stdout_path.write_bytes(stdout_data or b"")
                raise TimedOut("worker timed out", stderr_path, cfg.time_limit_s)
            wall = time.monotonic() - start

        trace = watcher.finish()
        stdout_path.write_bytes(stdout_data)

        if proc.returncode != 0:
            raise WorkerFailed("worker failed", stderr_path, proc.returncode)

        predictions = tuple(decode_predictions(stdout_data))
        measurement = RunMeasurement(
            n_records=len(records),
            wall_time_s=wall,
            peak_mem_bytes=trace.peak,
            exit_status=proc.returncode,
            predictions=predictions,
            log_path=stderr_path,
            probe_kind=trace.probe_kind,
            mem_measured=trace.measured,
        )
        _write_run_record(run_dir / "measurement.json", measurement, model, task)
        return measurement

    def _repeat(self, label, cfg, records, protocol, model, task, meter_cfg):
        results: list[RunMeasurement] = []
        failures: list[tuple[int, Exception]] = []
        for rep in range(1, protocol.repeats + 1):
            try:
                results.append(
                    self.run_once(cfg, records, model=model, task=task, meter_cfg=meter_cfg)
                )
            except HarnessError as exc:
                failures.append((rep, exc))
        if failures:
            raise MeasurementError(f"{label} failed in {len(failures)}/{protocol.repeats} runs", failures)
        return results

    def measure_init(
        self,
        cfg: WorkerConfig,
        protocol: MeasurementProtocol,
        sample_record: Record,
        *,
        model: str = "worker",
        task: str = "",
    ) -> float:
        """Median wall time of repeated single-record runs: the startup estimate."""
        runs = self._repeat(
            "init measurement", cfg, [sample_record], protocol, model, task,
            MeterConfig(probe=NullProbe()),
        )
        return median([r.wall_time_s for r in runs])

    def measure_throughput_time(
        self,
        cfg: WorkerConfig,
        protocol: MeasurementProtocol,
        records: Sequence[Record],
        *,
        model: str = "worker",
        task: str = "",
    ) -> float:
        """Median wall time of repeated full-size runs (the raw T over N records)."""
        if len(records) != protocol.n_throughput:
            raise ValueError(f"need exactly {protocol.n_throughput} records, got {len(records)}")
        runs = self._repeat(
            "throughput measurement", cfg, records, protocol, model, task,
            MeterConfig(probe=NullProbe()),
        )
        return median([r.wall_time_s for r in runs])

    def measure_memory(
        self,
        cfg: WorkerConfig,
        protocol: MeasurementProtocol,
        sample_record: Record,
        *,
        model: str = "worker",
        task: str = "",
    ) -> int:
        """Median peak memory over repeated single-record runs, in bytes."""
        if isinstance(self.meter_cfg.probe, NullProbe):
            raise MeasurementError("memory measurement needs a real probe, meter is configured null")
        runs = self._repeat(
            "memory measurement", cfg, [sample_record], protocol, model, task, self.meter_cfg,
        )
        unmeasured = [(i + 1, MeasurementError("run unmeasured")) for i, r in enumerate(runs) if not r.mem_measured]
        if unmeasured:
            raise MeasurementError("memory probe produced no data", unmeasured)
        return int(median([r.peak_mem_bytes for r in runs]))


def _kill_tree(proc: subprocess.Popen) -> None:
    """SIGKILL the worker's whole session so no orphan survives a timeout."""
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except ProcessLookupError:
        pass


def _write_run_record(path: Path, m: RunMeasurement, model: str, task: str) -> None:
    path.write_text(
        json.dumps(
            {
                "model": model,
                "task": task,
                "n_records": m.n_records,
                "wall_time_s": m.wall_time_s,
                "peak_mem_bytes": m.peak_mem_bytes,
                "exit_status": m.exit_status,
                "n_predictions": len(m.predictions),
                "probe_kind": m.probe_kind,
                "mem_measured": m.mem_measured,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
