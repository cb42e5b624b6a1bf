"""Peak-memory sampling for a supervised process tree.

Workers are opaque foreign programs, so the only universal mechanism is
polling OS accounting while they run. The host-RSS probe sums resident
set sizes over the whole process tree; an external-command probe shells
out to a device query (e.g. a GPU utility printing used bytes); the null
probe disables metering for timing-only runs. True peaks between samples
are missed: the sampling interval bounds the resolution.
"""

from __future__ import annotations

import shlex
import statistics
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import psutil

from nlubench.errors import HarnessError


class MeterError(HarnessError):
    """A memory probe failed; the run is unmeasured, never silently zero."""


class HostRssProbe:
    """Sum of resident-set sizes over the process and all its descendants."""

    kind = "host_rss"

    def read(self, pid: int) -> int:
        try:
            root = psutil.Process(pid)
            total = root.memory_info().rss
            children = root.children(recursive=True)
        except psutil.NoSuchProcess:  # includes zombies: the run is over
            raise ProcessLookupError(pid) from None
        for proc in children:
            try:
                total += proc.memory_info().rss
            except psutil.Error:
                continue  # raced with a child exiting
        return total


@dataclass(frozen=True)
class ExternalCommandProbe:
    """Run a command template with ``{pid}`` substituted; parse one decimal byte count."""

    template: str
    kind: str = field(default="external", init=False)

    def read(self, pid: int) -> int:
        argv = [tok.format(pid=pid) for tok in shlex.split(self.template)]
        try:
            out = subprocess.run(argv, capture_output=True, timeout=10, check=True)
        except (OSError, subprocess.SubprocessError) as exc:
            raise MeterError(f"probe command {argv!r} failed: {exc}") from exc
        text = out.stdout.decode("utf-8", errors="replace").strip()
        try:
            return int(text)
        except ValueError:
            raise MeterError(f"probe command {argv!r} printed {text!r}, expected a decimal byte count") from None


class NullProbe:
    """No metering; runs using it are flagged unmeasured."""

    kind = "null"

    def read(self, pid: int) -> int:  # pragma: no cover - never called
        raise MeterError("null probe cannot be read")


Probe = HostRssProbe | ExternalCommandProbe | NullProbe


@dataclass(frozen=True)
class MeterConfig:
    sampling_interval_ms: int = 10
    probe: Probe = field(default_factory=HostRssProbe)

    def __post_init__(self):
        if not 1 <= self.sampling_interval_ms <= 1000:
            raise ValueError(f"sampling_interval_ms {self.sampling_interval_ms} outside [1, 1000]")


@dataclass(frozen=True)
class MemoryTrace:
    """Memory samples for one run: (seconds since spawn, bytes)."""

    samples: tuple[tuple[float, int], ...]
    probe_kind: str
    measured: bool

    @property
    def peak(self) -> int:
        return max((b for _, b in self.samples), default=0)


def _alive(pid: int) -> bool:
    # A zombie is an exited worker whose parent has not reaped it yet.
    try:
        return psutil.Process(pid).status() != psutil.STATUS_ZOMBIE
    except psutil.NoSuchProcess:
        return False


def watch(pid: int, cfg: MeterConfig, stop: threading.Event | None = None) -> MemoryTrace:
    """Poll the probe at the configured interval until the process exits.

    Probe failures raise MeterError. With the null probe, returns an empty
    unmeasured trace immediately.
    """
    probe = cfg.probe
    if isinstance(probe, NullProbe):
        return MemoryTrace(samples=(), probe_kind=probe.kind, measured=False)
    interval = cfg.sampling_interval_ms / 1000.0
    start = time.monotonic()
    samples: list[tuple[float, int]] = []
    while (stop is None or not stop.is_set()) and _alive(pid):
        try:
            value = probe.read(pid)
        except ProcessLookupError:
            break
        samples.append((time.monotonic() - start, value))
        time.sleep(interval)
    return MemoryTrace(samples=tuple(samples), probe_kind=probe.kind, measured=True)


class Watcher:
    """Background thread wrapper around watch(), for use during a worker run."""

    def __init__(self, pid: int, cfg: MeterConfig):
        self._stop = threading.Event()
        self._trace: MemoryTrace | None = None
        self._error: MeterError | None = None

        def _run():
            try:
                self._trace = watch(pid, cfg, self._stop)
            except MeterError as exc:
                self._error = exc

        self._thread = threading.Thread(target=_run, name=f"meter-{pid}", daemon=True)
        self._thread.start()

    def finish(self) -> MemoryTrace:
        self._stop.set()
        self._thread.join()
        if self._error is not None:
            raise self._error
        assert self._trace is not None
        return self._trace


def median(values: Sequence[float]) -> float:
    """Median of raw repetition values; the dispersion-elimination aggregator.

    Even-length input yields the mean of the two central values.
    """
    if not values:
        raise MeterError("median of empty sequence")
    return statistics.median(values)
