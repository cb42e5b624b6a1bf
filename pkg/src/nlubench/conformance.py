"""Protocol-conformance checks for third-party worker submissions.

Exercises a worker against the wire-contract edge cases: empty input,
a single record, unicode payloads, and a bulk stream large enough to
fill pipe buffers. Report-style: never raises for a failing worker.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass

from nlubench.errors import HarnessError
from nlubench.meter import MeterConfig, NullProbe
from nlubench.protocol import Record, validate_pairing
from nlubench.runner import Runner, WorkerConfig

CONFORMANCE_TASK = "conformance"


@dataclass(frozen=True)
class ConformanceCase:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ConformanceReport:
    cases: tuple[ConformanceCase, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.cases)


def _records(n: int, text: str = "sample text") -> list[Record]:
    return [
        Record(id=f"conf-{i:05d}", task=CONFORMANCE_TASK, payload={"text": f"{text} {i}"})
        for i in range(n)
    ]


_CASES = (
    ("empty_input", lambda: _records(0)),
    ("single_record", lambda: _records(1)),
    ("unicode_payload", lambda: _records(3, "пример текста — 例文 🚀")),
    ("bulk_10k", lambda: _records(10_000)),
)


def conformance_suite(cfg: WorkerConfig, runner: Runner | None = None, model: str = "candidate") -> ConformanceReport:
    """Run every conformance case against the worker and report per-case pass/fail."""
    if runner is None:
        runner = Runner(tempfile.mkdtemp(prefix="nlubench-conformance-"))
    meter_cfg = MeterConfig(probe=NullProbe())
    cases = []
    for name, make in _CASES:
        records = make()
        try:
            result = runner.run_once(
                cfg, records, model=model, task=CONFORMANCE_TASK, meter_cfg=meter_cfg
            )
        except HarnessError as exc:
            cases.append(ConformanceCase(name, False, f"{type(exc).__name__}: {exc}"))
            continue
        pairing = validate_pairing(records, result.predictions)
        if pairing.complete:
            cases.append(ConformanceCase(name, True, f"{len(result.predictions)} predictions paired"))
        else:
            cases.append(
                ConformanceCase(
                    name,
                    False,
                    f"{len(pairing.missing)} missing ids, {len(pairing.orphans)} orphans "
                    f"(first missing: {pairing.missing[:3]})",
                )
            )
    return ConformanceReport(cases=tuple(cases))
