"""Throughput, fitness, model profiles, and the Pareto front.

Throughput is N / (T_N - T_init): subtracting the single-record startup
time isolates steady-state inference speed from interpreter and model
load. Fitness combines the three axes as F = Q * Tp / ln(M) with M in
bytes; memory enters through a (natural) logarithm because model sizes
grow exponentially while quality and speed matter linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from nlubench.errors import HarnessError
from nlubench.tasks import QualityScore, Suite, aggregate_quality

MIN_MEMORY_BYTES = 2  # keeps ln(m) strictly positive


class DegenerateTiming(HarnessError):
    """T_N did not exceed T_init: the worker is too fast for N, raise N."""


class DomainError(HarnessError):
    """A metric input is outside its mathematical domain."""


@dataclass(frozen=True)
class ThroughputInputs:
    n: int
    t_n: float
    t_init: float

    def __post_init__(self):
        if self.n <= 0:
            raise DomainError(f"n must be positive, got {self.n}")
        if self.t_init < 0:
            raise DomainError(f"t_init must be non-negative, got {self.t_init}")


def throughput(inp: ThroughputInputs) -> float:
    """Samples per second: n / (t_n - t_init)."""
    if inp.t_n <= inp.t_init:
        raise DegenerateTiming(
            f"t_n={inp.t_n} does not exceed t_init={inp.t_init}; "
            "increase n or the measurement is dominated by noise"
        )
    return inp.n / (inp.t_n - inp.t_init)


def fitness(q: float, tp: float, m: float) -> float:
    """Combined score q * tp / ln(m), m in bytes. Higher is better."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q={q} outside [0, 1]")
    if tp <= 0:
        raise DomainError(f"tp={tp} must be positive")
    if m < MIN_MEMORY_BYTES:
        raise DomainError(f"m={m} bytes below the {MIN_MEMORY_BYTES}-byte floor")
    return q * tp / math.log(m)


@dataclass(frozen=True)
class ModelProfile:
    """The (quality, throughput, memory, fitness) quadruple for one model."""

    model_id: str
    suite: Suite
    q: float
    tp: float
    m: float
    f: float
    probe_kind: str
    per_task: Mapping[str, QualityScore]


def build_profile(
    model_id: str,
    suite: Suite,
    per_task: Mapping[str, QualityScore],
    tp: float,
    m: float,
    probe_kind: str,
) -> ModelProfile:
    """Aggregate per-task scores into quality and attach the fitness figure."""
    q = aggregate_quality(per_task, suite)
    return ModelProfile(
        model_id=model_id,
        suite=suite,
        q=q,
        tp=tp,
        m=m,
        f=fitness(q, tp, m),
        probe_kind=probe_kind,
        per_task=dict(per_task),
    )


def dominates(a: ModelProfile, b: ModelProfile) -> bool:
    """True if a is at least as good on q, tp, m and strictly better somewhere."""
    if a.q < b.q or a.tp < b.tp or a.m > b.m:
        return False
    return a.q > b.q or a.tp > b.tp or a.m < b.m


def pareto_front(profiles: Sequence[ModelProfile]) -> list[ModelProfile]:
    """Profiles not dominated in the maximize-q, maximize-tp, minimize-m sense."""
    return [
        p
        for i, p in enumerate(profiles)
        if not any(dominates(other, p) for j, other in enumerate(profiles) if i != j)
    ]


MEASUREMENT_SCHEMA_KEYS = (
    "model_id", "suite", "q", "tp", "m_bytes", "f", "probe_kind",
    "per_task", "protocol", "env_fingerprint",
)


def profile_to_measurement(
    profile: ModelProfile,
    protocol_n: int,
    protocol_repeats: int,
    env_fingerprint: Mapping[str, str],
) -> dict:
    """The measurement.json payload for one model."""
    return {
        "model_id": profile.model_id,
        "suite": profile.suite.value,
        "q": profile.q,
        "tp": profile.tp,
        "m_bytes": profile.m,
        "f": profile.f,
        "probe_kind": profile.probe_kind,
        "per_task": {
            name: {"primary": s.primary, "components": dict(s.components)}
            for name, s in sorted(profile.per_task.items())
        },
        "protocol": {"n": protocol_n, "repeats": protocol_repeats},
        "env_fingerprint": dict(env_fingerprint),
    }


def profile_from_measurement(doc: Mapping) -> ModelProfile:
    """Rebuild a profile from a stored measurement.json document."""
    try:
        per_task = {
            name: QualityScore(primary=entry["primary"], components=dict(entry["components"]))
            for name, entry in doc["per_task"].items()
        }
        return ModelProfile(
            model_id=doc["model_id"],
            suite=Suite(doc["suite"]),
            q=float(doc["q"]),
            tp=float(doc["tp"]),
            m=float(doc["m_bytes"]),
            f=float(doc["f"]),
            probe_kind=doc["probe_kind"],
            per_task=per_task,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed measurement document: {exc}") from exc
