"""Task registry, dataset loading, and quality scorers.

Eighteen registered tasks: nine English NLU tasks and their nine Russian
counterparts, each pair sharing a task type and metric. Scorers return a
QualityScore whose scalar ``primary`` feeds the fitness computation;
dual-metric tasks collapse to the arithmetic mean of their components and
the Matthews coefficient is mapped from [-1, 1] onto [0, 1].
"""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from nlubench.errors import HarnessError
from nlubench.protocol import GoldLabel, Prediction, Record, validate_pairing

log = logging.getLogger(__name__)


class SchemaError(HarnessError):
    """A dataset record does not match the task schema."""


class ScoringError(HarnessError):
    """Predictions cannot be scored against the golds."""


class AggregationError(HarnessError):
    """Per-task scores cannot be aggregated into a suite quality."""


class UnknownTaskError(HarnessError):
    """No registered task has the requested name."""


class Suite(str, Enum):
    ENGLISH = "english"
    RUSSIAN = "russian"


class TaskType(str, Enum):
    NLI = "nli"
    DIAGNOSTIC = "diagnostic"
    COMMON_SENSE = "common_sense"
    WORLD_KNOWLEDGE = "world_knowledge"
    MACHINE_READING = "machine_reading"
    REASONING = "reasoning"


class MetricKind(str, Enum):
    ACCURACY = "accuracy"
    AVG_F1_ACC = "avg_f1_acc"
    MCC = "mcc"
    F1_EM_MULTIRC = "f1_em_multirc"
    F1_EM_RECORD = "f1_em_record"


CLASSIFICATION_KINDS = frozenset({MetricKind.ACCURACY, MetricKind.AVG_F1_ACC, MetricKind.MCC})


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind
    label_set: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.label_set is not None) != (self.kind in CLASSIFICATION_KINDS):
            raise ValueError(f"label_set must be present iff {self.kind} is a classification metric")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    title: str
    suite: Suite
    task_type: TaskType
    metric: MetricSpec
    schema: tuple[str, ...]
    split_sizes: tuple[int, int, int]  # (train, validation, test)

    @property
    def is_diagnostic(self) -> bool:
        return self.task_type is TaskType.DIAGNOSTIC


@dataclass(frozen=True)
class QualityScore:
    """Scalar quality in [0, 1] plus the raw sub-metric values behind it."""

    primary: float
    components: Mapping[str, float]

    def __post_init__(self):
        if not 0.0 <= self.primary <= 1.0:
            raise ValueError(f"primary score {self.primary} outside [0, 1]")
        if not self.components:
            raise ValueError("components must be non-empty")


_BINARY_NLI = ("entailment", "not_entailment")
_BOOL = ("true", "false")


def _pair(
    en_name: str,
    en_title: str,
    ru_name: str,
    ru_title: str,
    task_type: TaskType,
    metric: MetricSpec,
    schema: tuple[str, ...],
    en_splits: tuple[int, int, int],
    ru_splits: tuple[int, int, int],
) -> tuple[TaskSpec, TaskSpec]:
    return (
        TaskSpec(en_name, en_title, Suite.ENGLISH, task_type, metric, schema, en_splits),
        TaskSpec(ru_name, ru_title, Suite.RUSSIAN, task_type, metric, schema, ru_splits),
    )


_REGISTRY: tuple[TaskSpec, ...] = (
    *_pair("rte", "RTE", "terra", "TERRa", TaskType.NLI,
           MetricSpec(MetricKind.ACCURACY, _BINARY_NLI),
           ("premise", "hypothesis"), (2490, 277, 3000), (2616, 307, 3198)),
    *_pair("cb", "CB", "rcb", "RCB", TaskType.NLI,
           MetricSpec(MetricKind.AVG_F1_ACC, ("entailment", "contradiction", "neutral")),
           ("premise", "hypothesis"), (250, 56, 250), (438, 220, 438)),
    *_pair("axb", "AX-b", "lidirus", "LiDiRus", TaskType.DIAGNOSTIC,
           MetricSpec(MetricKind.MCC, _BINARY_NLI),
           ("premise", "hypothesis"), (0, 0, 1104), (0, 0, 1104)),
    *_pair("wic", "WiC", "russe", "RUSSE", TaskType.COMMON_SENSE,
           MetricSpec(MetricKind.ACCURACY, _BOOL),
           ("word", "sentence1", "sentence2"), (5428, 638, 1400), (19845, 8508, 18892)),
    *_pair("copa", "COPA", "parus", "PARus", TaskType.COMMON_SENSE,
           MetricSpec(MetricKind.ACCURACY, ("1", "2")),
           ("premise", "choice1", "choice2", "question"), (400, 100, 500), (400, 100, 500)),
    *_pair("boolq", "BoolQ", "danetqa", "DaNetQA", TaskType.WORLD_KNOWLEDGE,
           MetricSpec(MetricKind.ACCURACY, _BOOL),
           ("question", "passage"), (9427, 3270, 3245), (1749, 821, 805)),
    *_pair("multirc", "MultiRC", "muserc", "MuSeRC", TaskType.MACHINE_READING,
           MetricSpec(MetricKind.F1_EM_MULTIRC),
           ("paragraph", "question", "answer"), (456, 83, 166), (500, 100, 322)),
    *_pair("record", "ReCoRD", "rucos", "RuCoS", TaskType.MACHINE_READING,
           MetricSpec(MetricKind.F1_EM_RECORD),
           ("passage", "query"), (65709, 7481, 7484), (72193, 7577, 7257)),
    *_pair("wsc", "WSC", "rwsd", "RWSD", TaskType.REASONING,
           MetricSpec(MetricKind.ACCURACY, _BOOL),
           ("text", "span1_index", "span1_text", "span2_index", "span2_text"),
           (554, 104, 146), (606, 204, 154)),
)

_BY_NAME = {spec.name: spec for spec in _REGISTRY}


def registry() -> tuple[TaskSpec, ...]:
    """All registered task specs, English and Russian interleaved by pair."""
    return _REGISTRY


def get_task(name: str) -> TaskSpec:
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise UnknownTaskError(f"unknown task {name!r}; known: {', '.join(sorted(_BY_NAME))}") from None


def registry_to_json(suite: Suite | None = None) -> str:
    """Registry export for documentation tooling (the tasks.json schema)."""
    specs = [s for s in _REGISTRY if suite is None or s.suite is suite]
    out = [
        {
            "name": s.name,
            "title": s.title,
            "suite": s.suite.value,
            "task_type": s.task_type.value,
            "metric": s.metric.kind.value,
            "label_set": list(s.metric.label_set) if s.metric.label_set else None,
            "schema": list(s.schema),
            "split_sizes": {"train": s.split_sizes[0], "validation": s.split_sizes[1], "test": s.split_sizes[2]},
        }
        for s in specs
    ]
    return json.dumps(out, indent=2, ensure_ascii=False)


_SPLIT_INDEX = {"train": 0, "validation": 1, "test": 2}


def _payload_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def load_split(path: str | Path, spec: TaskSpec, split: str = "test") -> tuple[list[Record], list[GoldLabel]]:
    """Load a JSON-lines dataset file into records and harness-side golds.

    Each line holds the payload fields plus ``id`` and ``label`` (string, or
    a list of acceptable strings for multi-answer tasks). A size differing
    from the registered split size only warns: synthetic fixtures are small.
    """
    path = Path(path)
    records: list[Record] = []
    golds: list[GoldLabel] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: not valid JSON: {exc.msg}") from exc
            rec_id = obj.get("id")
            if not isinstance(rec_id, str) or not rec_id:
                raise SchemaError(f"{path}:{line_no}: missing or empty 'id'")
            if rec_id in seen:
                raise SchemaError(f"{path}:{line_no}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            if "label" not in obj:
                raise SchemaError(f"record {rec_id!r}: missing field 'label'")
            label = obj["label"]
            if isinstance(label, list):
                labels = tuple(_payload_value(v) for v in label)
            else:
                labels = (_payload_value(label),)
            if not labels or any(not v for v in labels):
                raise SchemaError(f"record {rec_id!r}: empty label")
            payload = {
                k: _payload_value(v) for k, v in obj.items() if k not in ("id", "label", "task")
            }
            for field_name in spec.schema:
                if field_name not in payload:
                    raise SchemaError(f"record {rec_id!r}: missing field {field_name!r}")
            records.append(Record(id=rec_id, task=spec.name, payload=payload))
            golds.append(GoldLabel(id=rec_id, labels=labels))
    expected = spec.split_sizes[_SPLIT_INDEX.get(split, 2)]
    if expected and len(records) != expected:
        log.warning(
            "%s: %s split has %d examples, registry expects %d",
            spec.name, split, len(records), expected,
        )
    return records, golds


def _require_pairing(preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> None:
    report = validate_pairing(
        [Record(id=g.id, task="") for g in golds], preds
    )
    if not report.complete:
        raise ScoringError(
            f"incomplete pairing: missing={list(report.missing)} orphans={list(report.orphans)}"
        )


def _by_id(preds: Sequence[Prediction]) -> dict[str, str]:
    return {p.id: p.label for p in preds}


def score_accuracy(preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> QualityScore:
    """Fraction of predictions whose label exactly matches a gold label."""
    _require_pairing(preds, golds)
    if not golds:
        raise ScoringError("nothing to score")
    by_id = _by_id(preds)
    hits = sum(1 for g in golds if by_id[g.id] in g.labels)
    acc = hits / len(golds)
    return QualityScore(primary=acc, components={"acc": acc})


def score_avg_f1_acc(
    preds: Sequence[Prediction], golds: Sequence[GoldLabel], labels: Sequence[str]
) -> QualityScore:
    """Macro-averaged per-class F1 together with accuracy; primary is their mean.

    Classes absent from both predictions and golds are excluded from the
    macro average.
    """
    _require_pairing(preds, golds)
    if not golds:
        raise ScoringError("nothing to score")
    label_set = set(labels)
    for g in golds:
        if g.label not in label_set:
            raise ScoringError(f"unknown label {g.label!r} in golds")
    by_id = _by_id(preds)
    for pred_label in by_id.values():
        if pred_label not in label_set:
            raise ScoringError(f"unknown label {pred_label!r} in predictions")

    tp: Counter[str] = Counter()
    fp: Counter[str] = Counter()
    fn: Counter[str] = Counter()
    hits = 0
    for g in golds:
        p = by_id[g.id]
        if p == g.label:
            tp[g.label] += 1
            hits += 1
        else:
            fp[p] += 1
            fn[g.label] += 1

    f1s = []
    for label in labels:
        support = tp[label] + fp[label] + fn[label]
        if support == 0:  # class absent from both sides
            continue
        denom = 2 * tp[label] + fp[label] + fn[label]
        f1s.append(2 * tp[label] / denom if denom else 0.0)
    avg_f1 = sum(f1s) / len(f1s) if f1s else 0.0
    acc = hits / len(golds)
    return QualityScore(primary=(avg_f1 + acc) / 2, components={"avg_f1": avg_f1, "acc": acc})


def score_mcc(preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> QualityScore:
    """Matthews correlation for a binary task, mapped to [0, 1] for aggregation.

    mcc = (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)); a zero factor
    in the denominator yields mcc = 0. The raw value stays in components.
    """
    _require_pairing(preds, golds)
    if not golds:
        raise ScoringError("nothing to score")
    by_id = _by_id(preds)
    observed = {g.label for g in golds} | set(by_id.values())
    if len(observed) > 2:
        raise ScoringError(f"MCC needs binary labels, saw {sorted(observed)}")
    positive = sorted(observed)[0]
    tp = tn = fp = fn = 0
    for g in golds:
        p = by_id[g.id]
        if g.label == positive:
            if p == positive:
                tp += 1
            else:
                fn += 1
        else:
            if p == positive:
                fp += 1
            else:
                tn += 1
    denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = 0.0 if denom_sq == 0 else (tp * tn - fp * fn) / denom_sq**0.5
    return QualityScore(primary=(mcc + 1) / 2, components={"mcc": mcc})


_POSITIVE = {"1", "true"}
_NEGATIVE = {"0", "false"}


def _binary_flag(label: str, rec_id: str) -> bool:
    low = label.strip().lower()
    if low in _POSITIVE:
        return True
    if low in _NEGATIVE:
        return False
    raise ScoringError(f"answer option {rec_id!r}: label {label!r} is not binary")


def score_multirc(preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> QualityScore:
    """Pooled F1 over all answer-option decisions plus per-question exact match.

    Ids follow the composite "questionId/answerId" scheme; em counts
    questions whose every option was decided correctly.
    """
    _require_pairing(preds, golds)
    if not golds:
        raise ScoringError("nothing to score")
    by_id = _by_id(preds)
    tp = fp = fn = 0
    question_ok: dict[str, bool] = {}
    for g in golds:
        if "/" not in g.id:
            raise ScoringError(f"id {g.id!r} is not a composite questionId/answerId")
        qid = g.id.rsplit("/", 1)[0]
        gold_flag = _binary_flag(g.label, g.id)
        pred_flag = _binary_flag(by_id[g.id], g.id)
        if pred_flag and gold_flag:
            tp += 1
        elif pred_flag and not gold_flag:
            fp += 1
        elif not pred_flag and gold_flag:
            fn += 1
        question_ok.setdefault(qid, True)
        if pred_flag != gold_flag:
            question_ok[qid] = False
    f1a = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    em = sum(question_ok.values()) / len(question_ok)
    return QualityScore(primary=(f1a + em) / 2, components={"f1a": f1a, "em": em})


def normalize_answer(text: str) -> str:
    """Casefold, drop punctuation, collapse whitespace. No article stripping."""
    out = []
    for ch in text.casefold():
        if unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def _token_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return 1.0 if pred_tokens == gold_tokens else 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def score_record_qa(preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> QualityScore:
    """Token-overlap F1 and exact match against the best of the gold answers."""
    _require_pairing(preds, golds)
    if not golds:
        raise ScoringError("nothing to score")
    by_id = _by_id(preds)
    f1_total = em_total = 0.0
    for g in golds:
        pred_norm = normalize_answer(by_id[g.id])
        gold_norms = [normalize_answer(ans) for ans in g.labels]
        em_total += 1.0 if pred_norm in gold_norms else 0.0
        f1_total += max(_token_f1(pred_norm.split(), gn.split()) for gn in gold_norms)
    f1 = f1_total / len(golds)
    em = em_total / len(golds)
    return QualityScore(primary=(f1 + em) / 2, components={"f1": f1, "em": em})


def score_for(spec: TaskSpec, preds: Sequence[Prediction], golds: Sequence[GoldLabel]) -> QualityScore:
    """Score predictions with the metric registered for the task."""
    kind = spec.metric.kind
    if kind is MetricKind.ACCURACY:
        return score_accuracy(preds, golds)
    if kind is MetricKind.AVG_F1_ACC:
        return score_avg_f1_acc(preds, golds, spec.metric.label_set)
    if kind is MetricKind.MCC:
        return score_mcc(preds, golds)
    if kind is MetricKind.F1_EM_MULTIRC:
        return score_multirc(preds, golds)
    if kind is MetricKind.F1_EM_RECORD:
        return score_record_qa(preds, golds)
    raise ScoringError(f"no scorer for metric {kind}")


def aggregate_quality(per_task: Mapping[str, QualityScore], suite: Suite) -> float:
    """Unweighted mean of primary scores over scored non-diagnostic tasks.

    Diagnostic tasks are reported separately and never enter the mean.
    """
    if not per_task:
        raise AggregationError("no task scores to aggregate")
    included = []
    for name, score in per_task.items():
        spec = get_task(name)
        if spec.suite is not suite:
            raise AggregationError(f"task {name!r} belongs to suite {spec.suite.value}, not {suite.value}")
        if not spec.is_diagnostic:
            included.append(score.primary)
    if not included:
        raise AggregationError("only diagnostic tasks scored; quality aggregate undefined")
    return sum(included) / len(included)
