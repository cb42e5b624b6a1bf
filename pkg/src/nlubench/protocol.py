"""Wire format between the harness and worker programs.

One JSON object per line, UTF-8, no BOM, no end-of-input sentinel:
end-of-stream on stdin tells the worker it has seen everything. Records
carry ``id``, ``task``, and the task payload flattened into the same
object; predictions carry ``id`` and ``label``. Predictions may come
back in any order and are paired to records by id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from nlubench.errors import HarnessError

RESERVED_FIELDS = ("id", "task")


class ProtocolError(HarnessError):
    """A worker stream (or record batch) violates the wire contract."""

    def __init__(self, message: str, line_no: int | None = None, raw: bytes | None = None):
        self.line_no = line_no
        self.raw = raw
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Record:
    """One task example sent to a worker."""

    id: str
    task: str
    payload: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Prediction:
    """One worker answer, paired to a Record by id."""

    id: str
    label: str


@dataclass(frozen=True)
class GoldLabel:
    """Harness-side gold answer(s) for one record. Never sent to workers."""

    id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.labels, str):
            object.__setattr__(self, "labels", (self.labels,))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def label(self) -> str:
        return self.labels[0]


@dataclass(frozen=True)
class PairingReport:
    """Which record ids lack a prediction and which predictions are orphans."""

    missing: tuple[str, ...]
    orphans: tuple[str, ...]

    @property
    def complete(self) -> bool:
        return not self.missing and not self.orphans


def encode_records(records: Sequence[Record], schema: Iterable[str] | None = None) -> bytes:
    """Serialize records to the JSON-lines byte stream a worker reads.

    ``schema``, when given, is the set of payload fields every record must
    carry; a violation rejects the whole batch, naming the offending id.
    """
    required = tuple(schema) if schema is not None else ()
    seen: set[str] = set()
    lines = []
    for rec in records:
        if not rec.id:
            raise ProtocolError("record with empty id")
        if rec.id in seen:
            raise ProtocolError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        for key in RESERVED_FIELDS:
            if key in rec.payload:
                raise ProtocolError(f"record {rec.id!r}: payload field {key!r} is reserved")
        for key in required:
            if key not in rec.payload:
                raise ProtocolError(f"record {rec.id!r}: missing required field {key!r}")
        obj = {"id": rec.id, "task": rec.task, **rec.payload}
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_line(line: bytes, line_no: int) -> dict:
    try:
        text = line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"not valid UTF-8: {exc}", line_no, line) from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"not valid JSON: {exc.msg}", line_no, line) from exc
    if not isinstance(obj, dict):
        raise ProtocolError("expected a JSON object", line_no, line)
    return obj


def decode_predictions(stream: bytes) -> list[Prediction]:
    """Parse a worker's stdout into predictions.

    Total on its error type: any malformed input raises ProtocolError with
    the line number and raw bytes, never an unstructured crash. Empty
    lines are skipped; duplicate ids are rejected.
    """
    preds: list[Prediction] = []
    seen: set[str] = set()
    for line_no, line in enumerate(stream.splitlines(), start=1):
        if not line.strip():
            continue
        obj = _parse_line(line, line_no)
        rec_id = obj.get("id")
        label = obj.get("label")
        if not isinstance(rec_id, str) or not rec_id:
            raise ProtocolError("missing or empty 'id'", line_no, line)
        if not isinstance(label, str) or not label:
            raise ProtocolError(f"prediction {rec_id!r}: missing or empty 'label'", line_no, line)
        if rec_id in seen:
            raise ProtocolError(f"duplicate prediction id {rec_id!r}", line_no, line)
        seen.add(rec_id)
        preds.append(Prediction(id=rec_id, label=label))
    return preds


def decode_records(stream: bytes) -> list[Record]:
    """Parse a record stream back into Records (worker side of the contract)."""
    records: list[Record] = []
    seen: set[str] = set()
    for line_no, line in enumerate(stream.splitlines(), start=1):
        if not line.strip():
            continue
        obj = _parse_line(line, line_no)
        rec_id = obj.get("id")
        task = obj.get("task")
        if not isinstance(rec_id, str) or not rec_id:
            raise ProtocolError("missing or empty 'id'", line_no, line)
        if not isinstance(task, str):
            raise ProtocolError(f"record {rec_id!r}: missing 'task'", line_no, line)
        if rec_id in seen:
            raise ProtocolError(f"duplicate record id {rec_id!r}", line_no, line)
        seen.add(rec_id)
        payload = {k: v for k, v in obj.items() if k not in RESERVED_FIELDS}
        records.append(Record(id=rec_id, task=task, payload=payload))
    return records


def validate_pairing(records: Sequence[Record], predictions: Sequence[Prediction]) -> PairingReport:
    """Report record ids without a prediction and prediction ids without a record."""
    record_ids = {r.id for r in records}
    pred_ids = {p.id for p in predictions}
    return PairingReport(
        missing=tuple(sorted(record_ids - pred_ids)),
        orphans=tuple(sorted(pred_ids - record_ids)),
    )
