"""Deterministic mock worker used as a measurement oracle and protocol fixture.

Run as ``python -m nlubench.mockworker``. Reads JSON-lines records on
stdin until EOF and writes one JSON-lines prediction per record to
stdout, with configurable startup delay, per-record delay, memory
ballast, answer accuracy, and failure injection. Given a fixed seed and
flags, output is byte-identical across runs.

Gold labels reach the mock through a sidecar answers file (JSON-lines
with ``id`` and ``label``), never through the records themselves, so the
harness stays blind even in tests. Without a sidecar, or for unknown
ids, the prediction label is ``echo-<id>``.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="mockworker", description=__doc__)
    parser.add_argument("--startup-ms", type=float, default=0.0)
    parser.add_argument("--per-record-ms", type=float, default=0.0)
    parser.add_argument("--ballast-mib", type=int, default=0)
    parser.add_argument("--accuracy", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--failure-mode",
        default="none",
        help="none | exit | hang | malformed | drop:<k>",
    )
    parser.add_argument("--answers", default=None, help="sidecar JSON-lines file with gold labels")
    return parser.parse_args(argv)


def load_answers(path: str) -> tuple[dict[str, str], list[str]]:
    answers: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                label = obj["label"]
                if isinstance(label, list):
                    label = label[0]
                answers[obj["id"]] = str(label)
    except (OSError, ValueError, KeyError) as exc:
        print(f"mockworker: cannot read answers file {path}: {exc}", file=sys.stderr)
        sys.exit(2)
    alphabet = sorted(set(answers.values()))
    return answers, alphabet


def allocate_ballast(mib: int) -> bytearray:
    ballast = bytearray(mib * 1024 * 1024)
    for i in range(0, len(ballast), 4096):  # write each page so RSS observes it
        ballast[i] = 1
    return ballast


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    mode, _, mode_arg = args.failure_mode.partition(":")

    if mode == "exit":
        return 1
    if mode == "hang":
        while True:
            time.sleep(3600)

    print(
        f"mockworker: task={os.environ.get('MOROCCO_TASK', '')} "
        f"batch={os.environ.get('MOROCCO_BATCH', '')} seed={args.seed}",
        file=sys.stderr,
        flush=True,
    )

    if args.startup_ms > 0:
        time.sleep(args.startup_ms / 1000.0)
    ballast = allocate_ballast(args.ballast_mib) if args.ballast_mib else None

    answers: dict[str, str] = {}
    alphabet: list[str] = []
    if args.answers:
        answers, alphabet = load_answers(args.answers)

    rng = random.Random(args.seed)
    drop_remaining = int(mode_arg) if mode == "drop" else 0
    out = sys.stdout.buffer

    for raw in sys.stdin.buffer:
        if not raw.strip():
            continue
        if args.per_record_ms > 0:
            time.sleep(args.per_record_ms / 1000.0)
        try:
            rec = json.loads(raw.decode("utf-8"))
            rec_id = rec["id"]
        except (ValueError, KeyError) as exc:
            print(f"mockworker: bad input line: {exc}", file=sys.stderr)
            return 1
        if mode == "malformed":
            out.write(b"this is not json {{{\n")
            out.flush()
            continue
        if drop_remaining > 0:
            drop_remaining -= 1
            continue
        gold = answers.get(rec_id)
        if gold is None:
            label = f"echo-{rec_id}"
        elif rng.random() < args.accuracy:
            label = gold
        else:
            wrong = [l for l in alphabet if l != gold]
            label = rng.choice(wrong) if wrong else gold + "!wrong"
        line = json.dumps({"id": rec_id, "label": label}, ensure_ascii=False, separators=(",", ":"))
        out.write(line.encode("utf-8") + b"\n")
        out.flush()

    del ballast
    return 0


if __name__ == "__main__":
    sys.exit(main())
