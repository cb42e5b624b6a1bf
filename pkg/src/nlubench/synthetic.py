"""Synthetic dataset fixtures for any registered task.

Real corpora are out of scope; the harness consumes any dataset in the
JSON-lines record format, and these generators produce small, seeded,
schema-correct stand-ins for tests and demos. Gold labels are written
both into the dataset file and into a sidecar answers file that mock
workers read, keeping the run itself blind.

Run ``python -m nlubench.synthetic --data-dir data`` to materialize
fixtures on disk.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from nlubench.tasks import MetricKind, Suite, TaskSpec, get_task, registry

_WORDS = {
    Suite.ENGLISH: (
        "river", "mountain", "forest", "signal", "method", "engine",
        "garden", "window", "market", "paper", "bridge", "harbor",
    ),
    Suite.RUSSIAN: (
        "река", "гора", "лес", "сигнал", "метод", "мотор",
        "сад", "окно", "рынок", "бумага", "мост", "гавань",
    ),
}


def _sentence(rng: random.Random, suite: Suite, length: int = 5) -> str:
    words = _WORDS[suite]
    return " ".join(rng.choice(words) for _ in range(length))


def _classification_example(spec: TaskSpec, rng: random.Random, i: int) -> dict:
    example: dict = {"id": f"{spec.name}-{i:04d}"}
    for field in spec.schema:
        if field == "word":
            example[field] = rng.choice(_WORDS[spec.suite])
        elif field.endswith("_index"):
            example[field] = str(rng.randint(0, 6))
        elif field.endswith("_text"):
            example[field] = rng.choice(_WORDS[spec.suite])
        elif field == "question":
            example[field] = _sentence(rng, spec.suite, 4) + "?"
        else:
            example[field] = _sentence(rng, spec.suite)
    example["label"] = rng.choice(spec.metric.label_set)
    return example


def _multirc_examples(spec: TaskSpec, rng: random.Random, n: int) -> list[dict]:
    examples = []
    qi = 0
    while len(examples) < n:
        qi += 1
        paragraph = _sentence(rng, spec.suite, 12)
        question = _sentence(rng, spec.suite, 4) + "?"
        for ai in range(rng.randint(2, 4)):
            if len(examples) >= n:
                break
            examples.append(
                {
                    "id": f"{spec.name}-q{qi:03d}/a{ai}",
                    "paragraph": paragraph,
                    "question": question,
                    "answer": _sentence(rng, spec.suite, 3),
                    "label": rng.choice(("0", "1")),
                }
            )
    return examples


def _record_example(spec: TaskSpec, rng: random.Random, i: int) -> dict:
    answer = rng.choice(_WORDS[spec.suite])
    labels = [answer]
    if rng.random() < 0.3:  # some records accept a second answer
        labels.append(answer + " " + rng.choice(_WORDS[spec.suite]))
    return {
        "id": f"{spec.name}-{i:04d}",
        "passage": _sentence(rng, spec.suite, 10) + " " + answer,
        "query": _sentence(rng, spec.suite, 4).replace(" ", " @placeholder ", 1),
        "label": labels,
    }


def generate_examples(spec: TaskSpec, n: int, seed: int = 0) -> list[dict]:
    """Seeded dataset lines (payload plus id and label) for one task."""
    rng = random.Random(f"{seed}:{spec.name}")  # str seeding is stable across processes
    if spec.metric.kind is MetricKind.F1_EM_MULTIRC:
        return _multirc_examples(spec, rng, n)
    if spec.metric.kind is MetricKind.F1_EM_RECORD:
        return [_record_example(spec, rng, i) for i in range(n)]
    return [_classification_example(spec, rng, i) for i in range(n)]


def write_fixture(data_dir: str | Path, spec: TaskSpec, n: int, seed: int = 0) -> tuple[Path, Path]:
    """Write <task>.jsonl and the <task>.answers.jsonl sidecar; return both paths."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    examples = generate_examples(spec, n, seed)
    data_path = data_dir / f"{spec.name}.jsonl"
    answers_path = data_dir / f"{spec.name}.answers.jsonl"
    with data_path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex, ensure_ascii=False) + "\n")
    with answers_path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"id": ex["id"], "label": ex["label"]}, ensure_ascii=False) + "\n")
    return data_path, answers_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="nlubench.synthetic", description=__doc__)
    parser.add_argument("--data-dir", required=True)
    parser.add_argument("--tasks", nargs="*", default=["all"], help="task names, or 'all'")
    parser.add_argument("--suite", choices=[s.value for s in Suite], default=None)
    parser.add_argument("--n", type=int, default=40, help="examples per task")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if args.tasks == ["all"]:
        specs = [s for s in registry() if args.suite is None or s.suite.value == args.suite]
    else:
        specs = [get_task(name) for name in args.tasks]
    for spec in specs:
        data_path, answers_path = write_fixture(args.data_dir, spec, args.n, args.seed)
        print(f"{spec.name}: {data_path} ({args.n} examples), answers {answers_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
