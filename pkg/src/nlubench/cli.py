"""Command-line entry point: the full pipeline and its pieces.

Subcommands: ``tasks list``, ``validate``, ``eval``, ``bench`` (timing and
memory only), ``score`` (quality only), ``report``, ``plot``. Exit codes:
0 ok, 2 usage, 3 conformance failure, 4 partial eval failure, 5 report
failure.

Configuration is a single JSON file; ``${VAR}`` in string values is
expanded from the environment so configs can be shared without secrets.
Measurement sessions run strictly sequentially for timing fidelity;
scoring-only runs may parallelize with ``--jobs``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from nlubench import __version__
from nlubench.conformance import conformance_suite
from nlubench.errors import HarnessError
from nlubench.meter import ExternalCommandProbe, HostRssProbe, MeterConfig, NullProbe
from nlubench.metrics import (
    ModelProfile,
    ThroughputInputs,
    build_profile,
    profile_from_measurement,
    profile_to_measurement,
    throughput,
)
from nlubench.protocol import Record
from nlubench.report import (
    build_leaderboard,
    bubble_scatter,
    leaderboard_to_json,
    leaderboard_to_markdown,
    normalized_throughput,
    quality_mean_max,
    render_plot,
    write_text_atomic,
)
from nlubench.runner import MeasurementProtocol, Runner, WorkerConfig
from nlubench.tasks import (
    Suite,
    TaskSpec,
    aggregate_quality,
    get_task,
    load_split,
    registry,
    registry_to_json,
    score_for,
)


class ConfigError(HarnessError):
    """The harness configuration file is missing or malformed."""


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    worker: WorkerConfig


@dataclass(frozen=True)
class HarnessConfig:
    suite: Suite
    models: tuple[ModelEntry, ...]
    tasks: tuple[str, ...]
    protocol: MeasurementProtocol
    meter: MeterConfig
    results_dir: Path
    data_dir: Path
    seed: int = 0
    throughput_task: str | None = None
    config_path: Path | None = field(default=None, compare=False)


def _expand(value):
    if isinstance(value, str):
        return os.path.expandvars(value)
    if isinstance(value, list):
        return [_expand(v) for v in value]
    if isinstance(value, dict):
        return {k: _expand(v) for k, v in value.items()}
    return value


def _parse_probe(raw) -> HostRssProbe | ExternalCommandProbe | NullProbe:
    if raw is None or raw == "host_rss":
        return HostRssProbe()
    if raw == "null":
        return NullProbe()
    if isinstance(raw, dict):
        kind = raw.get("kind")
        if kind == "host_rss":
            return HostRssProbe()
        if kind == "null":
            return NullProbe()
        if kind == "external":
            command = raw.get("command")
            if not command:
                raise ConfigError("external probe needs a 'command' template")
            return ExternalCommandProbe(template=command)
    raise ConfigError(f"unknown probe configuration {raw!r}")


def load_config(path: str | Path) -> HarnessConfig:
    """Parse the JSON config file, expanding ${VAR} in every string value."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from exc
    raw = _expand(raw)
    try:
        suite = Suite(raw.get("suite", "english"))
        models = []
        for entry in raw.get("models", []):
            worker = WorkerConfig(
                launch=tuple(entry["launch"]),
                env=dict(entry.get("env", {})),
                time_limit_s=float(entry.get("time_limit_s", 300.0)),
                mem_limit_bytes=entry.get("mem_limit_bytes"),
                workdir=entry.get("workdir"),
                batch_hint=int(entry.get("batch_hint", 32)),
            )
            models.append(ModelEntry(model_id=entry["model_id"], worker=worker))
        proto_raw = raw.get("protocol", {})
        protocol = MeasurementProtocol(
            n_throughput=int(proto_raw.get("n_throughput", 2000)),
            repeats=int(proto_raw.get("repeats", 5)),
        )
        meter_raw = raw.get("meter", {})
        meter = MeterConfig(
            sampling_interval_ms=int(meter_raw.get("sampling_interval_ms", 10)),
            probe=_parse_probe(meter_raw.get("probe")),
        )
        tasks_raw = raw.get("tasks", "all")
        if tasks_raw == "all":
            tasks = tuple(s.name for s in registry() if s.suite is suite)
        else:
            tasks = tuple(tasks_raw)
        return HarnessConfig(
            suite=suite,
            models=tuple(models),
            tasks=tasks,
            protocol=protocol,
            meter=meter,
            results_dir=Path(raw.get("results_dir", "results")),
            data_dir=Path(raw.get("data_dir", "data")),
            seed=int(raw.get("seed", 0)),
            throughput_task=raw.get("throughput_task"),
            config_path=path,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def env_fingerprint(probe_kind: str) -> dict[str, str]:
    """What this measurement ran on; attached to every stored result."""
    return {
        "os": platform.platform(),
        "cpu": _cpu_model(),
        "python": platform.python_version(),
        "probe_kind": probe_kind,
        "harness_version": __version__,
    }


def _selected_specs(config: HarnessConfig) -> list[TaskSpec]:
    specs = [get_task(name) for name in config.tasks]
    for spec in specs:
        if spec.suite is not config.suite:
            raise ConfigError(f"task {spec.name!r} is not in the {config.suite.value} suite")
    return specs


def _throughput_spec(config: HarnessConfig, specs: Sequence[TaskSpec]) -> TaskSpec:
    if config.throughput_task:
        return get_task(config.throughput_task)
    return max(specs, key=lambda s: (s.split_sizes[2], s.name))


def _tile_records(records: Sequence[Record], n: int) -> list[Record]:
    """Repeat fixture records (with fresh ids) until the stream has n entries."""
    if not records:
        raise ConfigError("cannot build a throughput stream from an empty dataset")
    out: list[Record] = []
    round_no = 0
    while len(out) < n:
        for rec in records:
            if len(out) >= n:
                break
            rec_id = rec.id if round_no == 0 else f"{rec.id}+{round_no}"
            out.append(Record(id=rec_id, task=rec.task, payload=rec.payload))
        round_no += 1
    return out


def _score_model(config: HarnessConfig, entry: ModelEntry, specs: Sequence[TaskSpec], runner: Runner):
    """Quality runs for one model over the selected tasks."""
    per_task = {}
    for spec in specs:
        records, golds = load_split(config.data_dir / f"{spec.name}.jsonl", spec)
        result = runner.run_once(
            entry.worker,
            records,
            model=entry.model_id,
            task=spec.name,
            schema=spec.schema,
            meter_cfg=MeterConfig(probe=NullProbe()),
        )
        per_task[spec.name] = score_for(spec, result.predictions, golds)
    return per_task


def _bench_model(config: HarnessConfig, entry: ModelEntry, specs: Sequence[TaskSpec], runner: Runner):
    """Timing and memory protocols for one model on the designated task."""
    spec = _throughput_spec(config, specs)
    records, _ = load_split(config.data_dir / f"{spec.name}.jsonl", spec)
    if not records:
        raise ConfigError(f"dataset for {spec.name!r} is empty")
    sample = records[0]
    stream = _tile_records(records, config.protocol.n_throughput)
    t_init = runner.measure_init(
        entry.worker, config.protocol, sample, model=entry.model_id, task=spec.name
    )
    t_n = runner.measure_throughput_time(
        entry.worker, config.protocol, stream, model=entry.model_id, task=spec.name
    )
    tp = throughput(ThroughputInputs(n=config.protocol.n_throughput, t_n=t_n, t_init=t_init))
    m = runner.measure_memory(
        entry.worker, config.protocol, sample, model=entry.model_id, task=spec.name
    )
    return tp, m, t_init, t_n, spec.name


def _load_profiles(results_dir: Path) -> list[tuple[ModelProfile, Path]]:
    profiles = []
    for path in sorted(results_dir.glob("*/measurement.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        profiles.append((profile_from_measurement(doc), path))
    return profiles


def _emit_reports(results_dir: Path, seed: int, config_echo: Mapping) -> None:
    """Rebuild leaderboard and all plots from the stored measurement files."""
    loaded = _load_profiles(results_dir)
    if not loaded:
        raise HarnessError(f"no measurement.json files under {results_dir}")
    suites = {p.suite for p, _ in loaded}
    if len(suites) > 1:
        raise HarnessError(f"results mix suites {sorted(s.value for s in suites)}; report them separately")
    suite = suites.pop()
    profiles = [p for p, _ in loaded]
    newest = max(path.stat().st_mtime for _, path in loaded)
    generated_at = datetime.datetime.fromtimestamp(newest, tz=datetime.timezone.utc).isoformat()

    echo = dict(config_echo)
    echo["jitter_seed"] = seed
    board = build_leaderboard(profiles, suite, generated_at=generated_at, config_echo=echo)
    write_text_atomic(results_dir / "leaderboard.json", leaderboard_to_json(board))
    write_text_atomic(results_dir / "leaderboard.md", leaderboard_to_markdown(board))
    write_text_atomic(results_dir / "scatter.svg", bubble_scatter(profiles))

    runs = {
        p.model_id: [p.per_task[name].primary for name in sorted(p.per_task)]
        for p in profiles
    }
    q_spec, q_summary = quality_mean_max(runs, seed=seed)
    write_text_atomic(results_dir / "quality_mean_max.svg", render_plot(q_spec))
    write_text_atomic(
        results_dir / "quality_mean_max.json",
        json.dumps({"schema_version": 1, **q_summary}, indent=2, ensure_ascii=False) + "\n",
    )

    per_set = {"all_tasks": {p.model_id: p.tp for p in profiles}}
    t_spec, t_report = normalized_throughput(per_set)
    write_text_atomic(results_dir / "throughput_sets.svg", render_plot(t_spec))
    write_text_atomic(
        results_dir / "throughput_sets.json",
        json.dumps({"schema_version": 1, **t_report}, indent=2, ensure_ascii=False) + "\n",
    )


def _config_echo(config: HarnessConfig) -> dict:
    return {
        "suite": config.suite.value,
        "seed": config.seed,
        "n_throughput": config.protocol.n_throughput,
        "repeats": config.protocol.repeats,
        "tasks": list(config.tasks),
    }


def cmd_tasks_list(args) -> int:
    suite = Suite(args.suite) if args.suite else None
    if args.format == "json":
        print(registry_to_json(suite))
        return 0
    header = f"{'name':<10} {'title':<10} {'suite':<8} {'type':<16} {'metric':<14} {'train':>7} {'val':>6} {'test':>6}"
    print(header)
    print("-" * len(header))
    for spec in registry():
        if suite and spec.suite is not suite:
            continue
        train, val, test = spec.split_sizes
        print(
            f"{spec.name:<10} {spec.title:<10} {spec.suite.value:<8} {spec.task_type.value:<16} "
            f"{spec.metric.kind.value:<14} {train:>7} {val:>6} {test:>6}"
        )
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    entries = config.models
    if args.model:
        entries = tuple(e for e in entries if e.model_id == args.model)
        if not entries:
            raise ConfigError(f"no model {args.model!r} in config")
    all_ok = True
    for entry in entries:
        report = conformance_suite(entry.worker, model=entry.model_id)
        print(f"model {entry.model_id}:")
        for case in report.cases:
            status = "pass" if case.passed else "FAIL"
            print(f"  {status}  {case.name}: {case.detail}")
        all_ok = all_ok and report.all_passed
    return 0 if all_ok else 3


def _eval_one(config: HarnessConfig, entry: ModelEntry, specs, force: bool) -> tuple[bool, str]:
    model_dir = config.results_dir / entry.model_id
    measurement_path = model_dir / "measurement.json"
    if measurement_path.exists() and not force:
        return True, "kept existing measurement (use --force to redo)"
    runner = Runner(config.results_dir, config.meter)
    per_task = _score_model(config, entry, specs, runner)
    tp, m, t_init, t_n, bench_task = _bench_model(config, entry, specs, runner)
    profile = build_profile(
        entry.model_id, config.suite, per_task, tp, m, config.meter.probe.kind
    )
    doc = profile_to_measurement(
        profile,
        config.protocol.n_throughput,
        config.protocol.repeats,
        env_fingerprint(config.meter.probe.kind),
    )
    write_text_atomic(measurement_path, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")
    return True, f"q={profile.q:.4f} tp={tp:.2f}/s m={m} f={profile.f:.4f} (bench on {bench_task})"


def cmd_eval(args) -> int:
    config = _configured(args)
    specs = _selected_specs(config)
    failures = []
    for entry in config.models:
        try:
            _, detail = _eval_one(config, entry, specs, args.force)
            print(f"eval {entry.model_id}: {detail}")
        except HarnessError as exc:
            failures.append((entry.model_id, exc))
            print(f"eval {entry.model_id}: FAILED: {exc}", file=sys.stderr)
    try:
        _emit_reports(config.results_dir, config.seed, _config_echo(config))
    except HarnessError as exc:
        print(f"report generation failed: {exc}", file=sys.stderr)
        return 4 if failures else 5
    if failures:
        print(f"{len(failures)} of {len(config.models)} models failed", file=sys.stderr)
        return 4
    return 0


def cmd_bench(args) -> int:
    config = _configured(args)
    specs = _selected_specs(config)
    failures = []
    for entry in config.models:
        try:
            runner = Runner(config.results_dir, config.meter)
            tp, m, t_init, t_n, bench_task = _bench_model(config, entry, specs, runner)
            doc = {
                "model_id": entry.model_id,
                "task": bench_task,
                "tp": tp,
                "m_bytes": m,
                "t_init": t_init,
                "t_n": t_n,
                "probe_kind": config.meter.probe.kind,
                "protocol": {"n": config.protocol.n_throughput, "repeats": config.protocol.repeats},
                "env_fingerprint": env_fingerprint(config.meter.probe.kind),
            }
            out = config.results_dir / entry.model_id / "bench.json"
            write_text_atomic(out, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")
            print(f"bench {entry.model_id}: tp={tp:.2f}/s m={m} (task {bench_task})")
        except HarnessError as exc:
            failures.append(entry.model_id)
            print(f"bench {entry.model_id}: FAILED: {exc}", file=sys.stderr)
    return 4 if failures else 0


def cmd_score(args) -> int:
    config = _configured(args)
    specs = _selected_specs(config)

    def one(entry: ModelEntry):
        runner = Runner(config.results_dir, config.meter)
        per_task = _score_model(config, entry, specs, runner)
        doc = {
            "model_id": entry.model_id,
            "suite": config.suite.value,
            "q": aggregate_quality(per_task, config.suite),
            "per_task": {
                name: {"primary": s.primary, "components": dict(s.components)}
                for name, s in sorted(per_task.items())
            },
        }
        out = config.results_dir / entry.model_id / "scores.json"
        write_text_atomic(out, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")
        return doc

    failures = []
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(one, e): e for e in config.models}
            for fut, entry in futures.items():
                try:
                    doc = fut.result()
                    print(f"score {entry.model_id}: q={doc['q']:.4f}")
                except HarnessError as exc:
                    failures.append(entry.model_id)
                    print(f"score {entry.model_id}: FAILED: {exc}", file=sys.stderr)
    else:
        for entry in config.models:
            try:
                doc = one(entry)
                print(f"score {entry.model_id}: q={doc['q']:.4f}")
            except HarnessError as exc:
                failures.append(entry.model_id)
                print(f"score {entry.model_id}: FAILED: {exc}", file=sys.stderr)
    return 4 if failures else 0


def cmd_report(args) -> int:
    results_dir, seed, echo = _report_inputs(args)
    try:
        _emit_reports(results_dir, seed, echo)
    except (HarnessError, json.JSONDecodeError, OSError) as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 5
    print(f"reports written under {results_dir}")
    return 0


def cmd_plot(args) -> int:
    # Same regeneration path; plots are part of the standard report set.
    return cmd_report(args)


def _report_inputs(args) -> tuple[Path, int, dict]:
    if args.config:
        config = _configured(args)
        return config.results_dir, config.seed, _config_echo(config)
    if not args.results_dir:
        raise ConfigError("need --results-dir or --config")
    seed = args.seed if args.seed is not None else 0
    return Path(args.results_dir), seed, {"seed": seed}


def _configured(args) -> HarnessConfig:
    config = load_config(args.config)
    overrides = {}
    if getattr(args, "results_dir", None):
        overrides["results_dir"] = Path(args.results_dir)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = HarnessConfig(
            suite=config.suite,
            models=config.models,
            tasks=config.tasks,
            protocol=config.protocol,
            meter=config.meter,
            results_dir=overrides.get("results_dir", config.results_dir),
            data_dir=config.data_dir,
            seed=overrides.get("seed", config.seed),
            throughput_task=config.throughput_task,
            config_path=config.config_path,
        )
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlubench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nlubench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tasks = sub.add_parser("tasks", help="task registry commands")
    tasks_sub = p_tasks.add_subparsers(dest="tasks_command", required=True)
    p_list = tasks_sub.add_parser("list", help="list registered tasks")
    p_list.add_argument("--suite", choices=[s.value for s in Suite])
    p_list.add_argument("--format", choices=["table", "json"], default="table")
    p_list.set_defaults(func=cmd_tasks_list)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required)
        p.add_argument("--results-dir", default=None)
        p.add_argument("--seed", type=int, default=None)

    p_validate = sub.add_parser("validate", help="run the worker conformance suite")
    p_validate.add_argument("--config", required=True)
    p_validate.add_argument("--model", default=None)
    p_validate.set_defaults(func=cmd_validate)

    p_eval = sub.add_parser("eval", help="full evaluation: quality, timing, memory, reports")
    common(p_eval)
    p_eval.add_argument("--force", action="store_true", help="re-measure models with stored results")
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="throughput and memory only")
    common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_score = sub.add_parser("score", help="task quality only")
    common(p_score)
    p_score.add_argument("--jobs", type=int, default=1)
    p_score.set_defaults(func=cmd_score)

    p_report = sub.add_parser("report", help="regenerate leaderboard and plots from stored results")
    common(p_report, config_required=False)
    p_report.set_defaults(func=cmd_report)

    p_plot = sub.add_parser("plot", help="regenerate plots from stored results")
    common(p_plot, config_required=False)
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
