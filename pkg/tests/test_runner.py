from __future__ import annotations

import threading
import time

import psutil
import pytest

from conftest import mock_worker, simple_records
from nlubench.meter import MeterConfig, NullProbe
from nlubench.protocol import ProtocolError
from nlubench.runner import (
    MeasurementError,
    MeasurementProtocol,
    Runner,
    RunnerError,
    SpawnError,
    TimedOut,
    WorkerConfig,
    WorkerFailed,
)

FAST_METER = MeterConfig(probe=NullProbe())


def test_echo_worker_three_records(runner_dir):
    runner = Runner(runner_dir)
    result = runner.run_once(mock_worker(), simple_records(3), model="echo", task="probe")
    assert result.exit_status == 0
    assert len(result.predictions) == 3
    assert {p.id for p in result.predictions} == {"probe-00000", "probe-00001", "probe-00002"}


def test_worker_exit_nonzero_is_worker_failed(runner_dir):
    runner = Runner(runner_dir)
    with pytest.raises(WorkerFailed) as err:
        runner.run_once(mock_worker("--failure-mode", "exit"), simple_records(2), model="m", task="t")
    assert err.value.exit_status == 1
    assert err.value.log_path.exists()


def test_spawn_failure(runner_dir):
    cfg = WorkerConfig(launch=("/nonexistent/binary",))
    with pytest.raises(SpawnError):
        Runner(runner_dir).run_once(cfg, simple_records(1), model="m", task="t")


def test_wall_time_bounds_for_delay_mock(runner_dir):
    # 10 ms/record x 100 records: the sleep total is an exact lower bound.
    runner = Runner(runner_dir)
    result = runner.run_once(
        mock_worker("--per-record-ms", "10"), simple_records(100),
        model="delay", task="probe", meter_cfg=FAST_METER,
    )
    assert 1.0 <= result.wall_time_s <= 1.0 + 3.0  # startup + scheduler tolerance


def test_run_logs_layout(runner_dir):
    runner = Runner(runner_dir)
    runner.run_once(mock_worker(), simple_records(1), model="m1", task="rte")
    run_dirs = list((runner_dir / "runs" / "m1" / "rte").iterdir())
    assert len(run_dirs) == 1
    files = {p.name for p in run_dirs[0].iterdir()}
    assert files == {"stdout.jsonl", "stderr.log", "measurement.json"}


def test_env_plumbing_reaches_worker(runner_dir):
    runner = Runner(runner_dir)
    cfg = mock_worker()
    result = runner.run_once(cfg, simple_records(1), model="m", task="boolq")
    stderr = result.log_path.read_text()
    assert "task=boolq" in stderr
    assert "batch=32" in stderr


def test_timeout_kills_whole_tree(runner_dir):
    marker = "--seed"
    marker_value = "987654321"
    cfg = mock_worker("--failure-mode", "hang", marker, marker_value, time_limit_s=1.5)
    runner = Runner(runner_dir)
    start = time.monotonic()
    with pytest.raises(TimedOut):
        runner.run_once(cfg, simple_records(5), model="m", task="t", meter_cfg=FAST_METER)
    assert time.monotonic() - start < 10
    time.sleep(0.2)
    survivors = [
        p for p in psutil.process_iter(["cmdline"])
        if p.info["cmdline"] and marker_value in p.info["cmdline"]
    ]
    assert survivors == []


def test_worker_writing_before_reading_everything_does_not_deadlock(runner_dir):
    # 5k records exceed pipe buffers in both directions; the mock interleaves
    # reads and writes, so the harness must pump stdin/stdout concurrently.
    runner = Runner(runner_dir)
    result = runner.run_once(
        mock_worker(), simple_records(5000), model="bulk", task="t", meter_cfg=FAST_METER
    )
    assert len(result.predictions) == 5000


def test_malformed_output_is_protocol_error(runner_dir):
    runner = Runner(runner_dir)
    with pytest.raises(ProtocolError):
        runner.run_once(
            mock_worker("--failure-mode", "malformed"), simple_records(2), model="m", task="t"
        )


def test_single_flight(runner_dir):
    runner = Runner(runner_dir)
    cfg = mock_worker("--startup-ms", "800")
    errors = []

    def target():
        try:
            runner.run_once(cfg, simple_records(1), model="bg", task="t", meter_cfg=FAST_METER)
        except RunnerError as exc:
            errors.append(exc)

    thread = threading.Thread(target=target)
    thread.start()
    time.sleep(0.3)
    with pytest.raises(RunnerError, match="active"):
        runner.run_once(cfg, simple_records(1), model="fg", task="t", meter_cfg=FAST_METER)
    thread.join()
    assert errors == []


def test_measure_init_median_of_startup(runner_dir):
    proto = MeasurementProtocol(n_throughput=10, repeats=3)
    runner = Runner(runner_dir)
    t_init = runner.measure_init(
        mock_worker("--startup-ms", "1000", "--per-record-ms", "1"),
        proto, simple_records(1)[0], model="m", task="t",
    )
    assert 1.001 <= t_init <= 1.001 + 1.0


def test_measure_init_collects_failed_repetitions(runner_dir):
    proto = MeasurementProtocol(n_throughput=10, repeats=3)
    runner = Runner(runner_dir)
    with pytest.raises(MeasurementError) as err:
        runner.measure_init(
            mock_worker("--failure-mode", "exit"), proto, simple_records(1)[0], model="m", task="t"
        )
    assert len(err.value.failures) == 3


def test_measure_throughput_requires_exact_count(runner_dir):
    proto = MeasurementProtocol(n_throughput=50, repeats=3)
    runner = Runner(runner_dir)
    with pytest.raises(ValueError, match="exactly 50"):
        runner.measure_throughput_time(mock_worker(), proto, simple_records(10), model="m", task="t")


def test_measure_throughput_linear_cost(runner_dir):
    # startup a=200ms, per-record b=5ms, N=100: T_N - T_init ~ N*b
    proto = MeasurementProtocol(n_throughput=100, repeats=3)
    cfg = mock_worker("--startup-ms", "200", "--per-record-ms", "5")
    runner = Runner(runner_dir)
    t_init = runner.measure_init(cfg, proto, simple_records(1)[0], model="m", task="t")
    t_n = runner.measure_throughput_time(cfg, proto, simple_records(100), model="m", task="t")
    per_record = (t_n - t_init) / (100 - 1)
    assert 0.005 <= per_record <= 0.009


def test_measure_memory_ballast_median(runner_dir):
    proto = MeasurementProtocol(n_throughput=10, repeats=3)
    runner = Runner(runner_dir, MeterConfig(sampling_interval_ms=10))
    m = runner.measure_memory(
        mock_worker("--ballast-mib", "128", "--startup-ms", "300"),
        proto, simple_records(1)[0], model="m", task="t",
    )
    assert m >= 128 * 2**20


def test_measure_memory_rejects_null_probe(runner_dir):
    proto = MeasurementProtocol(n_throughput=10, repeats=3)
    runner = Runner(runner_dir, FAST_METER)
    with pytest.raises(MeasurementError, match="probe"):
        runner.measure_memory(mock_worker(), proto, simple_records(1)[0], model="m", task="t")


def test_measure_memory_no_partial_median_on_failure(runner_dir):
    proto = MeasurementProtocol(n_throughput=10, repeats=3)
    runner = Runner(runner_dir, MeterConfig(sampling_interval_ms=10))
    with pytest.raises(MeasurementError):
        runner.measure_memory(
            mock_worker("--failure-mode", "exit"), proto, simple_records(1)[0], model="m", task="t"
        )


def test_protocol_validation():
    with pytest.raises(ValueError, match="odd"):
        MeasurementProtocol(repeats=4)
    with pytest.raises(ValueError, match="exceed"):
        MeasurementProtocol(n_throughput=1)
    with pytest.raises(ValueError):
        WorkerConfig(launch=())
    with pytest.raises(ValueError):
        WorkerConfig(launch=("x",), time_limit_s=0)
