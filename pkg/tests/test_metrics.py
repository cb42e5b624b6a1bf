from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlubench.metrics import (
    DegenerateTiming,
    DomainError,
    ModelProfile,
    ThroughputInputs,
    build_profile,
    dominates,
    fitness,
    pareto_front,
    profile_from_measurement,
    profile_to_measurement,
    throughput,
)
from nlubench.tasks import QualityScore, Suite


def _qs(value):
    return QualityScore(primary=value, components={"acc": value})


def test_throughput_forced_arithmetic():
    assert throughput(ThroughputInputs(n=2000, t_n=42.0, t_init=2.0)) == 50.0


def test_throughput_unit_case():
    assert throughput(ThroughputInputs(n=1, t_n=3.0, t_init=2.0)) == 1.0


def test_throughput_degenerate_timing():
    with pytest.raises(DegenerateTiming):
        throughput(ThroughputInputs(n=10, t_n=1.0, t_init=1.0))


def test_throughput_input_validation():
    with pytest.raises(DomainError):
        ThroughputInputs(n=0, t_n=1.0, t_init=0.0)
    with pytest.raises(DomainError):
        ThroughputInputs(n=1, t_n=1.0, t_init=-0.5)


@given(
    st.integers(1, 10_000),
    st.floats(0.0, 100.0),
    st.floats(0.001, 100.0),
    st.floats(0.0, 50.0),
)
def test_throughput_shift_invariance(n, t_init, gap, shift):
    base = throughput(ThroughputInputs(n=n, t_n=t_init + gap, t_init=t_init))
    shifted = throughput(ThroughputInputs(n=n, t_n=t_init + gap + shift, t_init=t_init + shift))
    assert math.isclose(base, shifted, rel_tol=1e-9)


def test_fitness_zero_quality():
    assert fitness(0.0, 123.0, 2**20) == 0.0


def test_fitness_constructed_identity():
    m = math.e**20
    assert math.isclose(fitness(1.0, math.log(m), m), 1.0, rel_tol=1e-12)


def test_fitness_direct_evaluation_oracle():
    # 0.8 * 100 / ln(2^30), checked against a 50-digit evaluation
    import mpmath

    mpmath.mp.dps = 50
    want = float(mpmath.mpf("0.8") * 100 / mpmath.log(mpmath.mpf(2) ** 30))
    got = fitness(0.8, 100.0, 2**30)
    assert abs(got - want) < 1e-12
    assert abs(got - 3.8471867757039027) < 1e-12  # frozen from the oracle


def test_fitness_domain_errors():
    with pytest.raises(DomainError):
        fitness(1.2, 1.0, 100)
    with pytest.raises(DomainError):
        fitness(0.5, 0.0, 100)
    with pytest.raises(DomainError):
        fitness(0.5, 1.0, 1)


@given(
    st.floats(0.01, 0.95),
    st.floats(0.1, 1e4),
    st.floats(4, 1e12),
)
def test_fitness_monotonicity(q, tp, m):
    f = fitness(q, tp, m)
    assert fitness(min(q * 1.05, 1.0), tp, m) > f
    assert fitness(q, tp * 1.05, m) > f
    assert fitness(q, tp, m * 2) < f


@given(st.floats(0.01, 1.0), st.floats(0.1, 1e4), st.floats(4, 1e12), st.floats(0.01, 100))
def test_fitness_scales_linearly_in_throughput(q, tp, m, c):
    assert math.isclose(fitness(q, c * tp, m), c * fitness(q, tp, m), rel_tol=1e-9)


def test_build_profile_single_task_identity():
    m = math.e**20
    profile = build_profile("x", Suite.ENGLISH, {"rte": _qs(1.0)}, math.log(m), m, "host_rss")
    assert math.isclose(profile.f, 1.0, rel_tol=1e-12)
    assert profile.q == 1.0


def test_build_profile_two_tasks():
    per_task = {"rte": _qs(0.6), "cb": _qs(0.8)}
    profile = build_profile("x", Suite.ENGLISH, per_task, 50.0, 2**31, "host_rss")
    assert math.isclose(profile.q, 0.7, rel_tol=1e-12)
    assert math.isclose(profile.f, 35.0 / math.log(2**31), rel_tol=1e-12)


def test_build_profile_empty_errors():
    from nlubench.tasks import AggregationError

    with pytest.raises(AggregationError):
        build_profile("x", Suite.ENGLISH, {}, 1.0, 100, "host_rss")


def _profile(model_id, q, tp, m):
    return ModelProfile(
        model_id=model_id, suite=Suite.ENGLISH, q=q, tp=tp, m=m,
        f=q * tp / math.log(m), probe_kind="host_rss", per_task={"rte": _qs(q)},
    )


def test_pareto_single_profile_is_itself():
    p = _profile("only", 0.5, 10, 2**20)
    assert pareto_front([p]) == [p]


def test_pareto_dominated_pair_gives_singleton():
    good = _profile("good", 0.9, 100, 2**20)
    bad = _profile("bad", 0.5, 50, 2**30)
    assert pareto_front([good, bad]) == [good]


def test_pareto_identical_profiles_both_stay():
    a = _profile("a", 0.5, 10, 2**20)
    b = _profile("b", 0.5, 10, 2**20)
    assert pareto_front([a, b]) == [a, b]


def _oracle_pareto(profiles):
    front = []
    for p in profiles:
        dominated = False
        for other in profiles:
            if other is p:
                continue
            ge = other.q >= p.q and other.tp >= p.tp and other.m <= p.m
            strict = other.q > p.q or other.tp > p.tp or other.m < p.m
            if ge and strict:
                dominated = True
                break
        if not dominated:
            front.append(p)
    return front


def test_pareto_50_random_vs_pairwise_oracle():
    rng = random.Random(83)
    profiles = [
        _profile(f"m{i}", rng.uniform(0.1, 1.0), rng.uniform(1, 100), rng.uniform(2**10, 2**30))
        for i in range(50)
    ]
    front = pareto_front(profiles)
    assert front == _oracle_pareto(profiles)
    # antichain: no member dominates another
    for a in front:
        for b in front:
            if a is not b:
                assert not dominates(a, b)
    # every excluded profile is dominated by some member
    for p in profiles:
        if p not in front:
            assert any(dominates(member, p) for member in front)


def test_profile_measurement_roundtrip():
    profile = _profile("m1", 0.7, 42.0, 2**26)
    doc = profile_to_measurement(profile, 2000, 5, {"os": "linux"})
    assert doc["protocol"] == {"n": 2000, "repeats": 5}
    back = profile_from_measurement(doc)
    assert back.model_id == "m1"
    assert math.isclose(back.f, profile.f, rel_tol=1e-12)
    assert back.per_task["rte"].primary == 0.7


def test_profile_from_malformed_measurement():
    with pytest.raises(DomainError):
        profile_from_measurement({"model_id": "x"})
