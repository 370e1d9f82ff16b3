import math

import numpy as np
import pytest

from pseudotrack.schemes import (
    PseudonymPool,
    SchemeConfig,
    apply_scheme,
    apply_scheme_all,
    bsm_instants,
)
from pseudotrack.types import ConfigError

from conftest import straight_trace


def co_located_traces(n, duration=120.0, spacing=5.0):
    """Vehicles crawling the same stretch a few meters apart."""
    return [
        straight_trace(i, start=(spacing * i, 0.0), speed=10.0, duration=duration)
        for i in range(n)
    ]


def test_periodical_changes_on_the_period_boundary():
    trace = straight_trace(0, speed=10.0, duration=120.0)
    stream = apply_scheme(trace, [trace], SchemeConfig(kind="Periodical", period=60.0), seed=1)
    p59 = stream.pseudonym_at(59.0)
    p60 = stream.pseudonym_at(60.0)
    assert p59 != p60
    assert stream.pseudonym_at(0.0) == stream.pseudonym_at(59.999) == p59


def test_periodical_pseudonym_count_is_ceil_duration_over_period():
    for duration, period in ((120.0, 60.0), (119.0, 60.0), (121.0, 60.0), (40.0, 60.0)):
        trace = straight_trace(0, speed=10.0, duration=duration)
        stream = apply_scheme(trace, [trace], SchemeConfig(kind="Periodical", period=period), seed=1)
        expected = math.ceil((trace.exit_time - trace.entry_time) / period)
        assert len(stream.pseudonyms) == expected


def test_distance_scheme_matches_integration_oracle():
    # constant 10 m/s, threshold 500 m -> changes at t = 50, 100, ...
    trace = straight_trace(0, speed=10.0, duration=160.0)
    stream = apply_scheme(
        trace, [trace], SchemeConfig(kind="Distance", distance_threshold=500.0), seed=1
    )
    # independent oracle: walk the cumulative chord length
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(trace.x), np.diff(trace.y)))])
    expected = []
    mark = 500.0
    for i, c in enumerate(cum):
        crossed = False
        while c >= mark:
            crossed = True
            mark += 500.0
        if crossed:
            expected.append(float(trace.t[i]))
    assert stream.change_times() == expected
    assert expected[0] == pytest.approx(50.0)
    assert len(expected) == 3


def test_random_scheme_zero_probability_single_pseudonym():
    trace = straight_trace(0, speed=10.0, duration=200.0)
    stream = apply_scheme(trace, [trace], SchemeConfig(kind="Random", change_probability=0.0), seed=1)
    assert len(stream.pseudonyms) == 1


def test_random_scheme_certain_probability_changes_every_message():
    trace = straight_trace(0, speed=10.0, duration=10.0)
    stream = apply_scheme(trace, [trace], SchemeConfig(kind="Random", change_probability=1.0), seed=1)
    instants = bsm_instants(trace, 1.0)
    assert stream.change_times() == [float(t) for t in instants[1:]]


def test_disposable_changes_after_message_budget():
    trace = straight_trace(0, speed=10.0, duration=25.0)
    stream = apply_scheme(trace, [trace], SchemeConfig(kind="Disposable", max_messages=10), seed=1)
    assert stream.change_times() == [10.0, 20.0]


def test_car2car_triggers_and_rearms():
    traces = co_located_traces(3, duration=60.0)
    config = SchemeConfig(kind="Car2Car", neighbor_min=2, neighbor_radius=30.0)
    streams = apply_scheme_all(traces, config, seed=1)
    for stream in streams.values():
        # crowd present from the start and never dispersing: exactly one
        # change, at the first message instant, then the trigger stays
        # disarmed
        assert stream.change_times() == [0.0]


def test_car2car_no_crowd_no_changes():
    traces = [
        straight_trace(0, start=(0.0, 0.0), speed=10.0, duration=60.0),
        straight_trace(1, start=(0.0, 500.0), speed=10.0, duration=60.0),
    ]
    streams = apply_scheme_all(traces, SchemeConfig(kind="Car2Car"), seed=1)
    for stream in streams.values():
        assert stream.change_times() == []


def test_silent_period_masks_each_change():
    trace = straight_trace(0, speed=10.0, duration=200.0)
    config = SchemeConfig(kind="SilentPeriod", period=60.0, silence_min=1.0, silence_max=5.0)
    stream = apply_scheme(trace, [trace], config, seed=3)
    assert len(stream.silences) >= 2
    for (start, end), change in zip(stream.silences, stream.change_times()):
        assert start == pytest.approx(change - (end - start))
        assert 1.0 <= end - start <= 5.0 + 1e-9
        assert change == pytest.approx(end)


def test_cooperative_exchange_group_changes_simultaneously():
    traces = co_located_traces(3, duration=30.0, spacing=5.0)
    config = SchemeConfig(kind="CooperativeExchange", exchange_min_group=3, neighbor_radius=30.0)
    streams = apply_scheme_all(traces, config, seed=2)
    first_changes = [stream.change_times()[0] for stream in streams.values()]
    assert len(set(first_changes)) == 1
    assert not any(stream.silences for stream in streams.values())


def test_cooperative_exchange_falls_back_to_silent_period():
    trace = straight_trace(0, speed=10.0, duration=150.0)
    config = SchemeConfig(
        kind="CooperativeExchange", exchange_min_group=3, period=60.0, silence_min=1.0, silence_max=5.0
    )
    stream = apply_scheme(trace, [trace], config, seed=2)
    assert stream.silences, "lone vehicle must fall back to silence-masked changes"
    assert stream.change_times()


def test_pool_never_reuses_values():
    pool = PseudonymPool(seed=7)
    values = [pool.issue(float(i)).value for i in range(10000)]
    assert len(set(values)) == len(values)


def test_no_pseudonym_shared_between_vehicles():
    traces = co_located_traces(5, duration=120.0)
    streams = apply_scheme_all(traces, SchemeConfig(kind="Random", change_probability=0.3), seed=9)
    seen = set()
    for stream in streams.values():
        for p in stream.pseudonyms:
            assert p.value not in seen
            seen.add(p.value)


def test_apply_scheme_consistent_with_bulk():
    traces = co_located_traces(3, duration=90.0)
    config = SchemeConfig(kind="Periodical", period=30.0)
    bulk = apply_scheme_all(traces, config, seed=5)
    single = apply_scheme(traces[1], traces, config, seed=5)
    assert single.starts == bulk[1].starts
    assert single.pseudonyms == bulk[1].pseudonyms


def test_scheme_determinism():
    traces = co_located_traces(4, duration=100.0)
    config = SchemeConfig(kind="Random", change_probability=0.2)
    a = apply_scheme_all(traces, config, seed=11)
    b = apply_scheme_all(traces, config, seed=11)
    for vid in a:
        assert a[vid].starts == b[vid].starts
        assert a[vid].pseudonyms == b[vid].pseudonyms


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError, match="unknown scheme kind"):
        SchemeConfig(kind="Quantum").validate()


def test_config_validation():
    with pytest.raises(ConfigError):
        SchemeConfig(kind="Periodical", period=0.0).validate()
    with pytest.raises(ConfigError):
        SchemeConfig(kind="Random", change_probability=1.5).validate()
    with pytest.raises(ConfigError):
        SchemeConfig(kind="SilentPeriod", silence_min=5.0, silence_max=1.0).validate()


def test_issued_at_matches_segment_start():
    trace = straight_trace(0, speed=10.0, duration=130.0)
    stream = apply_scheme(trace, [trace], SchemeConfig(kind="Periodical", period=60.0), seed=1)
    for start, pseudonym in zip(stream.starts, stream.pseudonyms):
        assert pseudonym.issued_at == pytest.approx(start)
