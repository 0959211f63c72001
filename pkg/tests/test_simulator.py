"""Event-driven simulator: determinism, conservation, trace invariants."""

import csv
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtwt_planner import (
    LinkSpec,
    RtwtSpec,
    SimConfig,
    SimTimeLimitError,
    TrafficSpec,
    evaluate,
    replicate,
    simulate,
)
from rtwt_planner.simulator import SpSchedule

SLOT = 114.4e-6
TABLE_TRAFFIC = TrafficSpec(rate=1.0 / 16e-3, slot_time=SLOT)
TABLE_LINK = LinkSpec(error_prob=0.1, retry_limit=3)
TABLE_RTWT = RtwtSpec(period=10e-3, sp_slots=3)


def small_sim(seed=7, warmup=500, measured=20_000, **kw):
    return SimConfig(seed=seed, warmup_packets=warmup, measured_packets=measured, **kw)


def read_trace(path):
    with open(path) as handle:
        rows = list(csv.DictReader(handle))
    return [(float(r["time_s"]), r["event"], int(r["queue_len"])) for r in rows]


class TestDeterminism:
    def test_same_seed_identical(self):
        first = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim())
        second = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim())
        assert first.to_dict() == second.to_dict()

    def test_same_seed_identical_samples(self):
        cfg = small_sim(measured=5_000, keep_samples=True)
        first = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, cfg)
        second = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, cfg)
        assert np.array_equal(first.samples, second.samples)

    def test_different_seeds_differ(self):
        first = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(seed=1))
        second = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(seed=2))
        assert first.mean_delay_s != second.mean_delay_s

    def test_replicate_single_run_degenerates(self):
        alone = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim())
        wrapped = replicate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(), n_runs=1)
        assert alone.to_dict() == wrapped.to_dict()

    def test_replicate_aggregates(self):
        cfg = small_sim(measured=10_000)
        pooled = replicate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, cfg, n_runs=3)
        parts = [
            simulate(
                TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20,
                dataclasses.replace(cfg, seed=cfg.seed + i),
            )
            for i in range(3)
        ]
        assert pooled.runs == 3
        assert pooled.delivered == sum(p.delivered for p in parts)
        assert pooled.lost_retry == sum(p.lost_retry for p in parts)
        assert pooled.mean_delay_s == pytest.approx(
            np.mean([p.mean_delay_s for p in parts]), rel=1e-12
        )

    def test_disjoint_seed_ranges_statistically_consistent(self):
        cfg = dict(warmup_packets=2_000, measured_packets=100_000)
        low = replicate(
            TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, SimConfig(seed=100, **cfg), n_runs=2
        )
        high = replicate(
            TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, SimConfig(seed=900, **cfg), n_runs=2
        )
        assert abs(low.mean_delay_s - high.mean_delay_s) <= low.mean_ci_s + high.mean_ci_s


class TestDegenerateChannels:
    def test_zero_rate(self):
        silent = TrafficSpec(rate=0.0, slot_time=SLOT)
        report = simulate(silent, TABLE_LINK, TABLE_RTWT, 20, small_sim())
        assert report.offered == 0
        assert report.delivered == 0
        assert math.isnan(report.mean_delay_s)

    def test_never_succeeding_channel(self):
        hopeless = LinkSpec(error_prob=1.0, retry_limit=2)
        cfg = SimConfig(seed=3, warmup_packets=0, measured_packets=10, max_sim_time=30.0)
        report = simulate(TABLE_TRAFFIC, hopeless, TABLE_RTWT, 20, cfg)
        assert report.delivered == 0
        assert report.lost_retry == report.offered > 0

    def test_time_budget_exhaustion_raises(self):
        cfg = SimConfig(seed=3, warmup_packets=0, measured_packets=10**6, max_sim_time=2.0)
        with pytest.raises(SimTimeLimitError, match="time cap"):
            simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, cfg)

    def test_error_free_channel_single_attempts(self):
        clean = LinkSpec(error_prob=0.0, retry_limit=3)
        report = simulate(TABLE_TRAFFIC, clean, TABLE_RTWT, 20, small_sim(measured=2_000))
        assert report.lost_retry == 0
        assert report.delivered == 2_000


@pytest.fixture(scope="module")
def traced(tmp_path_factory):
    path = tmp_path_factory.mktemp("trace") / "events.csv"
    cfg = SimConfig(seed=11, warmup_packets=0, measured_packets=3_000)
    report = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 4, cfg, trace_path=path)
    return report, read_trace(path)


class TestTraceInvariants:
    def test_attempts_stay_inside_windows(self, traced):
        _, rows = traced
        period, sp_len = TABLE_RTWT.period, TABLE_RTWT.sp_slots * SLOT
        seen = 0
        for t, event, _ in rows:
            if event != "attempt_start":
                continue
            seen += 1
            position = math.fmod(t, period)
            if position > period - 1e-9:  # boundary noise wraps to ~period
                position = 0.0
            assert position <= sp_len - SLOT + 1e-9
        assert seen > 3_000

    def test_attempt_budget_respected(self, traced):
        _, rows = traced
        pending = 0
        for _, event, _ in rows:
            if event == "attempt_start":
                pending += 1
            elif event == "attempt_ok":
                assert 1 <= pending <= TABLE_LINK.retry_limit
                pending = 0
            elif event == "drop_retry":
                assert pending == TABLE_LINK.retry_limit
                pending = 0
        assert pending == 0

    def test_packet_conservation(self, traced):
        report, rows = traced
        kinds = [event for _, event, _ in rows]
        arrivals = kinds.count("arrival")
        assert arrivals == report.offered
        assert kinds.count("attempt_ok") == report.delivered
        assert kinds.count("drop_retry") == report.lost_retry
        assert kinds.count("drop_overflow") == report.lost_overflow
        assert report.offered == report.delivered + report.lost_retry + report.lost_overflow

    def test_queue_length_never_negative_or_overfull(self, traced):
        _, rows = traced
        occupancy = [q for _, _, q in rows]
        assert min(occupancy) >= 0
        assert max(occupancy) <= 4

    def test_window_markers_periodic(self, traced):
        _, rows = traced
        starts = [t for t, event, _ in rows if event == "sp_start"]
        ends = [t for t, event, _ in rows if event == "sp_end"]
        assert len(starts) == len(ends)
        gaps = np.diff(starts)
        assert np.allclose(gaps, TABLE_RTWT.period, atol=1e-9)
        assert np.allclose(
            np.array(ends) - np.array(starts), TABLE_RTWT.sp_slots * SLOT, atol=1e-9
        )

    def test_events_time_ordered(self, traced):
        _, rows = traced
        times = [t for t, _, _ in rows]
        assert times == sorted(times)

    def test_trace_needs_single_run(self, tmp_path):
        with pytest.raises(ValueError, match="n_runs = 1"):
            replicate(
                TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(),
                n_runs=2, trace_path=tmp_path / "t.csv",
            )


class TestStatisticalAgreement:
    def test_loss_ratio_matches_channel(self):
        report = simulate(
            TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20,
            SimConfig(seed=12345, warmup_packets=10_000, measured_packets=200_000),
        )
        expected = 0.1**3
        spread = math.sqrt(expected * (1 - expected) / (report.delivered + report.lost_retry))
        assert abs(report.loss_ratio - expected) <= 3 * spread

    def test_huge_buffer_never_overflows(self):
        report = simulate(
            TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 1_000, small_sim(measured=100_000)
        )
        assert report.lost_overflow == 0

    def test_mean_close_to_analytic_model(self):
        report = simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(measured=200_000))
        model = evaluate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20)
        assert report.mean_delay_s == pytest.approx(model.mean_delay_s, rel=0.05)


class TestSpSchedule:
    def chained_times(self, schedule, count=400):
        """Follow back-to-back services; boundary-exact times show up fast."""
        t, out = 0.0, []
        for i in range(count):
            t = schedule.completion(t, 1 + i % 3)
            out.append(t)
        return out

    @pytest.mark.parametrize(
        "period,sp_slots,offset",
        [(10e-3, 3, 0.0), (1e-3, 1, 0.0), (16e-3, 5, 2.3e-4), (2 * SLOT, 2, 0.0)],
    )
    def test_window_start_brackets_time(self, period, sp_slots, offset):
        schedule = SpSchedule(RtwtSpec(period=period, sp_slots=sp_slots, offset=offset), SLOT)
        for t in self.chained_times(schedule):
            start = schedule.window_start(t)
            assert start <= t < start + period
            cycles = round((start - offset) / period)
            assert start == pytest.approx(offset + cycles * period, abs=1e-12)

    @pytest.mark.parametrize(
        "period,sp_slots",
        [(10e-3, 3), (1e-3, 1), (16e-3, 5)],
    )
    def test_completion_never_skips_windows(self, period, sp_slots):
        # a single attempt is never more than one vacation away; the historic
        # failure mode here was a 29-period jump from one-ulp window drift
        schedule = SpSchedule(RtwtSpec(period=period, sp_slots=sp_slots), SLOT)
        t = 0.0
        for i in range(1_000):
            fit = schedule.first_fit(t)
            done = schedule.completion(t, 1)
            assert done == pytest.approx(fit + SLOT, abs=1e-12)
            assert done - t <= period + SLOT + 1e-9
            t = done

    def test_completion_matches_attempt_ends(self):
        schedule = SpSchedule(TABLE_RTWT, SLOT)
        for t in self.chained_times(schedule, count=100):
            ends = schedule.attempt_ends(t, 5)
            assert ends[-1] == schedule.completion(t, 5)
            assert all(b - a >= SLOT - 1e-12 for a, b in zip(ends, ends[1:]))

    @settings(max_examples=200, deadline=None)
    @given(
        windows=st.integers(0, 500),
        within=st.floats(0.0, 1.0),
        attempts=st.integers(1, 9),
    )
    def test_completion_spans_expected_windows(self, windows, within, attempts):
        schedule = SpSchedule(TABLE_RTWT, SLOT)
        t = windows * schedule.period + within * schedule.period
        done = schedule.completion(t, attempts)
        assert done >= t + attempts * SLOT - 1e-9
        # attempts slots of service plus at most one vacation per window the
        # batch can spill into
        spills = (attempts - 1) // schedule.slots + 1
        assert done <= t + spills * schedule.period + attempts * SLOT + 1e-9

    def test_window_must_hold_one_attempt(self):
        with pytest.raises(ValueError, match="does not fit"):
            SpSchedule(RtwtSpec(period=SLOT / 2, sp_slots=1), SLOT)


class TestSimConfigValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(warmup_packets=-1),
            dict(measured_packets=0),
            dict(max_sim_time=0.0),
            dict(max_sim_time=math.inf),
        ],
    )
    def test_bad_values_rejected(self, kw):
        with pytest.raises(ValueError):
            SimConfig(seed=1, **kw)

    def test_bad_run_counts_rejected(self):
        with pytest.raises(ValueError, match="n_runs"):
            replicate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(), n_runs=0)

    def test_bad_buffer_rejected(self):
        with pytest.raises(ValueError, match="buffer"):
            simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 0, small_sim())

    def test_bad_quantile_rejected(self):
        with pytest.raises(ValueError, match="quantile"):
            simulate(TABLE_TRAFFIC, TABLE_LINK, TABLE_RTWT, 20, small_sim(), quantile=1.5)
