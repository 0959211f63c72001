"""Parameter groups, slot quantization, and per-slot batch probabilities."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtwt_planner import (
    LinkSpec,
    RtwtSpec,
    TrafficSpec,
    batch_distribution,
    packet_loss_probability,
    slotify,
    system_capacity,
)

SLOT = 114.4e-6


def table_traffic(interarrival=16e-3):
    return TrafficSpec(rate=1.0 / interarrival, slot_time=SLOT)


class TestSlotify:
    def test_ten_ms_period(self):
        slotted = slotify(table_traffic(), RtwtSpec(period=10e-3, sp_slots=3), 20)
        assert slotted.cycle_slots == 87
        assert slotted.vacation_slots == 84
        # residue of rounding 10 ms onto the 114.4 us grid, about 0.47%
        expected = abs(10e-3 - 87 * SLOT) / 10e-3
        assert slotted.discretization_error == pytest.approx(expected, rel=1e-12)
        assert slotted.discretization_error == pytest.approx(4.72e-3, abs=1e-5)

    def test_sixteen_ms_period(self):
        slotted = slotify(table_traffic(), RtwtSpec(period=16e-3, sp_slots=3), 20)
        assert slotted.cycle_slots == 140
        assert slotted.vacation_slots == 137

    def test_exact_multiple_has_zero_error(self):
        slotted = slotify(table_traffic(), RtwtSpec(period=8 * SLOT, sp_slots=3), 20)
        assert slotted.vacation_slots == 5
        assert slotted.discretization_error == 0.0

    @given(total=st.integers(1, 500), sp=st.integers(1, 500))
    def test_idempotent_on_exact_grid(self, total, sp):
        if sp > total:
            total, sp = sp, total
        traffic = table_traffic()
        first = slotify(traffic, RtwtSpec(period=total * SLOT, sp_slots=sp), 20)
        again = slotify(traffic, RtwtSpec(period=first.cycle_slots * SLOT, sp_slots=sp), 20)
        assert again == first
        assert first.vacation_slots == total - sp

    def test_rejects_period_shorter_than_window(self):
        with pytest.raises(ValueError, match="fewer than"):
            slotify(table_traffic(), RtwtSpec(period=2 * SLOT, sp_slots=3), 20)

    def test_coarse_rounding_needs_optin(self):
        rtwt = RtwtSpec(period=0.73e-3, sp_slots=3)
        with pytest.raises(ValueError, match="allow_coarse"):
            slotify(table_traffic(), rtwt, 20)
        slotted = slotify(table_traffic(), rtwt, 20, allow_coarse=True)
        assert slotted.discretization_error > 0.01
        assert slotted.cycle_slots == 6

    def test_buffer_carried_through(self):
        slotted = slotify(table_traffic(), RtwtSpec(period=10e-3, sp_slots=3), 7)
        assert slotted.buffer_packets == 7


class TestBatchDistribution:
    def test_table_values(self):
        batches = batch_distribution(table_traffic(), LinkSpec(error_prob=0.1, retry_limit=3))
        load = SLOT / 16e-3
        assert load == pytest.approx(0.00715, rel=1e-12)
        oracle_b = 1.0 - math.exp(-load)
        assert batches.p_batch == pytest.approx(oracle_b, rel=1e-12)
        assert batches.p_batch == pytest.approx(7.1245e-3, rel=1e-4)
        assert batches.p_success[0] == pytest.approx(6.4121e-3, rel=1e-4)
        assert batches.p_fail == pytest.approx(7.1245e-6, rel=1e-4)

    def test_zero_rate(self):
        batches = batch_distribution(
            TrafficSpec(rate=0.0, slot_time=SLOT), LinkSpec(error_prob=0.1, retry_limit=3)
        )
        assert batches.p_no_batch == 1.0
        assert batches.p_batch == 0.0
        assert batches.p_success == (0.0, 0.0, 0.0)
        assert batches.p_fail == 0.0

    def test_error_free_channel(self):
        batches = batch_distribution(table_traffic(), LinkSpec(error_prob=0.0, retry_limit=3))
        assert batches.p_success == (batches.p_batch, 0.0, 0.0)
        assert batches.p_fail == 0.0

    @settings(max_examples=200)
    @given(
        interarrival=st.floats(1e-4, 10.0),
        error_prob=st.floats(0.0, 1.0),
        retry_limit=st.integers(1, 8),
    )
    def test_probability_closure(self, interarrival, error_prob, retry_limit):
        batches = batch_distribution(
            table_traffic(interarrival), LinkSpec(error_prob=error_prob, retry_limit=retry_limit)
        )
        assert batches.p_no_batch + sum(batches.p_size) == pytest.approx(1.0, abs=1e-12)
        assert sum(batches.p_success) + batches.p_fail == pytest.approx(
            batches.p_batch, abs=1e-12
        )
        assert all(p >= 0.0 for p in batches.p_size)

    def test_retry_limit_property(self):
        batches = batch_distribution(table_traffic(), LinkSpec(error_prob=0.1, retry_limit=5))
        assert batches.retry_limit == 5


class TestPacketLoss:
    def test_three_retries(self):
        assert packet_loss_probability(LinkSpec(error_prob=0.1, retry_limit=3)) == 0.1**3

    def test_single_attempt(self):
        assert packet_loss_probability(LinkSpec(error_prob=0.1, retry_limit=1)) == 0.1

    def test_perfect_channel(self):
        assert packet_loss_probability(LinkSpec(error_prob=0.0, retry_limit=3)) == 0.0

    @given(error_prob=st.floats(0.0, 1.0), retry_limit=st.integers(1, 7))
    def test_monotone_in_retries(self, error_prob, retry_limit):
        link = LinkSpec(error_prob=error_prob, retry_limit=retry_limit)
        more = LinkSpec(error_prob=error_prob, retry_limit=retry_limit + 1)
        assert packet_loss_probability(more) <= packet_loss_probability(link)

    @given(
        lo=st.floats(0.0, 1.0),
        hi=st.floats(0.0, 1.0),
        retry_limit=st.integers(1, 7),
    )
    def test_monotone_in_error_prob(self, lo, hi, retry_limit):
        if lo > hi:
            lo, hi = hi, lo
        assert packet_loss_probability(
            LinkSpec(error_prob=lo, retry_limit=retry_limit)
        ) <= packet_loss_probability(LinkSpec(error_prob=hi, retry_limit=retry_limit))


class TestSystemCapacity:
    def test_four_ms_single_slot(self):
        cap = system_capacity(RtwtSpec(period=4e-3, sp_slots=1), table_traffic())
        assert cap == pytest.approx(4e-3 / SLOT, rel=1e-12)
        assert cap == pytest.approx(34.97, rel=1e-3)

    def test_window_fills_period(self):
        assert system_capacity(RtwtSpec(period=3 * SLOT, sp_slots=3), table_traffic()) == 1.0

    def test_ten_ms_five_slots(self):
        cap = system_capacity(RtwtSpec(period=10e-3, sp_slots=5), table_traffic())
        assert cap == pytest.approx(17.48, rel=1e-3)


class TestValidation:
    @pytest.mark.parametrize(
        "make",
        [
            lambda: TrafficSpec(rate=-1.0, slot_time=SLOT),
            lambda: TrafficSpec(rate=math.inf, slot_time=SLOT),
            lambda: TrafficSpec(rate=62.5, slot_time=0.0),
            lambda: TrafficSpec(rate=62.5, slot_time=-1e-6),
            lambda: LinkSpec(error_prob=-0.1, retry_limit=3),
            lambda: LinkSpec(error_prob=1.5, retry_limit=3),
            lambda: LinkSpec(error_prob=0.1, retry_limit=0),
            lambda: LinkSpec(error_prob=0.1, retry_limit=2.5),
            lambda: RtwtSpec(period=0.0, sp_slots=3),
            lambda: RtwtSpec(period=10e-3, sp_slots=0),
            lambda: RtwtSpec(period=10e-3, sp_slots=3.0),
            lambda: RtwtSpec(period=10e-3, sp_slots=3, offset=-1.0),
        ],
    )
    def test_bad_specs_rejected(self, make):
        with pytest.raises(ValueError):
            make()

    def test_load_per_slot(self):
        traffic = table_traffic()
        assert traffic.load_per_slot == pytest.approx(0.00715, rel=1e-12)
        assert traffic.slotting_ok

    def test_heavy_load_flagged(self):
        heavy = TrafficSpec(rate=1.0 / (2 * SLOT), slot_time=SLOT)
        assert not heavy.slotting_ok
