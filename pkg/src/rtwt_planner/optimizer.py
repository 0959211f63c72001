"""Schedule search: densest feasible allocation under a delay-quality bound.

A schedule serving one flow in `sp_slots` slots every `period` seconds
admits period / (sp_slots * slot_time) interleaved flows.  The optimizer
evaluates the analytic model over an exhaustive (period, sp_slots) grid and
keeps the capacity-densest point whose chosen quality indicator stays below
the target, breaking ties toward the shorter period and then the smaller
window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import MetricsReport, ModelError, evaluate
from .params import LinkSpec, RtwtSpec, TrafficSpec

INDICATORS = ("percentile", "mean_delay", "jitter")
SWEEP_AXES = ("period", "sp_slots", "interarrival")


@dataclass(frozen=True)
class QosConstraint:
    """Upper bound on one delay-quality indicator."""

    indicator: str  # one of INDICATORS
    target: float  # seconds
    quantile: float = 0.999  # used when indicator == "percentile"

    def __post_init__(self) -> None:
        if self.indicator not in INDICATORS:
            raise ValueError(f"indicator must be one of {INDICATORS}, got {self.indicator!r}")
        if not math.isfinite(self.target) or self.target <= 0:
            raise ValueError(f"target must be finite and > 0, got {self.target}")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must be in (0, 1), got {self.quantile}")


@dataclass(frozen=True)
class SearchGrid:
    """Exhaustive rectangular search space over (period, sp_slots)."""

    period_min: float = 0.5e-3
    period_max: float = 16e-3
    period_step: float = 0.1e-3
    sp_slots_min: int = 1
    sp_slots_max: int = 5

    def __post_init__(self) -> None:
        if not 0 < self.period_min <= self.period_max:
            raise ValueError("period bounds must satisfy 0 < min <= max")
        if self.period_step <= 0:
            raise ValueError(f"period_step must be > 0, got {self.period_step}")
        if not 1 <= self.sp_slots_min <= self.sp_slots_max:
            raise ValueError("sp_slots bounds must satisfy 1 <= min <= max")

    def period_values(self) -> list[float]:
        """Grid points min, min+step, ... computed without drift."""
        count = int(math.floor((self.period_max - self.period_min) / self.period_step + 0.5))
        values = [self.period_min + i * self.period_step for i in range(count + 1)]
        return [v for v in values if v <= self.period_max * (1.0 + 1e-12)]

    def sp_slots_values(self) -> list[int]:
        return list(range(self.sp_slots_min, self.sp_slots_max + 1))


@dataclass(frozen=True, eq=False)
class GridPoint:
    """One evaluated (period, sp_slots) candidate."""

    period: float
    sp_slots: int
    report: MetricsReport | None  # None when evaluation failed
    error: str | None = None


@dataclass(frozen=True)
class OptimalChoice:
    """Search outcome: the densest feasible point, or the nearest miss."""

    feasible: bool
    period: float | None
    sp_slots: int | None
    capacity: float | None
    capacity_floor: int | None  # whole flows; capacity reported both ways
    achieved: float | None  # indicator value at the chosen point, seconds
    indicator: str
    target: float
    quantile: float
    evaluated_points: int  # grid points attempted, failed ones included

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "period_s": self.period,
            "sp_slots": self.sp_slots,
            "capacity": self.capacity,
            "capacity_floor": self.capacity_floor,
            "achieved_s": self.achieved,
            "indicator": self.indicator,
            "target_s": self.target,
            "quantile": self.quantile,
            "evaluated_points": self.evaluated_points,
        }


def indicator_value(report: MetricsReport, indicator: str) -> float:
    if indicator == "percentile":
        return report.percentile_s
    if indicator == "mean_delay":
        return report.mean_delay_s
    if indicator == "jitter":
        return report.jitter_s
    raise ValueError(f"indicator must be one of {INDICATORS}, got {indicator!r}")


def evaluate_grid(
    traffic: TrafficSpec,
    link: LinkSpec,
    buffer_packets: int,
    grid: SearchGrid,
    quantile: float = 0.999,
) -> list[GridPoint]:
    """Model evaluation of every grid point; failures land in the point record.

    Points whose period rounds coarsely onto the slot grid are still
    evaluated (the rounding acknowledgment is implied by a grid search).
    """
    points = []
    for period in grid.period_values():
        for sp_slots in grid.sp_slots_values():
            rtwt = RtwtSpec(period=period, sp_slots=sp_slots)
            try:
                report = evaluate(
                    traffic, link, rtwt, buffer_packets,
                    quantile=quantile, allow_coarse=True,
                )
            except (ValueError, ModelError) as exc:
                points.append(GridPoint(period, sp_slots, None, str(exc)))
            else:
                points.append(GridPoint(period, sp_slots, report))
    return points


def select_optimum(points: list[GridPoint], constraint: QosConstraint) -> OptimalChoice:
    """Pick the densest feasible point with deterministic tie-breaking.

    Order of `points` never matters: ties on capacity fall to the shorter
    period, then the smaller window.  With no feasible point the choice
    reports feasible=False and carries the point closest to the target.
    """
    best = None  # (capacity, period, sp_slots, achieved)
    nearest = None  # (gap, period, sp_slots, achieved, capacity)
    for pt in points:
        if pt.report is None:
            continue
        achieved = indicator_value(pt.report, constraint.indicator)
        cap = pt.report.capacity
        if achieved <= constraint.target:
            key = (cap, -pt.period, -pt.sp_slots)
            if best is None or key > (best[0], -best[1], -best[2]):
                best = (cap, pt.period, pt.sp_slots, achieved)
        gap = abs(achieved - constraint.target)
        near_key = (-gap, -pt.period, -pt.sp_slots)
        if nearest is None or near_key > (-nearest[0], -nearest[1], -nearest[2]):
            nearest = (gap, pt.period, pt.sp_slots, achieved, cap)
    if best is not None:
        cap, period, sp_slots, achieved = best
        return OptimalChoice(
            feasible=True, period=period, sp_slots=sp_slots,
            capacity=cap, capacity_floor=int(math.floor(cap)), achieved=achieved,
            indicator=constraint.indicator, target=constraint.target,
            quantile=constraint.quantile, evaluated_points=len(points),
        )
    if nearest is not None:
        gap, period, sp_slots, achieved, cap = nearest
        return OptimalChoice(
            feasible=False, period=period, sp_slots=sp_slots,
            capacity=cap, capacity_floor=int(math.floor(cap)), achieved=achieved,
            indicator=constraint.indicator, target=constraint.target,
            quantile=constraint.quantile, evaluated_points=len(points),
        )
    return OptimalChoice(
        feasible=False, period=None, sp_slots=None, capacity=None,
        capacity_floor=None, achieved=None, indicator=constraint.indicator,
        target=constraint.target, quantile=constraint.quantile,
        evaluated_points=len(points),
    )


def optimize(
    traffic: TrafficSpec,
    link: LinkSpec,
    buffer_packets: int,
    constraint: QosConstraint,
    grid: SearchGrid = SearchGrid(),
) -> OptimalChoice:
    """Exhaustive search for the densest schedule meeting the constraint."""
    points = evaluate_grid(traffic, link, buffer_packets, grid, quantile=constraint.quantile)
    return select_optimum(points, constraint)


@dataclass(frozen=True, eq=False)
class SweepRow:
    """One point of a one-dimensional parameter sweep."""

    axis: str
    value: float
    report: MetricsReport | None
    error: str | None = None


def sweep_point(
    axis: str, value, traffic: TrafficSpec, rtwt: RtwtSpec
) -> tuple[TrafficSpec, RtwtSpec]:
    """Apply one axis value onto the base (traffic, schedule) pair."""
    if axis == "period":
        return traffic, RtwtSpec(period=float(value), sp_slots=rtwt.sp_slots, offset=rtwt.offset)
    if axis == "sp_slots":
        return traffic, RtwtSpec(period=rtwt.period, sp_slots=int(value), offset=rtwt.offset)
    if axis == "interarrival":
        return TrafficSpec(rate=1.0 / float(value), slot_time=traffic.slot_time), rtwt
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep(
    traffic: TrafficSpec,
    link: LinkSpec,
    buffer_packets: int,
    axis: str,
    values,
    rtwt: RtwtSpec,
    quantile: float = 0.999,
    carry_full_vacation: bool = True,
) -> list[SweepRow]:
    """Model metrics along one parameter axis; per-point failures stay in-row."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    rows = []
    for value in values:
        try:
            point_traffic, point_rtwt = sweep_point(axis, value, traffic, rtwt)
            report = evaluate(
                point_traffic, link, point_rtwt, buffer_packets,
                quantile=quantile, allow_coarse=True,
                carry_full_vacation=carry_full_vacation,
            )
        except (ValueError, ModelError, ZeroDivisionError) as exc:
            rows.append(SweepRow(axis, float(value), None, str(exc)))
        else:
            rows.append(SweepRow(axis, float(value), report))
    return rows
