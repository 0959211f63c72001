"""Canned experiment presets and the model-vs-simulator comparison table.

Each preset regenerates one published data table as CSV: delay metrics
across window periods (fig2), across window sizes (fig3), across offered
load (fig4), and the capacity frontier the optimizer traces across QoS
targets (fig5).  The fig* names are the stable CLI identifiers.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .config import RunConfig
from .model import ModelError, evaluate
from .optimizer import (
    INDICATORS,
    QosConstraint,
    SearchGrid,
    evaluate_grid,
    select_optimum,
    sweep_point,
)
from .params import LinkSpec, RtwtSpec, TrafficSpec
from .simulator import replicate

EXPERIMENTS = ("fig2", "fig3", "fig4", "fig5")

VALIDATION_HEADER = [
    "axis",
    "mean_ana", "mean_sim", "mean_sim_ci",
    "jitter_ana", "jitter_sim",
    "loss_ana", "loss_sim",
    "pctl_ana", "pctl_sim", "err_pctl_abs",
    "error",
]

FRONTIER_HEADER = [
    "indicator", "target_ms", "period_ms", "sp_slots",
    "capacity", "capacity_floor", "achieved_ms", "feasible",
]


@dataclass(frozen=True, eq=False)
class ExperimentFile:
    """One CSV worth of experiment output."""

    stem: str
    header: list[str]
    rows: list[list]


def _steps(start: float, stop: float, step: float) -> list[float]:
    """Inclusive drift-free range used for swept axes."""
    count = int(math.floor((stop - start) / step + 0.5))
    return [start + i * step for i in range(count + 1)]


def validation_rows(
    traffic: TrafficSpec,
    link: LinkSpec,
    rtwt: RtwtSpec,
    buffer_packets: int,
    axis: str,
    values,
    cfg: RunConfig,
    progress=None,
) -> list[list]:
    """Model and simulator metrics side by side along one axis.

    Per-value failures land in the trailing error column instead of
    aborting the sweep; the time-cap is the exception since a stalled
    simulation means every later row would stall the same way.
    """
    rows = []
    for value in values:
        if progress is not None:
            progress(f"{axis}={value!r}")
        row_traffic, row_rtwt = sweep_point(axis, value, traffic, rtwt)
        ana = sim = None
        errors = []
        try:
            ana = evaluate(
                row_traffic, link, row_rtwt, buffer_packets,
                quantile=cfg.percentile_q, allow_coarse=True,
            )
        except (ValueError, ModelError) as exc:
            errors.append(f"model: {exc}")
        try:
            sim = replicate(
                row_traffic, link, row_rtwt, buffer_packets,
                cfg.sim, cfg.sim_runs, quantile=cfg.percentile_q,
            )
        except (ValueError, ZeroDivisionError) as exc:
            errors.append(f"sim: {exc}")
        rows.append([
            float(value),
            ana.mean_delay_s if ana else None,
            sim.mean_delay_s if sim else None,
            sim.mean_ci_s if sim else None,
            ana.jitter_s if ana else None,
            sim.jitter_s if sim else None,
            ana.loss_prob if ana else None,
            sim.loss_ratio if sim else None,
            ana.percentile_s if ana else None,
            sim.percentile_s if sim else None,
            abs(ana.percentile_s - sim.percentile_s) if ana and sim else None,
            "; ".join(errors) or None,
        ])
    return rows


def frontier_rows(
    traffic: TrafficSpec,
    link: LinkSpec,
    buffer_packets: int,
    grid: SearchGrid,
    targets: list[float],
    quantile: float,
    progress=None,
) -> list[list]:
    """Optimizer selections across QoS targets, one grid pass for all."""
    if progress is not None:
        progress(f"grid: {len(grid.period_values()) * len(grid.sp_slots_values())} points")
    points = evaluate_grid(traffic, link, buffer_packets, grid, quantile=quantile)
    rows = []
    for indicator in INDICATORS:
        for target in targets:
            choice = select_optimum(
                points, QosConstraint(indicator=indicator, target=target, quantile=quantile)
            )
            rows.append([
                indicator,
                target * 1e3,
                choice.period * 1e3 if choice.period is not None else None,
                choice.sp_slots,
                choice.capacity,
                choice.capacity_floor,
                choice.achieved * 1e3 if choice.achieved is not None else None,
                choice.feasible,
            ])
    return rows


def run_experiment(
    name: str, cfg: RunConfig, period_step: float | None = None, progress=None
) -> list[ExperimentFile]:
    """Produce the CSV bundle for one preset.

    Presets pin their swept and contrasted parameters; slot time, error
    probability, buffer size, percentile level, and simulation settings
    follow the run configuration.
    """
    if name not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {name!r}")
    traffic, link = cfg.traffic, cfg.link
    files = []
    if name == "fig2":
        periods = _steps(1e-3, 16e-3, period_step or 1e-3)
        rtwt = RtwtSpec(period=10e-3, sp_slots=3)
        for retry in (1, 3):
            rows = validation_rows(
                traffic, dataclasses.replace(link, retry_limit=retry), rtwt,
                cfg.buffer_packets, "period", periods, cfg, progress,
            )
            files.append(ExperimentFile(f"{name}_retry{retry}", VALIDATION_HEADER, rows))
    elif name == "fig3":
        window_sizes = list(range(1, 11))
        rtwt = RtwtSpec(period=10e-3, sp_slots=3)
        for retry in (1, 3):
            rows = validation_rows(
                traffic, dataclasses.replace(link, retry_limit=retry), rtwt,
                cfg.buffer_packets, "sp_slots", window_sizes, cfg, progress,
            )
            files.append(ExperimentFile(f"{name}_retry{retry}", VALIDATION_HEADER, rows))
    elif name == "fig4":
        interarrivals = _steps(5e-3, 16e-3, 1e-3)
        link3 = dataclasses.replace(link, retry_limit=3)
        for sp_slots in (3, 5):
            rtwt = RtwtSpec(period=10e-3, sp_slots=sp_slots)
            rows = validation_rows(
                traffic, link3, rtwt, cfg.buffer_packets,
                "interarrival", interarrivals, cfg, progress,
            )
            files.append(ExperimentFile(f"{name}_sp{sp_slots}", VALIDATION_HEADER, rows))
    else:
        targets = _steps(1e-3, 30e-3, 1e-3)
        rows = frontier_rows(
            traffic, link, cfg.buffer_packets, cfg.grid,
            targets, cfg.percentile_q, progress,
        )
        files.append(ExperimentFile(name, FRONTIER_HEADER, rows))
    return files
