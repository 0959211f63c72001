"""Discrete-time queue model of a flow served in periodic service windows.

The timeline is cut into packet-sized slots and the pair (queue length k,
slot position n inside the period) forms a Markov chain: during service
slots one queued packet leaves per slot, during vacation slots the queue
only grows.  Batches that would overflow the buffer are dropped whole.
The slot position advances deterministically, so the chain is periodic and
plain power iteration cannot converge; the stationary distribution is
instead obtained by reducing the cycle to a single per-period transition
matrix (with a full sparse solve over all (k, n) states kept as an
independent cross-check).  Folding the stationary state with the batch
probabilities gives the exact delay probability mass function on the slot
grid, from which mean delay, jitter, loss and high percentiles follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .params import (
    BatchDistribution,
    LinkSpec,
    RtwtSpec,
    SlottedConfig,
    TrafficSpec,
    batch_distribution,
    packet_loss_probability,
    slotify,
    system_capacity,
)

# Stationary solutions whose balance residual exceeds this are rejected.
RESIDUAL_LIMIT = 1e-8


class ModelError(RuntimeError):
    """Raised when the analytic model cannot produce a meaningful answer."""


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Per-slot transition structure of the queue chain."""

    slotted: SlottedConfig
    batches: BatchDistribution
    sp_matrix: np.ndarray  # (K+1, K+1), applies in service slots
    vacation_matrix: np.ndarray  # (K+1, K+1), applies in vacation slots

    def slot_matrix(self, n: int) -> np.ndarray:
        """Transition matrix applied between slot n and slot n + 1."""
        if not 0 <= n < self.slotted.cycle_slots:
            raise ValueError(f"slot index {n} outside cycle of {self.slotted.cycle_slots}")
        return self.sp_matrix if n < self.slotted.sp_slots else self.vacation_matrix


def build_chain(slotted: SlottedConfig, batches: BatchDistribution) -> ChainModel:
    """Assemble the two per-slot transition matrices.

    In any slot a batch of size r joins the queue only when it fits
    (k + r <= K); otherwise it is dropped whole and the queue is unchanged.
    In a service slot one packet additionally leaves, and a batch arriving
    at an empty queue has its first packet served within the same slot.
    """
    cap = slotted.buffer_packets
    size = batches.p_size
    limit = len(size)

    vac = np.zeros((cap + 1, cap + 1))
    sp = np.zeros_like(vac)
    for k in range(cap + 1):
        # batches too big for the remaining space are dropped whole
        no_fit = batches.p_no_batch + sum(size[r - 1] for r in range(cap - k + 1, limit + 1))
        vac[k, k] += no_fit
        sp[k, max(k - 1, 0)] += no_fit
        for r in range(1, min(cap - k, limit) + 1):
            vac[k, k + r] += size[r - 1]
            sp[k, k + r - 1] += size[r - 1]
    return ChainModel(slotted=slotted, batches=batches, sp_matrix=sp, vacation_matrix=vac)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Stationary probabilities p[k, n] of the queue chain."""

    probs: np.ndarray  # shape (K+1, cycle_slots), sums to 1
    residual: float  # worst absolute balance violation
    method: str  # "cycle" or "full"

    def slot_marginals(self) -> np.ndarray:
        """Probability of observing each slot position (uniform by design)."""
        return self.probs.sum(axis=0)


def _solve_fixed_point(transition: np.ndarray) -> np.ndarray:
    """Solve phi = phi @ transition with phi summing to one."""
    dim = transition.shape[0]
    system = transition.T - np.eye(dim)
    system[-1, :] = 1.0  # replace one redundant balance row with normalization
    rhs = np.zeros(dim)
    rhs[-1] = 1.0
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"stationary solve failed: {exc}") from exc


def _propagate(chain: ChainModel, phi0: np.ndarray) -> np.ndarray:
    """Carry the slot-0 distribution through every slot of the cycle."""
    cycle = chain.slotted.cycle_slots
    phis = np.empty((cycle, phi0.shape[0]))
    phis[0] = phi0
    for n in range(cycle - 1):
        phis[n + 1] = phis[n] @ chain.slot_matrix(n)
    return phis.T / cycle


def _stationary_cycle(chain: ChainModel) -> np.ndarray:
    n_sp = chain.slotted.sp_slots
    n_vac = chain.slotted.vacation_slots
    reduced = np.linalg.matrix_power(chain.sp_matrix, n_sp) @ np.linalg.matrix_power(
        chain.vacation_matrix, n_vac
    )
    return _propagate(chain, _solve_fixed_point(reduced))


def _stationary_full(chain: ChainModel) -> np.ndarray:
    """Independent route: sparse linear solve over all (k, n) states."""
    cycle = chain.slotted.cycle_slots
    dim = chain.slotted.buffer_packets + 1
    total = cycle * dim
    rows, cols, data = [], [], []
    for n in range(cycle):
        mat = chain.slot_matrix(n)
        src, dst = np.nonzero(mat)
        rows.append(n * dim + src)
        cols.append(((n + 1) % cycle) * dim + dst)
        data.append(mat[src, dst])
    transition = scipy.sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(total, total),
    ).tocsr()
    system = (transition.T - scipy.sparse.identity(total, format="csr")).tolil()
    system[-1, :] = 1.0
    rhs = np.zeros(total)
    rhs[-1] = 1.0
    try:
        flat = scipy.sparse.linalg.spsolve(system.tocsr(), rhs)
    except RuntimeError as exc:  # pragma: no cover - singular systems
        raise ModelError(f"stationary solve failed: {exc}") from exc
    return flat.reshape(cycle, dim).T


def _balance_residual(chain: ChainModel, probs: np.ndarray) -> float:
    cycle = chain.slotted.cycle_slots
    residual = abs(probs.sum() - 1.0)
    for n in range(cycle):
        step = probs[:, n] @ chain.slot_matrix(n)
        residual = max(residual, np.abs(step - probs[:, (n + 1) % cycle]).max())
    return float(residual)


def stationary(chain: ChainModel, method: str = "cycle") -> StationaryDistribution:
    """Stationary distribution of the queue chain.

    `method="cycle"` collapses the period into one transition matrix over
    queue lengths and propagates the fixed point through the cycle;
    `method="full"` solves the complete (k, n) balance system sparsely.
    Both must agree; the second exists as a cross-check of the first.
    """
    if method == "cycle":
        probs = _stationary_cycle(chain)
    elif method == "full":
        probs = _stationary_full(chain)
    else:
        raise ValueError(f"unknown stationary method {method!r}")
    residual = _balance_residual(chain, probs)
    if residual > RESIDUAL_LIMIT:
        raise ModelError(f"stationary solution violates balance by {residual:.3e}")
    if probs.min() < -1e-14:
        raise ModelError(f"stationary solution has negative mass {probs.min():.3e}")
    probs = np.where(probs < 0.0, 0.0, probs)
    return StationaryDistribution(probs=probs, residual=residual, method=method)


def extra_vacation_slots(pending: int, sp_slots: int, vacation_slots: int) -> int:
    """Vacation slots spent after the first window that serves the backlog.

    With `pending` packets left to drain and sp_slots served per window, the
    drain spans ceil(pending / sp_slots) windows; each window boundary after
    the first costs a full vacation.
    """
    if pending < 1:
        raise ValueError(f"pending must be >= 1, got {pending}")
    full, rem = divmod(pending, sp_slots)
    return (full - (0 if rem else 1)) * vacation_slots


def batch_delay_slots(
    k: int,
    n: int,
    r: int,
    slotted: SlottedConfig,
    carry_full_vacation: bool = True,
) -> int:
    """Slots from batch arrival to the end of its last packet's service.

    The batch of size r arrives at slot n with k packets queued ahead of it
    (it must fit: k + r <= buffer).  During a vacation the whole backlog
    waits for the next window; inside a window only the slots left before
    the boundary can serve.  `carry_full_vacation` keeps the physically
    correct rule that a backlog still pending when the window closes waits
    out the entire vacation; False charges a single slot instead, an
    understatement kept only for empirical comparison.
    """
    n_sp = slotted.sp_slots
    n_vac = slotted.vacation_slots
    cycle = slotted.cycle_slots
    if not 0 <= k <= slotted.buffer_packets:
        raise ValueError(f"queue length {k} outside [0, {slotted.buffer_packets}]")
    if not 0 <= n < cycle:
        raise ValueError(f"slot index {n} outside [0, {cycle})")
    if r < 1:
        raise ValueError(f"batch size must be >= 1, got {r}")
    total = k + r
    if total > slotted.buffer_packets:
        raise ValueError(f"batch does not fit: {k} + {r} > {slotted.buffer_packets}")
    if n >= n_sp:  # arrival while sleeping
        return (cycle - n) + total + extra_vacation_slots(total, n_sp, n_vac)
    pending = total - min(n_sp - n, total)
    if pending == 0:
        return total
    first_wait = n_vac if carry_full_vacation else 1
    return total + first_wait + extra_vacation_slots(pending, n_sp, n_vac)


@dataclass(frozen=True, eq=False)
class DelayPmf:
    """Delay distribution of delivered packets, on the slot grid."""

    mass: np.ndarray  # mass[d] = P(delay == d slots); mass[0] == 0

    def mean_slots(self) -> float:
        return float(np.arange(self.mass.size) @ self.mass)

    def std_slots(self) -> float:
        d = np.arange(self.mass.size)
        second = float((d * d) @ self.mass)
        mean = float(d @ self.mass)
        return math.sqrt(max(second - mean * mean, 0.0))

    def percentile_slots(self, quantile: float) -> int:
        """Smallest delay d whose cumulative mass reaches the quantile."""
        if not 0.0 < quantile < 1.0:
            raise ValueError(f"quantile must be in (0, 1), got {quantile}")
        cdf = np.cumsum(self.mass)
        return int(np.searchsorted(cdf, quantile, side="left"))


def delay_pmf(
    stat: StationaryDistribution,
    batches: BatchDistribution,
    slotted: SlottedConfig,
    carry_full_vacation: bool = True,
) -> DelayPmf:
    """Exact delay distribution of delivered packets.

    Weights every (queue state, arrival slot, batch size) cell by its
    stationary probability times the success probability of the batch size,
    normalized over delivered packets only; batches that would overflow the
    buffer contribute to neither side.
    """
    if batches.p_batch == 0.0:
        raise ModelError("arrival rate is zero, no deliveries to account")
    cap = slotted.buffer_packets
    n_sp = slotted.sp_slots
    n_vac = slotted.vacation_slots
    cycle = slotted.cycle_slots
    limit = batches.retry_limit

    n = np.arange(cycle)[:, None, None]
    k = np.arange(cap + 1)[None, :, None]
    r = np.arange(1, limit + 1)[None, None, :]
    total = k + r
    fits = total <= cap
    total_cl = np.minimum(total, cap)

    extra = np.zeros(cap + 1, dtype=np.int64)
    for q in range(1, cap + 1):
        extra[q] = extra_vacation_slots(q, n_sp, n_vac)

    d_vac = (cycle - n) + total + extra[total_cl]
    pending = total - np.minimum(n_sp - n, total)
    pending_cl = np.minimum(np.maximum(pending, 0), cap)
    first_wait = np.where(pending > 0, n_vac if carry_full_vacation else 1, 0)
    d_sp = total + first_wait + extra[pending_cl]
    delays = np.where(n < n_sp, d_sp, d_vac)

    weights = stat.probs.T[:, :, None] * np.asarray(batches.p_success)[None, None, :]
    weights = np.where(fits, weights, 0.0)
    norm = weights.sum()
    if norm <= 0.0:
        raise ModelError("no successful delivery has positive probability")

    mask = np.broadcast_to(fits, delays.shape)
    mass = np.bincount(delays[mask].ravel(), weights=weights[mask].ravel()) / norm
    mass = mass[: int(np.nonzero(mass)[0][-1]) + 1]  # drop the all-zero tail
    bound = (cap + limit) * (1.0 + n_vac / n_sp) + n_sp + n_vac
    if mass.size - 1 > bound:
        raise ModelError(
            f"delay support {mass.size - 1} exceeds the analytic bound {bound:.1f}"
        )
    return DelayPmf(mass=mass)


def overflow_probability(stat: StationaryDistribution, batches: BatchDistribution) -> float:
    """Stationary per-slot probability that an arriving batch is dropped whole."""
    cap = stat.probs.shape[0] - 1
    size = np.asarray(batches.p_size)
    queue_marginal = stat.probs.sum(axis=1)
    dropped = sum(queue_marginal[k] * size[cap - k :].sum() for k in range(cap + 1))
    return float(dropped)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Headline quality metrics for one schedule under one traffic mix."""

    mean_delay_s: float
    jitter_s: float
    loss_prob: float
    percentile_s: float
    percentile_q: float
    capacity: float
    overflow_prob: float
    pmf: DelayPmf | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "mean_delay_s": self.mean_delay_s,
            "jitter_s": self.jitter_s,
            "loss_prob": self.loss_prob,
            "percentile_s": self.percentile_s,
            "percentile_q": self.percentile_q,
            "capacity": self.capacity,
            "overflow_prob": self.overflow_prob,
        }


def metrics(
    pmf: DelayPmf,
    link: LinkSpec,
    traffic: TrafficSpec,
    rtwt: RtwtSpec,
    quantile: float = 0.999,
    overflow_prob: float = float("nan"),
) -> MetricsReport:
    """Convert a slot-grid delay distribution into headline metrics."""
    slot = traffic.slot_time
    return MetricsReport(
        mean_delay_s=slot * pmf.mean_slots(),
        jitter_s=slot * pmf.std_slots(),
        loss_prob=packet_loss_probability(link),
        percentile_s=slot * pmf.percentile_slots(quantile),
        percentile_q=quantile,
        capacity=system_capacity(rtwt, traffic),
        overflow_prob=overflow_prob,
        pmf=pmf,
    )


def evaluate(
    traffic: TrafficSpec,
    link: LinkSpec,
    rtwt: RtwtSpec,
    buffer_packets: int = 20,
    quantile: float = 0.999,
    allow_coarse: bool = False,
    carry_full_vacation: bool = True,
    method: str = "cycle",
) -> MetricsReport:
    """End-to-end analytic evaluation of one schedule."""
    slotted = slotify(traffic, rtwt, buffer_packets, allow_coarse=allow_coarse)
    batches = batch_distribution(traffic, link)
    chain = build_chain(slotted, batches)
    stat = stationary(chain, method=method)
    pmf = delay_pmf(stat, batches, slotted, carry_full_vacation=carry_full_vacation)
    return metrics(
        pmf,
        link,
        traffic,
        rtwt,
        quantile=quantile,
        overflow_prob=overflow_probability(stat, batches),
    )
