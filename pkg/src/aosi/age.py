"""Receiver-side AoI/AoSI bookkeeping and exact per-period areas.

Within a period the AoSI of a source is piecewise linear: it grows with slope
equal to the importance of the latest received packet and drops when a new
reconstruction arrives.  The area under it over one period splits into a
transmission trapezoid (before delivery, old importance) and a waiting
trapezoid (after delivery, new importance).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np


class StaleDeliveryError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class SourceServerView:
    """What the server knows about one source at the start of a period."""

    last_gen_time_s: float | None = None
    importance: float = 1.0
    aoi_at_period_start_s: float = 0.0
    latest_received_gen_index: int | None = None

    @property
    def aosi_at_period_start(self) -> float:
        return self.aoi_at_period_start_s * self.importance


@dataclass(frozen=True, slots=True)
class PeriodAreas:
    q_area: float
    s_area: float = 0.0
    received_gen_index: int | None = None


class Reception(NamedTuple):
    gen_time_s: float
    gen_index: int
    similarity: float


def initial_view(importance: float = 1.0) -> SourceServerView:
    return SourceServerView(importance=importance)


def aosi_at(view: SourceServerView, t: float, t_n: float) -> float:
    """AoSI at time ``t`` in a period starting at ``t_n`` with no delivery yet."""
    return (view.aoi_at_period_start_s + (t - t_n)) * view.importance


def period_areas_success(
    view: SourceServerView,
    latency_s: float,
    tau: float,
    xi_new: float,
    new_gen_time: float,
    t_n: float,
    gen_index: int | None = None,
) -> PeriodAreas:
    if not 0 < latency_s <= tau:
        raise ValueError(f"latency {latency_s} not in (0, tau={tau}]; use the failure branch")
    if not 0.0 <= xi_new <= 1.0:
        raise ValueError(f"similarity {xi_new} outside [0, 1]")
    aoi0 = view.aoi_at_period_start_s
    # Left limit at delivery: old packet still in force.
    q = 0.5 * latency_s * (aoi0 + aoi0 + latency_s) * view.importance
    # Right limit at delivery: age of the packet just received.
    aoi_after = t_n + latency_s - new_gen_time
    wait = tau - latency_s
    s = 0.5 * wait * (aoi_after + aoi_after + wait) * (1.0 - xi_new)
    return PeriodAreas(q, s, gen_index)


def period_areas_failure(view: SourceServerView, tau: float) -> PeriodAreas:
    aoi0 = view.aoi_at_period_start_s
    return PeriodAreas(0.5 * tau * (aoi0 + aoi0 + tau) * view.importance, 0.0, None)


def period_average(areas: PeriodAreas, tau: float, scheduled: bool) -> float:
    if scheduled and areas.received_gen_index is not None:
        return (areas.q_area + areas.s_area) / tau
    return areas.q_area / tau


def advance(
    view: SourceServerView,
    tau: float,
    t_next: float,
    received: Reception | None = None,
) -> SourceServerView:
    """View at the start of the next period (``t_next``)."""
    if received is None:
        return replace(view, aoi_at_period_start_s=view.aoi_at_period_start_s + tau)
    if view.last_gen_time_s is not None and received.gen_time_s < view.last_gen_time_s:
        raise StaleDeliveryError(
            f"delivered packet generated at {received.gen_time_s} is older than "
            f"the held one ({view.last_gen_time_s})"
        )
    return SourceServerView(
        last_gen_time_s=received.gen_time_s,
        importance=1.0 - received.similarity,
        aoi_at_period_start_s=t_next - received.gen_time_s,
        latest_received_gen_index=received.gen_index,
    )


def long_term_average(per_period: Iterable[float] | np.ndarray) -> float:
    """Mean of per-(period, source) averages; accepts any nesting."""
    values = np.asarray(per_period, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("long-term average of an empty sequence")
    return float(values.mean())


class RunningAverage:
    """Streaming long-term average fed one period (all sources) at a time."""

    def __init__(self):
        self.total = 0.0
        self.count = 0

    def add(self, period_averages) -> None:
        self.total += sum(period_averages)
        self.count += len(period_averages)

    @property
    def value(self) -> float:
        if self.count == 0:
            raise ValueError("long-term average of an empty sequence")
        return self.total / self.count
