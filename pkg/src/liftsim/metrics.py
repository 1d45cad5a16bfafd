"""Episode metrics over the passenger ledger."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

REPORT_FIELDS = ("num_events", "people_moved", "mean_total_time_s", "median_total_time_s",
                 "max_total_time_s", "sum_total_time_s", "truncated")


@dataclass
class MetricsReport:
    num_events: int = 0
    people_moved: int = 0
    mean_total_time_s: float = 0.0
    median_total_time_s: float = 0.0
    max_total_time_s: float = 0.0
    sum_total_time_s: float = 0.0
    truncated: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(passengers: Iterable, num_events: Optional[int] = None) -> MetricsReport:
    """Aggregate delivery minus call time over delivered passengers.

    ``num_events`` defaults to the ledger size; pass the tape length when some
    arrivals were never drained (truncated run).
    """
    passengers = list(passengers)
    if num_events is None:
        num_events = len(passengers)
    # sorted so the sum is independent of ledger order
    totals = sorted(p.delivery_time_s - p.call_time_s
                    for p in passengers if p.delivery_time_s is not None)
    moved = len(totals)
    report = MetricsReport(num_events=num_events, people_moved=moved,
                           truncated=moved < num_events)
    if totals:
        s = sum(totals)
        report.sum_total_time_s = s
        report.mean_total_time_s = s / moved
        report.median_total_time_s = statistics.median(totals)
        report.max_total_time_s = totals[-1]
    return report


def baseline_threshold(baseline_sum_s: float, n_elevators: int) -> float:
    """Target for an n-car building: the single-car baseline split evenly."""
    if n_elevators < 1:
        raise ValueError(f"need at least one elevator, got {n_elevators}")
    return baseline_sum_s / n_elevators
