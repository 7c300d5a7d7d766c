"""Series aggregations behind the six dashboard graph types.

All aggregations exclude incomplete hours. Storage is UTC throughout; the
hour-of-day, heatmap and weekly views bucket by the site's local clock.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence
from zoneinfo import ZoneInfo

from .clock import iso_hour
from .model import AURecord

GRAPH_TYPES = (
    "airtime-utilization",
    "hour-of-day",
    "heatmap-mean",
    "heatmap-max",
    "min-max-mean",
    "weekly-mean",
)

_WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass(frozen=True)
class SeriesResult:
    """Uniform channel-by-column matrix; the column axis depends on the graph type."""

    graph_type: str
    channels: tuple[tuple[float, float], ...]
    columns: tuple[str, ...]
    values: tuple[tuple[Optional[float], ...], ...]

    @property
    def empty(self) -> bool:
        return not self.channels

    def to_dict(self) -> dict:
        return {
            "graph_type": self.graph_type,
            "channels": [
                {"start_hz": start, "stop_hz": stop} for start, stop in self.channels
            ],
            "columns": list(self.columns),
            "values": [list(row) for row in self.values],
            "empty": self.empty,
        }


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs)


def aggregate_series(
    records: Sequence[AURecord], graph_type: str, site_timezone: str
) -> SeriesResult:
    """Aggregate AU records into the requested graph's series.

    Records with complete=False never influence any value; a selection that is
    empty after that exclusion yields an empty series rather than an error.
    """
    if graph_type not in GRAPH_TYPES:
        raise ValueError(f"unknown graph type {graph_type!r}; expected one of {GRAPH_TYPES}")
    tz = ZoneInfo(site_timezone)

    usable = [r for r in records if r.complete and r.au_percent is not None]
    if not usable:
        return SeriesResult(graph_type, (), (), ())

    channels = sorted({(r.channel_start_hz, r.channel_stop_hz) for r in usable})
    ch_index = {ch: i for i, ch in enumerate(channels)}

    if graph_type == "airtime-utilization":
        hours = sorted({r.hour_start for r in usable})
        col_index = {h: j for j, h in enumerate(hours)}
        grid: list[list[Optional[float]]] = [[None] * len(hours) for _ in channels]
        for r in usable:
            grid[ch_index[(r.channel_start_hz, r.channel_stop_hz)]][col_index[r.hour_start]] = r.au_percent
        columns = tuple(iso_hour(h) for h in hours)

    elif graph_type in ("hour-of-day", "heatmap-mean", "heatmap-max"):
        buckets: dict[tuple[int, int], list[float]] = defaultdict(list)
        for r in usable:
            local_hour = r.hour_start.astimezone(tz).hour
            buckets[(ch_index[(r.channel_start_hz, r.channel_stop_hz)], local_hour)].append(r.au_percent)
        reducer = max if graph_type == "heatmap-max" else _mean
        grid = [[None] * 24 for _ in channels]
        for (ci, h), values in buckets.items():
            grid[ci][h] = reducer(values)
        columns = tuple(f"{h:02d}" for h in range(24))

    elif graph_type == "min-max-mean":
        per_channel: dict[int, list[float]] = defaultdict(list)
        for r in usable:
            per_channel[ch_index[(r.channel_start_hz, r.channel_stop_hz)]].append(r.au_percent)
        grid = []
        for ci in range(len(channels)):
            values = per_channel[ci]
            grid.append([min(values), max(values), _mean(values)])
        columns = ("min", "max", "mean")

    else:  # weekly-mean
        buckets = defaultdict(list)
        for r in usable:
            weekday = r.hour_start.astimezone(tz).weekday()
            buckets[(ch_index[(r.channel_start_hz, r.channel_stop_hz)], weekday)].append(r.au_percent)
        grid = [[None] * 7 for _ in channels]
        for (ci, wd), values in buckets.items():
            grid[ci][wd] = _mean(values)
        columns = _WEEKDAYS

    return SeriesResult(
        graph_type=graph_type,
        channels=tuple(channels),
        columns=tuple(columns),
        values=tuple(tuple(row) for row in grid),
    )
