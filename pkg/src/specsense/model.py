"""Domain types and measurement math for channel occupancy and airtime utilization.

All operations here are pure functions over immutable values; arrays inside
the dataclasses are marked read-only so instances can be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .clock import ensure_utc, floor_hour

DEFAULT_CHANNEL_WIDTH_HZ = 5e6
DEFAULT_REF_BANDWIDTH_HZ = 20e6
DEFAULT_MIN_COVERAGE_FRACTION = 0.9


class GateViolationError(ValueError):
    """Site gate threshold sits above the analysis threshold; AU would be biased low."""


def _readonly_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sweep:
    """One scan pass: a UTC timestamp plus per-bin (frequency, power) readings."""

    site_id: str
    start_time: datetime
    freqs_hz: np.ndarray
    powers_dbm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_time", ensure_utc(self.start_time))
        freqs = _readonly_f64(self.freqs_hz)
        powers = _readonly_f64(self.powers_dbm)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "powers_dbm", powers)
        if freqs.ndim != 1 or powers.ndim != 1 or len(freqs) != len(powers):
            raise ValueError("freqs and powers must be 1-D arrays of equal length")
        if len(freqs) == 0:
            raise ValueError("sweep must contain at least one bin")
        if not np.all(np.isfinite(powers)):
            raise ValueError("power values must be finite")
        diffs = np.diff(freqs)
        if len(diffs):
            if np.any(diffs <= 0):
                raise ValueError("bin frequencies must be strictly ascending")
            # spacing uniform within one sweep (small float tolerance)
            if not np.allclose(diffs, diffs[0], rtol=1e-6, atol=1e-3):
                raise ValueError("bin spacing must be uniform within one sweep")

    @property
    def n_bins(self) -> int:
        return len(self.freqs_hz)

    @property
    def bin_spacing_hz(self) -> float:
        if self.n_bins < 2:
            return 0.0
        return float(self.freqs_hz[1] - self.freqs_hz[0])


@dataclass(frozen=True)
class SiteParams:
    """Hourly capture metadata written alongside the recorded sweeps."""

    site_id: str
    freq_start_hz: float
    freq_stop_hz: float
    rbw_hz: float
    sweep_time_s: float
    latitude: float
    longitude: float
    antenna_type: str
    lna_type: str
    timezone: str
    gate_threshold_dbm: float

    def __post_init__(self):
        if not self.freq_start_hz < self.freq_stop_hz:
            raise ValueError("freq_start must be below freq_stop")
        if self.rbw_hz <= 0:
            raise ValueError("rbw must be positive")
        if self.sweep_time_s <= 0:
            raise ValueError("sweep_time must be positive")
        try:
            ZoneInfo(self.timezone)
        except Exception as exc:
            raise ValueError(f"unresolvable timezone {self.timezone!r}") from exc

    def tzinfo(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)


@dataclass(frozen=True)
class ChannelGrid:
    """Contiguous, non-overlapping channels covering a monitored span."""

    channels: tuple[tuple[float, float], ...]
    channel_width_hz: float = DEFAULT_CHANNEL_WIDTH_HZ

    def __post_init__(self):
        if not self.channels:
            raise ValueError("grid must contain at least one channel")
        prev_stop = None
        for i, (start, stop) in enumerate(self.channels):
            if not start < stop:
                raise ValueError(f"channel {i} has non-positive width")
            if prev_stop is not None and start != prev_stop:
                raise ValueError("channels must be contiguous and non-overlapping")
            if i < len(self.channels) - 1 and not math.isclose(
                stop - start, self.channel_width_hz, rel_tol=1e-9
            ):
                raise ValueError("only the last channel may deviate from channel_width")
            prev_stop = stop

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def span(self) -> tuple[float, float]:
        return self.channels[0][0], self.channels[-1][1]

    def starts(self) -> np.ndarray:
        return np.array([c[0] for c in self.channels], dtype=np.float64)

    def stops(self) -> np.ndarray:
        return np.array([c[1] for c in self.channels], dtype=np.float64)


def build_channel_grid(
    freq_start_hz: float, freq_stop_hz: float, width_hz: float = DEFAULT_CHANNEL_WIDTH_HZ
) -> ChannelGrid:
    """Grid anchored at freq_start; the last channel is truncated at freq_stop."""
    if not freq_start_hz < freq_stop_hz:
        raise ValueError("freq_start must be below freq_stop")
    if width_hz <= 0:
        raise ValueError("channel width must be positive")
    channels = []
    k = 0
    while True:
        start = freq_start_hz + k * width_hz
        if start >= freq_stop_hz:
            break
        stop = min(freq_start_hz + (k + 1) * width_hz, freq_stop_hz)
        channels.append((start, stop))
        k += 1
    return ChannelGrid(tuple(channels), channel_width_hz=width_hz)


@dataclass(frozen=True)
class ThresholdSpec:
    """Analysis power threshold stated against a reference bandwidth (dBm/20 MHz)."""

    ref_power_dbm: float
    ref_bandwidth_hz: float = DEFAULT_REF_BANDWIDTH_HZ

    def __post_init__(self):
        if self.ref_bandwidth_hz <= 0:
            raise ValueError("reference bandwidth must be positive")

    def per_bin(self, bin_bandwidth_hz: float) -> float:
        return scale_threshold(self, bin_bandwidth_hz)


def scale_threshold(spec: ThresholdSpec, bin_bandwidth_hz: float) -> float:
    """Rescale the reference threshold to a bin bandwidth, power-density style.

    T_bin = T_ref + 10*log10(bin_bw / ref_bw), so narrower bins get a
    proportionally lower absolute threshold.
    """
    if bin_bandwidth_hz <= 0:
        raise ValueError("bin bandwidth must be positive")
    return spec.ref_power_dbm + 10.0 * math.log10(bin_bandwidth_hz / spec.ref_bandwidth_hz)


@dataclass(frozen=True)
class CalibrationTable:
    """Frequency-dependent gain offsets (cable loss compensation anchors)."""

    freqs_hz: np.ndarray
    offsets_db: np.ndarray

    def __post_init__(self):
        freqs = _readonly_f64(self.freqs_hz)
        offsets = _readonly_f64(self.offsets_db)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "offsets_db", offsets)
        if freqs.ndim != 1 or len(freqs) != len(offsets):
            raise ValueError("anchor arrays must be 1-D and of equal length")
        if len(freqs) == 0:
            raise ValueError("calibration table must have at least one anchor")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("anchor frequencies must be strictly ascending")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be finite")

    def offset_at(self, freqs_hz) -> np.ndarray:
        # np.interp clamps to the first/last anchor outside the table span
        return np.interp(np.asarray(freqs_hz, dtype=np.float64), self.freqs_hz, self.offsets_db)


def apply_calibration(sweep: Sweep, table: CalibrationTable) -> Sweep:
    """Add the interpolated offset to every bin; timestamps and frequencies unchanged."""
    offsets = table.offset_at(sweep.freqs_hz)
    return Sweep(
        site_id=sweep.site_id,
        start_time=sweep.start_time,
        freqs_hz=sweep.freqs_hz,
        powers_dbm=sweep.powers_dbm + offsets,
    )


def sweep_occupancy(sweep: Sweep, grid: ChannelGrid, per_bin_threshold_dbm: float) -> np.ndarray:
    """Binary per-channel occupancy: true iff any bin in [start, stop) exceeds the threshold.

    "Exceeds" is strict, so a bin exactly at the threshold does not occupy.
    """
    freqs = sweep.freqs_hz
    hot = sweep.powers_dbm > per_bin_threshold_dbm
    occupied = np.zeros(len(grid), dtype=bool)
    for c, (start, stop) in enumerate(grid.channels):
        lo = int(np.searchsorted(freqs, start, side="left"))
        hi = int(np.searchsorted(freqs, stop, side="left"))
        if hi > lo:
            occupied[c] = bool(hot[lo:hi].any())
    return occupied


@dataclass(frozen=True)
class MinuteManifest:
    """Per-minute total vs stored sweep counts; keeps the AU denominator under gating."""

    minute_start: datetime
    total_sweeps: int
    stored_sweeps: int

    def __post_init__(self):
        object.__setattr__(self, "minute_start", ensure_utc(self.minute_start))
        if self.total_sweeps < 0:
            raise ValueError("total_sweeps must be non-negative")
        if not 0 <= self.stored_sweeps <= self.total_sweeps:
            raise ValueError("stored_sweeps must lie in [0, total_sweeps]")


@dataclass(frozen=True)
class AURecord:
    """Airtime utilization of one (site, channel, hour, threshold) cell."""

    site_id: str
    channel_start_hz: float
    channel_stop_hz: float
    hour_start: datetime
    au_percent: Optional[float]
    occupied_sweeps: int
    total_sweeps: int
    threshold_ref_dbm: float
    complete: bool

    def __post_init__(self):
        object.__setattr__(self, "hour_start", ensure_utc(self.hour_start))
        if self.hour_start != floor_hour(self.hour_start):
            raise ValueError("hour_start must be truncated to the hour")
        if not 0 <= self.occupied_sweeps <= self.total_sweeps:
            raise ValueError("occupied_sweeps must lie in [0, total_sweeps]")
        if self.total_sweeps > 0:
            expected = 100.0 * self.occupied_sweeps / self.total_sweeps
            if self.au_percent is None or self.au_percent != expected:
                raise ValueError("au_percent must equal 100*occupied/total")
            if not 0.0 <= self.au_percent <= 100.0:
                raise ValueError("au_percent out of [0, 100]")
        elif self.au_percent is not None:
            raise ValueError("au_percent must be null when no sweeps were observed")


def compute_au(
    occupancies: Sequence[tuple[datetime, np.ndarray]],
    manifests: Sequence[MinuteManifest],
    hour: datetime,
    grid: ChannelGrid,
    threshold: ThresholdSpec,
    *,
    site_id: str,
    sweep_time_s: float,
    rbw_hz: float,
    gate_threshold_dbm: Optional[float] = None,
    min_coverage_fraction: float = DEFAULT_MIN_COVERAGE_FRACTION,
) -> list[AURecord]:
    """Per-channel AU for one clock hour from stored-sweep occupancies plus manifests.

    Suppressed (gated-out) sweeps count as unoccupied, which is only valid
    when the gate sits at or below the analysis threshold; a violation raises
    GateViolationError rather than producing a silently biased result.
    """
    hour = floor_hour(hour)
    hour_end = hour + timedelta(hours=1)
    if sweep_time_s <= 0:
        raise ValueError("sweep_time must be positive")

    if gate_threshold_dbm is not None:
        per_bin = threshold.per_bin(rbw_hz)
        if gate_threshold_dbm > per_bin:
            raise GateViolationError(
                f"gate threshold {gate_threshold_dbm:.3f} dBm exceeds analysis "
                f"threshold {per_bin:.3f} dBm/bin; AU denominator would be biased"
            )

    for m in manifests:
        if not hour <= m.minute_start < hour_end:
            raise ValueError(f"manifest minute {m.minute_start} outside hour {hour}")

    total = sum(m.total_sweeps for m in manifests)
    stored = sum(m.stored_sweeps for m in manifests)
    if len(occupancies) != stored:
        raise ValueError(
            f"occupancy stream length {len(occupancies)} does not match "
            f"manifest stored count {stored}"
        )

    occupied = np.zeros(len(grid), dtype=np.int64)
    for ts, occ in occupancies:
        if not hour <= ensure_utc(ts) < hour_end:
            raise ValueError(f"occupancy timestamp {ts} outside hour {hour}")
        occ = np.asarray(occ, dtype=bool)
        if occ.shape != (len(grid),):
            raise ValueError("occupancy vector length must match channel count")
        occupied += occ

    expected = 3600.0 / sweep_time_s
    complete = total > 0 and total >= min_coverage_fraction * expected

    records = []
    for c, (start, stop) in enumerate(grid.channels):
        n_occ = int(occupied[c])
        au = 100.0 * n_occ / total if total > 0 else None
        records.append(
            AURecord(
                site_id=site_id,
                channel_start_hz=start,
                channel_stop_hz=stop,
                hour_start=hour,
                au_percent=au,
                occupied_sweeps=n_occ,
                total_sweeps=total,
                threshold_ref_dbm=threshold.ref_power_dbm,
                complete=complete,
            )
        )
    return records
