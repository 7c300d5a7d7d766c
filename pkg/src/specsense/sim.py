"""Deterministic, seedable sweep source standing in for the scanner hardware.

Band activity is sampled per sweep through a counter-based hash of
(seed, band, sweep epoch), so a run is reproducible from its seed alone and
the expected occupancy of a channel is analytic. Powers combine in the linear
(mW) domain: an active band therefore always lands at or slightly above its
configured level.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union
from zoneinfo import ZoneInfo

import numpy as np
from scipy import stats

from .clock import ensure_utc, epoch_us, floor_hour
from .model import Sweep
from .sweepio import iter_recorded_sweeps, quantize_powers

# an inactive bin is overwhelmingly unlikely to reach 6 sigma above the floor
NOISE_CEILING_SIGMA = 6.0


class UnsupportedConfigError(ValueError):
    """The analytic AU oracle does not cover this band layout; count empirically."""


def _unit_hash(seed: int, band_index: int, t_us: int) -> float:
    """Uniform [0,1) from a keyed 64-bit hash; stable across platforms and runs."""
    digest = hashlib.blake2b(
        struct.pack("<qqq", seed, band_index, t_us), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") / 2.0**64


@dataclass(frozen=True)
class BandProfile:
    """A flat-topped emitter with a per-local-hour activity probability table."""

    center_hz: float
    bandwidth_hz: float
    active_power_dbm: float
    activity: tuple[float, ...]

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("band bandwidth must be positive")
        act = self.activity
        if isinstance(act, (int, float)):
            act = (float(act),) * 24
        act = tuple(float(p) for p in act)
        if len(act) != 24:
            raise ValueError("activity table must have 24 per-hour entries")
        if any(not 0.0 <= p <= 1.0 for p in act):
            raise ValueError("activity probabilities must lie in [0, 1]")
        object.__setattr__(self, "activity", act)

    @property
    def low_hz(self) -> float:
        return self.center_hz - self.bandwidth_hz / 2.0

    @property
    def high_hz(self) -> float:
        return self.center_hz + self.bandwidth_hz / 2.0


@dataclass(frozen=True)
class Environment:
    """Immutable description of one site's simulated RF surroundings."""

    site_id: str
    freq_start_hz: float
    freq_stop_hz: float
    rbw_hz: float
    noise_floor_dbm: float
    noise_sigma_db: float
    bands: tuple[BandProfile, ...]
    seed: int
    sweep_time_s: float = 1.0
    timezone: str = "UTC"

    def __post_init__(self):
        if not self.freq_start_hz < self.freq_stop_hz:
            raise ValueError("freq_start must be below freq_stop")
        if self.rbw_hz <= 0:
            raise ValueError("rbw must be positive")
        if self.noise_sigma_db < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.sweep_time_s <= 0:
            raise ValueError("sweep_time must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "bands", tuple(self.bands))
        for band in self.bands:
            if band.low_hz < self.freq_start_hz or band.high_hz > self.freq_stop_hz:
                raise ValueError(
                    f"band centered at {band.center_hz} Hz extends outside the span"
                )
        ZoneInfo(self.timezone)  # resolvable or raises

    def bin_freqs(self) -> np.ndarray:
        n = int(round((self.freq_stop_hz - self.freq_start_hz) / self.rbw_hz))
        n = max(n, 1)
        return self.freq_start_hz + np.arange(n, dtype=np.float64) * self.rbw_hz

    def noise_ceiling_dbm(self) -> float:
        return self.noise_floor_dbm + NOISE_CEILING_SIGMA * self.noise_sigma_db

    def tzinfo(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    def local_hour(self, t: datetime) -> int:
        return ensure_utc(t).astimezone(self.tzinfo()).hour


def band_active(env: Environment, band_index: int, t: datetime) -> bool:
    band = env.bands[band_index]
    p = band.activity[env.local_hour(t)]
    return _unit_hash(env.seed, band_index, epoch_us(t)) < p


def generate_sweep(env: Environment, t: datetime) -> Sweep:
    """Pure function of (env, t): identical arguments yield identical sweeps."""
    t = ensure_utc(t)
    freqs = env.bin_freqs()
    t_us = epoch_us(t)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([env.seed, t_us])))
    if env.noise_sigma_db > 0:
        noise = env.noise_floor_dbm + rng.normal(0.0, env.noise_sigma_db, len(freqs))
    else:
        noise = np.full(len(freqs), env.noise_floor_dbm, dtype=np.float64)

    linear = np.power(10.0, noise / 10.0)
    for i, band in enumerate(env.bands):
        if band_active(env, i, t):
            mask = (freqs >= band.low_hz) & (freqs < band.high_hz)
            linear[mask] += 10.0 ** (band.active_power_dbm / 10.0)
    powers = 10.0 * np.log10(linear)

    return Sweep(
        site_id=env.site_id,
        start_time=t,
        freqs_hz=freqs,
        powers_dbm=quantize_powers(powers),
    )


def sweep_times(
    env: Environment,
    start: datetime,
    end: datetime,
    anchor: Optional[datetime] = None,
) -> Iterator[datetime]:
    """Sweep start instants in [start, end) on the cadence grid anchored at `anchor`.

    Without an anchor the grid starts at `start`. Passing a fixed anchor keeps
    the cadence stable across piecewise [start, end) windows.
    """
    start = ensure_utc(start)
    end = ensure_utc(end)
    anchor = ensure_utc(anchor) if anchor is not None else start
    step_us = int(round(env.sweep_time_s * 1e6))
    offset_us = (start - anchor) // timedelta(microseconds=1)
    k = max(0, -(-offset_us // step_us))  # ceil division
    t = anchor + timedelta(microseconds=k * step_us)
    step = timedelta(microseconds=step_us)
    while t < end:
        yield t
        t += step


def generate_sweeps(
    env: Environment,
    start: datetime,
    end: datetime,
    anchor: Optional[datetime] = None,
) -> Iterator[Sweep]:
    for t in sweep_times(env, start, end, anchor=anchor):
        yield generate_sweep(env, t)


def expected_au(
    env: Environment,
    channel: tuple[float, float],
    hour: datetime,
    per_bin_threshold_dbm: float,
) -> float:
    """Analytic expected AU percent for one channel over one UTC hour.

    Covers the simple layouts only: at most one band lighting the channel,
    with the threshold strictly between band power and the noise ceiling.
    Anything else raises UnsupportedConfigError; fall back to empirical
    counting there.
    """
    hour = floor_hour(hour)
    ch_start, ch_stop = channel
    freqs = env.bin_freqs()
    in_channel = (freqs >= ch_start) & (freqs < ch_stop)

    if per_bin_threshold_dbm <= env.noise_ceiling_dbm():
        raise UnsupportedConfigError(
            "threshold straddles the noise distribution; expected AU is not analytic"
        )

    lighting = []
    for band in env.bands:
        band_bins = (freqs >= band.low_hz) & (freqs < band.high_hz)
        if np.any(band_bins & in_channel):
            lighting.append(band)
    if len(lighting) > 1:
        raise UnsupportedConfigError("multiple bands overlap the channel")
    if not lighting:
        return 0.0

    band = lighting[0]
    if band.active_power_dbm <= per_bin_threshold_dbm:
        raise UnsupportedConfigError("band power does not clear the threshold")

    # activity is piecewise constant per local hour; average over the UTC hour
    # minute by minute (exact for whole-minute zone offsets)
    tz = env.tzinfo()
    probs = [
        band.activity[(hour + timedelta(minutes=m)).astimezone(tz).hour] for m in range(60)
    ]
    return 100.0 * sum(probs) / len(probs)


def binomial_au_interval(
    expected_percent: float, n_sweeps: int, confidence: float = 0.999
) -> tuple[float, float]:
    """AU percent interval containing the measurement with the given probability."""
    if n_sweeps <= 0:
        raise ValueError("n_sweeps must be positive")
    p = expected_percent / 100.0
    lo, hi = stats.binom.interval(confidence, n_sweeps, p)
    return 100.0 * lo / n_sweeps, 100.0 * hi / n_sweeps


def replay_source(
    directory: Union[str, Path], site_id: str = ""
) -> Iterator[Sweep]:
    """Re-read sweeps recorded in the site-agent layout, in timestamp order."""
    return iter_recorded_sweeps(Path(directory), site_id=site_id)
