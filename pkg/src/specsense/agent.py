"""Remote-site daemon: gated recording, daily archive upload, heartbeats.

A sweep is stored whole when any bin exceeds the site gate threshold;
otherwise only the minute manifest counter moves, preserving the AU
denominator. Raw data for a day is deleted only after its archive upload is
confirmed.
"""

from __future__ import annotations

import logging
import shutil
import tempfile
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .archive import archive_name, compress_dir
from .clock import UTC, Clock, ensure_utc
from .model import CalibrationTable, SiteParams, Sweep, apply_calibration
from .sweepio import RecordingWriter
from .transfer import TransferEndpoint, TransferError

logger = logging.getLogger(__name__)

DEFAULT_HEARTBEAT_INTERVAL_S = 300.0
DEFAULT_ARCHIVE_HOUR = 1
WRITE_RETRY_LIMIT = 3
WRITE_RETRY_BACKOFF_S = 2.0


def reach_marker_path(site_id: str) -> str:
    return f"hb/{site_id}/reach"


def collect_marker_path(site_id: str) -> str:
    return f"hb/{site_id}/collect"


def archive_remote_path(site_id: str, day: date) -> str:
    return f"{site_id}/{archive_name(site_id, day)}"


@dataclass(frozen=True)
class AgentConfig:
    site_id: str
    site_params: SiteParams
    data_dir: Path
    heartbeat_interval_s: float = DEFAULT_HEARTBEAT_INTERVAL_S
    archive_hour: int = DEFAULT_ARCHIVE_HOUR  # local hour-of-day for the daily job
    compression_level: int = 9
    calibration: Optional[CalibrationTable] = None

    def __post_init__(self):
        if self.heartbeat_interval_s <= 0:
            raise ValueError("heartbeat interval must be positive")
        if not 0 <= self.archive_hour <= 23:
            raise ValueError("archive_hour must be a local hour of day (0-23)")
        object.__setattr__(self, "data_dir", Path(self.data_dir))

    @property
    def gate_threshold_dbm(self) -> float:
        return self.site_params.gate_threshold_dbm


@dataclass
class ArchiveJobResult:
    day: date
    uploaded: bool
    remote_path: Optional[str] = None
    ratio: Optional[float] = None
    error: Optional[str] = None


class SiteAgent:
    """One recording site. Drive it from a scheduler (sim) or run() (wall clock)."""

    def __init__(self, config: AgentConfig, endpoint: TransferEndpoint, clock: Clock):
        self.config = config
        self.endpoint = endpoint
        self.clock = clock
        self.writer = RecordingWriter(config.data_dir, config.site_params)
        self.recording_halted = False
        self.started_at: Optional[datetime] = None
        self.last_progress_at: Optional[datetime] = None
        self.sweeps_processed = 0
        self.sweeps_stored = 0
        self.heartbeat_attempts = {"reach": 0, "collect": 0}

    # -- recording ---------------------------------------------------------

    def process_sweep(self, sweep: Sweep) -> None:
        if self.recording_halted:
            return
        if self.started_at is None:
            self.start()
        if self.config.calibration is not None:
            sweep = apply_calibration(sweep, self.config.calibration)
        stored = bool(np.any(sweep.powers_dbm > self.config.gate_threshold_dbm))
        for attempt in range(WRITE_RETRY_LIMIT):
            try:
                self.writer.add(sweep, stored=stored)
                break
            except OSError as exc:
                logger.warning("write failure (attempt %d): %s", attempt + 1, exc)
                if attempt + 1 == WRITE_RETRY_LIMIT:
                    logger.error("recording halted after %d write failures", WRITE_RETRY_LIMIT)
                    self.recording_halted = True
                    return
                self.clock.sleep(WRITE_RETRY_BACKOFF_S * (attempt + 1))
        self.sweeps_processed += 1
        if stored:
            self.sweeps_stored += 1
        self.last_progress_at = self.clock.now()

    def record_stream(self, source: Iterable[Sweep]) -> None:
        """Consume a sweep stream until it ends (or recording halts)."""
        for sweep in source:
            if self.recording_halted:
                break
            self.process_sweep(sweep)

    def start(self) -> None:
        if self.started_at is None:
            now = self.clock.now()
            self.started_at = now
            self.last_progress_at = now

    def stop(self) -> None:
        self.writer.close()

    # -- heartbeats ---------------------------------------------------------

    def recorder_live(self) -> bool:
        """Progress within the last two heartbeat intervals counts as alive."""
        if self.recording_halted:
            return False
        if self.last_progress_at is None:
            return False
        age = (self.clock.now() - self.last_progress_at).total_seconds()
        return age <= 2 * self.config.heartbeat_interval_s

    def heartbeat_tick(self) -> None:
        stamp = self.clock.now().isoformat().encode()
        self.heartbeat_attempts["reach"] += 1
        try:
            self.endpoint.put_bytes(stamp, reach_marker_path(self.config.site_id))
        except TransferError as exc:
            # absence of the marker is itself the signal; log and move on
            logger.info("reach heartbeat skipped: %s", exc)
        if self.recorder_live():
            self.heartbeat_attempts["collect"] += 1
            try:
                self.endpoint.put_bytes(stamp, collect_marker_path(self.config.site_id))
            except TransferError as exc:
                logger.info("collect heartbeat skipped: %s", exc)

    # -- daily archive job ---------------------------------------------------

    def pending_days(self) -> list[date]:
        """Local day directories strictly before the current UTC day."""
        today = self.clock.now().date()
        days = []
        if self.config.data_dir.exists():
            for child in sorted(self.config.data_dir.iterdir()):
                if child.is_dir() and len(child.name) == 8 and child.name.isdigit():
                    day = datetime.strptime(child.name, "%Y%m%d").date()
                    if day < today:
                        days.append(day)
        return days

    def daily_archive_job(self, day: date) -> ArchiveJobResult:
        """Compress one elapsed day, upload it, then delete the local copies.

        Never deletes without upload confirmation; on failure the raw data
        stays for the next cycle.
        """
        if day >= self.clock.now().date():
            raise ValueError(f"day {day} has not fully elapsed")
        day_end = datetime(day.year, day.month, day.day, tzinfo=UTC) + timedelta(days=1)
        self.writer.flush_through(day_end)
        day_dir = self.config.data_dir / day.strftime("%Y%m%d")
        if not day_dir.is_dir():
            return ArchiveJobResult(day=day, uploaded=False, error="no data for day")

        staging = Path(tempfile.mkdtemp(prefix="specsense-archive-"))
        archive_path = staging / archive_name(self.config.site_id, day)
        try:
            handle = compress_dir(
                day_dir,
                archive_path,
                site_id=self.config.site_id,
                day=day,
                level=self.config.compression_level,
            )
            remote = archive_remote_path(self.config.site_id, day)
            try:
                self.endpoint.put_file(handle.path, remote)
            except TransferError as exc:
                logger.warning("archive upload failed for %s %s: %s", self.config.site_id, day, exc)
                return ArchiveJobResult(day=day, uploaded=False, error=str(exc))
            # upload confirmed: drop raw day data and the local archive
            shutil.rmtree(day_dir)
            return ArchiveJobResult(
                day=day, uploaded=True, remote_path=remote, ratio=handle.ratio
            )
        finally:
            shutil.rmtree(staging, ignore_errors=True)

    def daily_tick(self) -> list[ArchiveJobResult]:
        """Archive every fully elapsed, still-local day (retries stragglers)."""
        results = []
        for day in self.pending_days():
            try:
                results.append(self.daily_archive_job(day))
            except OSError as exc:
                logger.error("daily archive job failed for %s: %s", day, exc)
                results.append(ArchiveJobResult(day=day, uploaded=False, error=str(exc)))
        return results

    def next_daily_run(self, now: datetime) -> datetime:
        """Next instant of the configured local archive hour, as UTC."""
        tz = self.config.site_params.tzinfo()
        local = ensure_utc(now).astimezone(tz)
        candidate = local.replace(hour=self.config.archive_hour, minute=0, second=0, microsecond=0)
        if candidate <= local:
            candidate += timedelta(days=1)
        return ensure_utc(candidate)

    def schedule_on(self, scheduler) -> None:
        """Register the heartbeat timer and the daily archive job."""
        self.start()
        scheduler.every(
            self.config.heartbeat_interval_s,
            self.heartbeat_tick,
            first_at=self.clock.now(),
            name=f"{self.config.site_id}-heartbeat",
        )

        def run_daily() -> None:
            self.daily_tick()
            scheduler.at(
                self.next_daily_run(self.clock.now()),
                run_daily,
                name=f"{self.config.site_id}-daily-archive",
            )

        scheduler.at(
            self.next_daily_run(self.clock.now()),
            run_daily,
            name=f"{self.config.site_id}-daily-archive",
        )
