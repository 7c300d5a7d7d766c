"""Central daily ingest: fetch archive, analyze, persist, rotate to long-term.

Each (site, day) is one atomic unit: AU rows are replaced in a single
transaction and the working directory never outlives a successful run.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Callable, Optional

from . import sweepio
from .archive import ArchiveIntegrityError, archive_name, decompress
from .clock import UTC, Clock
from .db import SiteInfo, Store
from .model import (
    AURecord,
    DEFAULT_MIN_COVERAGE_FRACTION,
    ThresholdSpec,
    build_channel_grid,
    compute_au,
    sweep_occupancy,
)

logger = logging.getLogger(__name__)

# alert_sink(site_id, event, message) — wired to the ops notifier when present
AlertSink = Callable[[str, str, str], None]


@dataclass(frozen=True)
class CollectorConfig:
    inbox_root: Path
    work_root: Path
    long_term_root: Path
    quarantine_root: Path
    min_coverage_fraction: float = DEFAULT_MIN_COVERAGE_FRACTION

    def __post_init__(self):
        for name in ("inbox_root", "work_root", "long_term_root", "quarantine_root"):
            object.__setattr__(self, name, Path(getattr(self, name)))


@dataclass
class IngestReport:
    site_id: str
    day: date
    status: str  # ingested | no-archive | quarantined | failed
    rows: int = 0
    hours: int = 0
    channels: int = 0
    long_term_path: Optional[Path] = None
    message: str = ""


class Collector:
    def __init__(
        self,
        store: Store,
        config: CollectorConfig,
        clock: Clock,
        alert_sink: Optional[AlertSink] = None,
    ):
        self.store = store
        self.config = config
        self.clock = clock
        self.alert_sink = alert_sink

    # -- pipeline ------------------------------------------------------------

    def inbox_archive(self, site_id: str, day: date) -> Path:
        return self.config.inbox_root / site_id / archive_name(site_id, day)

    def ingest_daily(self, site_id: str, day: date) -> IngestReport:
        """decompress -> analyze -> persist -> rotate; idempotent per (site, day)."""
        site = self.store.get_site(site_id)
        if site is None:
            return IngestReport(site_id, day, "failed", message="site not registered")

        archive_path = self.inbox_archive(site_id, day)
        if not archive_path.is_file():
            return IngestReport(site_id, day, "no-archive", message="nothing in inbox")

        work_dir = self.config.work_root / site_id / day_tag(day)
        if work_dir.exists():
            shutil.rmtree(work_dir)
        try:
            decompress(archive_path, work_dir)
        except ArchiveIntegrityError as exc:
            quarantined = self._quarantine(archive_path, site_id)
            self._alert(site_id, "archive_corrupt", f"{exc}; quarantined at {quarantined}")
            return IngestReport(site_id, day, "quarantined", message=str(exc))

        try:
            records = self.analyze_day(site, work_dir, day)
            self.store.replace_day(site_id, datetime(day.year, day.month, day.day, tzinfo=UTC), records)
        except Exception as exc:
            logger.error("analysis failed for %s %s: %s", site_id, day, exc)
            shutil.rmtree(work_dir, ignore_errors=True)
            return IngestReport(site_id, day, "failed", message=str(exc))

        hours = len({r.hour_start for r in records})
        channels = len({r.channel_start_hz for r in records})

        report = IngestReport(
            site_id, day, "ingested", rows=len(records), hours=hours, channels=channels
        )
        try:
            report.long_term_path = self.move_to_long_term(archive_path, site_id)
        except OSError as exc:
            # rows are already committed; the archive stays in the inbox for retry
            self._alert(site_id, "long_term_failure", str(exc))
            report.message = f"long-term rotation failed: {exc}"
        shutil.rmtree(work_dir, ignore_errors=True)
        return report

    def analyze_day(self, site: SiteInfo, day_dir: Path, day: date) -> list[AURecord]:
        """Per-hour, per-channel AU over the extracted day directory."""
        threshold = ThresholdSpec(site.threshold_ref_dbm, site.ref_bandwidth_hz)

        by_hour: dict[datetime, list[Path]] = {}
        for manifest_path in sweepio.manifest_paths(day_dir):
            minute = sweepio.minute_start_of(manifest_path)
            hour = minute.replace(minute=0)
            by_hour.setdefault(hour, []).append(manifest_path)

        records: list[AURecord] = []
        for hour in sorted(by_hour):
            params_path = day_dir / f"{hour.strftime('%H')}{sweepio.PARAMS_SUFFIX}"
            params = sweepio.read_params(params_path)
            grid = build_channel_grid(
                params.freq_start_hz, params.freq_stop_hz, site.channel_width_hz
            )
            per_bin = threshold.per_bin(params.rbw_hz)

            manifests = []
            occupancies = []
            for manifest_path in sorted(by_hour[hour]):
                minute = sweepio.minute_start_of(manifest_path)
                manifests.append(sweepio.read_manifest(manifest_path, minute))
                sweep_path = manifest_path.parent / (manifest_path.name[:4] + sweepio.SWEEP_SUFFIX)
                for sweep in sweepio.read_minute_file(sweep_path, site_id=site.site_id):
                    occupancies.append((sweep.start_time, sweep_occupancy(sweep, grid, per_bin)))

            records.extend(
                compute_au(
                    occupancies,
                    manifests,
                    hour,
                    grid,
                    threshold,
                    site_id=site.site_id,
                    sweep_time_s=params.sweep_time_s,
                    rbw_hz=params.rbw_hz,
                    gate_threshold_dbm=params.gate_threshold_dbm,
                    min_coverage_fraction=self.config.min_coverage_fraction,
                )
            )
        return records

    def move_to_long_term(self, archive_path: Path, site_id: str) -> Path:
        """Rotate the compressed archive into the per-site long-term folder."""
        dest_dir = self.config.long_term_root / site_id
        dest_dir.mkdir(parents=True, exist_ok=True)
        dest = dest_dir / archive_path.name
        shutil.move(str(archive_path), str(dest))
        return dest

    def pending_archives(self, site_id: str) -> list[date]:
        """Days with an archive waiting in the inbox, oldest first."""
        site_dir = self.config.inbox_root / site_id
        days = []
        if site_dir.is_dir():
            prefix = f"{site_id}_"
            for path in sorted(site_dir.iterdir()):
                name = path.name
                if not (name.startswith(prefix) and name.endswith(".tar.xz")):
                    continue
                stamp = name[len(prefix):len(prefix) + 8]
                try:
                    days.append(datetime.strptime(stamp, "%Y%m%d").date())
                except ValueError:
                    logger.warning("unparseable archive name in inbox: %s", name)
        return days

    def ingest_pending(self, site_id: str) -> list[IngestReport]:
        """Ingest every archive currently waiting for this site."""
        return [self.ingest_daily(site_id, day) for day in self.pending_archives(site_id)]

    def run_all(self, day: Optional[date] = None) -> list[IngestReport]:
        """One ingest per registered site, default: yesterday (UTC)."""
        if day is None:
            day = (self.clock.now() - timedelta(days=1)).date()
        return [self.ingest_daily(site.site_id, day) for site in self.store.list_sites()]

    # -- helpers ---------------------------------------------------------------

    def _quarantine(self, archive_path: Path, site_id: str) -> Path:
        dest_dir = self.config.quarantine_root / site_id
        dest_dir.mkdir(parents=True, exist_ok=True)
        dest = dest_dir / archive_path.name
        shutil.move(str(archive_path), str(dest))
        return dest

    def _alert(self, site_id: str, event: str, message: str) -> None:
        logger.warning("collector alert for %s: %s: %s", site_id, event, message)
        if self.alert_sink is not None:
            self.alert_sink(site_id, event, message)


def day_tag(day: date) -> str:
    return day.strftime("%Y%m%d")
