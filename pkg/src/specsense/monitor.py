"""Central watchdog: heartbeat and archive-freshness detectors plus webhook alerts.

Three failure modes per site — unreachable, collection_stopped,
archive_missing — each detected from marker/archive modified times. One open
alert per (site, failure type); re-detections refresh it, recovery closes it
with a follow-up notice.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

import httpx

from .agent import collect_marker_path, reach_marker_path
from .clock import UTC, Clock
from .db import Store
from .transfer import RemoteNotFoundError, TransferEndpoint, TransferError

logger = logging.getLogger(__name__)

FAILURE_UNREACHABLE = "unreachable"
FAILURE_COLLECTION = "collection_stopped"
FAILURE_ARCHIVE = "archive_missing"
FAILURE_TYPES = (FAILURE_UNREACHABLE, FAILURE_COLLECTION, FAILURE_ARCHIVE)

DEFAULT_CHECK_INTERVAL_S = 300.0
DEFAULT_HEARTBEAT_WINDOW_S = 900.0  # three missed 300 s beats
DEFAULT_ARCHIVE_MAX_AGE_S = 86400.0  # "greater than a day"

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_STALE = "stale"
STATUS_UNKNOWN = "unknown"


@dataclass
class SiteStatus:
    site_id: str
    reachability: str = STATUS_UNKNOWN
    reachability_last_seen: Optional[datetime] = None
    collection: str = STATUS_UNKNOWN
    collection_last_seen: Optional[datetime] = None
    archive: str = STATUS_UNKNOWN
    latest_archive_mtime: Optional[datetime] = None
    updated_at: Optional[datetime] = None

    def to_dict(self) -> dict:
        def iso(dt: Optional[datetime]) -> Optional[str]:
            return dt.isoformat() if dt else None

        return {
            "site_id": self.site_id,
            "reachability": self.reachability,
            "reachability_last_seen": iso(self.reachability_last_seen),
            "collection": self.collection,
            "collection_last_seen": iso(self.collection_last_seen),
            "archive": self.archive,
            "latest_archive_mtime": iso(self.latest_archive_mtime),
            "updated_at": iso(self.updated_at),
        }


@dataclass
class Alert:
    site_id: str
    failure_type: str
    detected_at: datetime
    message: str
    delivered: bool = False
    resolved_at: Optional[datetime] = None
    row_id: Optional[int] = None
    last_detected_at: Optional[datetime] = None


class WebhookNotifier:
    """POSTs alert payloads to a chat webhook with bounded retries."""

    def __init__(
        self,
        url: str,
        *,
        max_attempts: int = 3,
        backoff_s: float = 0.5,
        sleep_fn=time.sleep,
        client: Optional[httpx.Client] = None,
    ):
        self.url = url
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.sleep_fn = sleep_fn
        self.client = client

    def send(self, payload: dict) -> bool:
        client = self.client or httpx.Client(timeout=10.0)
        owns = self.client is None
        try:
            for attempt in range(self.max_attempts):
                try:
                    response = client.post(self.url, json=payload)
                    if 200 <= response.status_code < 300:
                        return True
                    logger.warning(
                        "webhook returned %d (attempt %d)", response.status_code, attempt + 1
                    )
                except httpx.HTTPError as exc:
                    logger.warning("webhook error (attempt %d): %s", attempt + 1, exc)
                if attempt + 1 < self.max_attempts:
                    self.sleep_fn(self.backoff_s * 2**attempt)
            return False
        finally:
            if owns:
                client.close()


class OpsMonitor:
    """Runs the three detectors over every registered site and dispatches alerts."""

    def __init__(
        self,
        store: Store,
        endpoint: TransferEndpoint,
        clock: Clock,
        *,
        long_term_root: Optional[Path] = None,
        notifier: Optional[WebhookNotifier] = None,
        heartbeat_window_s: float = DEFAULT_HEARTBEAT_WINDOW_S,
        archive_max_age_s: float = DEFAULT_ARCHIVE_MAX_AGE_S,
        check_interval_s: float = DEFAULT_CHECK_INTERVAL_S,
    ):
        self.store = store
        self.endpoint = endpoint
        self.clock = clock
        self.long_term_root = Path(long_term_root) if long_term_root else None
        self.notifier = notifier
        self.heartbeat_window_s = heartbeat_window_s
        self.archive_max_age_s = archive_max_age_s
        self.check_interval_s = check_interval_s
        self._status: dict[str, SiteStatus] = {}
        self._open_alerts: dict[tuple[str, str], Alert] = {}
        # (payload, alert-to-mark-delivered-or-None), drained by deliver_pending
        self._queue: list[tuple[dict, Optional[Alert]]] = []

    # -- detectors ----------------------------------------------------------

    def _marker_verdict(self, remote: str, window_s: float) -> tuple[str, Optional[datetime], str]:
        now = self.clock.now()
        try:
            seen = self.endpoint.mtime(remote)
        except RemoteNotFoundError:
            return STATUS_FAILED, None, "never seen"
        except TransferError as exc:
            return STATUS_UNKNOWN, None, f"endpoint error: {exc}"
        age = (now - seen).total_seconds()
        if age > window_s:
            return STATUS_FAILED, seen, f"last seen {age:.0f}s ago"
        return STATUS_OK, seen, ""

    def check_reachability(self, site_id: str, window_s: Optional[float] = None) -> SiteStatus:
        window = window_s if window_s is not None else self.heartbeat_window_s
        verdict, seen, detail = self._marker_verdict(reach_marker_path(site_id), window)
        status = self._status_for(site_id)
        status.reachability = verdict
        if seen is not None:
            status.reachability_last_seen = seen
        status.updated_at = self.clock.now()
        if verdict == STATUS_FAILED:
            self._raise_alert(site_id, FAILURE_UNREACHABLE, f"site unreachable ({detail})")
        elif verdict == STATUS_OK:
            self._clear_alert(site_id, FAILURE_UNREACHABLE)
        self._persist_status(status)
        return status

    def check_collection(self, site_id: str, window_s: Optional[float] = None) -> SiteStatus:
        window = window_s if window_s is not None else self.heartbeat_window_s
        verdict, seen, detail = self._marker_verdict(collect_marker_path(site_id), window)
        status = self._status_for(site_id)
        status.collection = verdict
        if seen is not None:
            status.collection_last_seen = seen
        status.updated_at = self.clock.now()
        unreachable_open = (site_id, FAILURE_UNREACHABLE) in self._open_alerts
        if verdict == STATUS_FAILED and not unreachable_open:
            # collection state is unknowable without connectivity, so an open
            # unreachable alert suppresses this one
            self._raise_alert(site_id, FAILURE_COLLECTION, f"data collection stopped ({detail})")
        elif verdict == STATUS_OK:
            self._clear_alert(site_id, FAILURE_COLLECTION)
        self._persist_status(status)
        return status

    def check_archive_freshness(
        self, site_id: str, max_age_s: Optional[float] = None
    ) -> SiteStatus:
        max_age = max_age_s if max_age_s is not None else self.archive_max_age_s
        now = self.clock.now()
        status = self._status_for(site_id)
        newest: Optional[datetime] = None
        try:
            for entry in self.endpoint.list(site_id):
                if newest is None or entry.mtime > newest:
                    newest = entry.mtime
        except TransferError as exc:
            status.archive = STATUS_UNKNOWN
            status.updated_at = now
            self._persist_status(status)
            logger.warning("archive listing failed for %s: %s", site_id, exc)
            return status
        if self.long_term_root is not None:
            site_dir = self.long_term_root / site_id
            if site_dir.is_dir():
                for path in site_dir.iterdir():
                    if path.is_file():
                        mtime = datetime.fromtimestamp(path.stat().st_mtime, tz=UTC)
                        if newest is None or mtime > newest:
                            newest = mtime

        status.latest_archive_mtime = newest
        if newest is None:
            # never delivered: baseline is the registration time, with one extra
            # daily cycle of grace since the first archive cannot exist sooner
            site = self.store.get_site(site_id)
            baseline = site.created_at if site and site.created_at else None
            if baseline is None or (now - baseline).total_seconds() > max_age + 86400.0:
                status.archive = STATUS_STALE
                self._raise_alert(site_id, FAILURE_ARCHIVE, "no archive ever received")
            else:
                status.archive = STATUS_OK
        elif (now - newest).total_seconds() > max_age:
            status.archive = STATUS_STALE
            age_h = (now - newest).total_seconds() / 3600.0
            self._raise_alert(
                site_id, FAILURE_ARCHIVE, f"latest archive is {age_h:.1f} h old"
            )
        else:
            status.archive = STATUS_OK
            self._clear_alert(site_id, FAILURE_ARCHIVE)
        status.updated_at = now
        self._persist_status(status)
        return status

    def run_checks(self) -> list[SiteStatus]:
        """One detector pass over every registered site, then alert dispatch."""
        statuses = []
        for site in self.store.list_sites():
            self.check_reachability(site.site_id)
            self.check_collection(site.site_id)
            statuses.append(self.check_archive_freshness(site.site_id))
        self.deliver_pending()
        return statuses

    def schedule_on(self, scheduler) -> None:
        scheduler.every(
            self.check_interval_s,
            self.run_checks,
            first_at=self.clock.now() + timedelta(seconds=self.check_interval_s),
            name="ops-monitor-checks",
            priority=10,  # after same-instant agent/collector work
        )

    # -- alerts ----------------------------------------------------------------

    def _raise_alert(self, site_id: str, failure_type: str, message: str) -> None:
        key = (site_id, failure_type)
        now = self.clock.now()
        existing = self._open_alerts.get(key)
        if existing is not None:
            existing.last_detected_at = now  # refresh, no duplicate
            return
        alert = Alert(site_id, failure_type, now, message, last_detected_at=now)
        alert.row_id = self.store.insert_alert(site_id, failure_type, now, message)
        self._open_alerts[key] = alert
        self._enqueue(alert, event="failure")

    def _clear_alert(self, site_id: str, failure_type: str) -> None:
        key = (site_id, failure_type)
        alert = self._open_alerts.pop(key, None)
        if alert is None:
            return
        now = self.clock.now()
        alert.resolved_at = now
        if alert.row_id is not None:
            self.store.resolve_alert(alert.row_id, now)
        self._enqueue(alert, event="recovery")

    def _enqueue(self, alert: Alert, event: str) -> None:
        payload = {
            "site_id": alert.site_id,
            "failure_type": alert.failure_type,
            "detected_at": alert.detected_at.isoformat(),
            "message": alert.message if event == "failure" else f"recovered: {alert.message}",
            "event": event,
        }
        self._queue.append((payload, alert if event == "failure" else None))

    def deliver_pending(self) -> None:
        """Push queued notifications; failed sends stay queued for the next cycle."""
        if self.notifier is None:
            self._queue.clear()
            return
        remaining = []
        for payload, alert in self._queue:
            if self.notifier.send(payload):
                if alert is not None:
                    alert.delivered = True
                    if alert.row_id is not None:
                        self.store.mark_alert_delivered(alert.row_id)
            else:
                remaining.append((payload, alert))
        self._queue = remaining

    def notify_external(self, site_id: str, event: str, message: str) -> None:
        """Out-of-band operational notice (e.g. collector quarantine)."""
        self._queue.append(
            (
                {
                    "site_id": site_id,
                    "failure_type": event,
                    "detected_at": self.clock.now().isoformat(),
                    "message": message,
                    "event": "failure",
                },
                None,
            )
        )

    # -- status ------------------------------------------------------------------

    def _status_for(self, site_id: str) -> SiteStatus:
        if site_id not in self._status:
            self._status[site_id] = SiteStatus(site_id=site_id)
        return self._status[site_id]

    def _persist_status(self, status: SiteStatus) -> None:
        self.store.upsert_status(
            status.site_id,
            status.reachability,
            status.reachability_last_seen,
            status.collection,
            status.collection_last_seen,
            status.archive,
            status.latest_archive_mtime,
            status.updated_at or self.clock.now(),
        )

    def status_snapshot(self) -> list[SiteStatus]:
        """Point-in-time view of every registered site."""
        known = dict(self._status)
        out = []
        for site in self.store.list_sites():
            out.append(known.get(site.site_id, SiteStatus(site_id=site.site_id)))
        return out

    def open_alerts(self) -> list[Alert]:
        return list(self._open_alerts.values())
