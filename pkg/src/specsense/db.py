"""SQLite-backed central store: site registry, AU results, auth, ops state.

One connection guarded by a re-entrant lock; writes run inside transactions
so a failed batch never leaves partial rows behind.
"""

from __future__ import annotations

import hashlib
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from .clock import iso_hour, iso_ts, parse_iso_hour, parse_iso_ts
from .model import DEFAULT_CHANNEL_WIDTH_HZ, DEFAULT_REF_BANDWIDTH_HZ, AURecord


@dataclass(frozen=True)
class SiteInfo:
    """Registry entry: per-site analysis inputs plus map metadata."""

    site_id: str
    name: str
    latitude: float
    longitude: float
    timezone: str
    threshold_ref_dbm: float
    ref_bandwidth_hz: float = DEFAULT_REF_BANDWIDTH_HZ
    channel_width_hz: float = DEFAULT_CHANNEL_WIDTH_HZ
    created_at: Optional[datetime] = None


def _schema_sql() -> str:
    return resources.files("specsense").joinpath("schema.sql").read_text()


class Store:
    def __init__(self, path: Union[str, Path] = ":memory:"):
        self.path = str(path)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock:
            self._conn.execute("PRAGMA foreign_keys = ON")
            self._conn.executescript(_schema_sql())
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextmanager
    def transaction(self):
        with self._lock:
            try:
                yield self._conn
                self._conn.commit()
            except Exception:
                self._conn.rollback()
                raise

    # -- sites ---------------------------------------------------------------

    def upsert_site(self, site: SiteInfo, *, now: Optional[datetime] = None) -> None:
        created = iso_ts(site.created_at) if site.created_at else (iso_ts(now) if now else None)
        with self.transaction() as conn:
            existing = conn.execute(
                "SELECT created_at FROM sites WHERE site_id = ?", (site.site_id,)
            ).fetchone()
            if existing is not None:
                created = existing["created_at"]
            elif created is None:
                raise ValueError("new site needs created_at or now")
            conn.execute(
                """
                INSERT INTO sites (site_id, name, latitude, longitude, timezone,
                                   threshold_ref_dbm, ref_bandwidth_hz, channel_width_hz, created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(site_id) DO UPDATE SET
                    name=excluded.name, latitude=excluded.latitude, longitude=excluded.longitude,
                    timezone=excluded.timezone, threshold_ref_dbm=excluded.threshold_ref_dbm,
                    ref_bandwidth_hz=excluded.ref_bandwidth_hz,
                    channel_width_hz=excluded.channel_width_hz, created_at=?
                """,
                (
                    site.site_id, site.name, site.latitude, site.longitude, site.timezone,
                    site.threshold_ref_dbm, site.ref_bandwidth_hz, site.channel_width_hz,
                    created, created,
                ),
            )

    def get_site(self, site_id: str) -> Optional[SiteInfo]:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM sites WHERE site_id = ?", (site_id,)
            ).fetchone()
        return self._site_from_row(row) if row else None

    def list_sites(self) -> list[SiteInfo]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM sites ORDER BY site_id").fetchall()
        return [self._site_from_row(r) for r in rows]

    @staticmethod
    def _site_from_row(row: sqlite3.Row) -> SiteInfo:
        return SiteInfo(
            site_id=row["site_id"],
            name=row["name"],
            latitude=row["latitude"],
            longitude=row["longitude"],
            timezone=row["timezone"],
            threshold_ref_dbm=row["threshold_ref_dbm"],
            ref_bandwidth_hz=row["ref_bandwidth_hz"],
            channel_width_hz=row["channel_width_hz"],
            created_at=parse_iso_ts(row["created_at"]),
        )

    # -- AU results ------------------------------------------------------------

    @staticmethod
    def _au_row(record: AURecord) -> tuple:
        return (
            record.site_id,
            record.channel_start_hz,
            record.channel_stop_hz,
            iso_hour(record.hour_start),
            record.threshold_ref_dbm,
            record.au_percent,
            record.occupied_sweeps,
            record.total_sweeps,
            1 if record.complete else 0,
        )

    @staticmethod
    def _au_from_row(row: sqlite3.Row) -> AURecord:
        return AURecord(
            site_id=row["site_id"],
            channel_start_hz=row["channel_start_hz"],
            channel_stop_hz=row["channel_stop_hz"],
            hour_start=parse_iso_hour(row["hour_start"]),
            au_percent=row["au_percent"],
            occupied_sweeps=row["occupied_sweeps"],
            total_sweeps=row["total_sweeps"],
            threshold_ref_dbm=row["threshold_ref_dbm"],
            complete=bool(row["complete"]),
        )

    _AU_UPSERT = """
        INSERT INTO au_results (site_id, channel_start_hz, channel_stop_hz, hour_start,
                                threshold_ref_dbm, au_percent, occupied_sweeps,
                                total_sweeps, complete)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
        ON CONFLICT(site_id, channel_start_hz, hour_start, threshold_ref_dbm)
        DO UPDATE SET channel_stop_hz=excluded.channel_stop_hz,
                      au_percent=excluded.au_percent,
                      occupied_sweeps=excluded.occupied_sweeps,
                      total_sweeps=excluded.total_sweeps,
                      complete=excluded.complete
    """

    def persist_au(self, records: Sequence[AURecord]) -> int:
        """Upsert records keyed by (site, channel_start, hour, threshold)."""
        rows = [self._au_row(r) for r in records]
        with self.transaction() as conn:
            conn.executemany(self._AU_UPSERT, rows)
        return len(rows)

    def replace_day(self, site_id: str, day_start: datetime, records: Sequence[AURecord]) -> int:
        """All-or-nothing replacement of one site-day's rows."""
        lo = iso_hour(day_start)
        hi = iso_hour(day_start.replace(hour=23))
        with self.transaction() as conn:
            conn.execute(
                "DELETE FROM au_results WHERE site_id = ? AND hour_start BETWEEN ? AND ?",
                (site_id, lo, hi),
            )
            conn.executemany(self._AU_UPSERT, [self._au_row(r) for r in records])
        return len(records)

    def query_au(
        self,
        site_id: str,
        *,
        hour_from: Optional[datetime] = None,
        hour_to: Optional[datetime] = None,
        freq_min_hz: Optional[float] = None,
        freq_max_hz: Optional[float] = None,
        threshold_ref_dbm: Optional[float] = None,
        limit: Optional[int] = None,
        offset: int = 0,
    ) -> list[AURecord]:
        """Rows matching every given predicate, ordered by (hour, channel)."""
        clauses = ["site_id = ?"]
        params: list = [site_id]
        if hour_from is not None:
            clauses.append("hour_start >= ?")
            params.append(iso_hour(hour_from))
        if hour_to is not None:
            clauses.append("hour_start < ?")
            params.append(iso_hour(hour_to))
        if freq_min_hz is not None:
            clauses.append("channel_stop_hz > ?")
            params.append(freq_min_hz)
        if freq_max_hz is not None:
            clauses.append("channel_start_hz < ?")
            params.append(freq_max_hz)
        if threshold_ref_dbm is not None:
            clauses.append("threshold_ref_dbm = ?")
            params.append(threshold_ref_dbm)
        sql = (
            "SELECT * FROM au_results WHERE "
            + " AND ".join(clauses)
            + " ORDER BY hour_start, channel_start_hz"
        )
        if limit is not None:
            sql += " LIMIT ? OFFSET ?"
            params.extend([limit, offset])
        with self._lock:
            rows = self._conn.execute(sql, params).fetchall()
        return [self._au_from_row(r) for r in rows]

    def distinct_thresholds(self, site_id: str) -> list[float]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT threshold_ref_dbm FROM au_results WHERE site_id = ? ORDER BY 1",
                (site_id,),
            ).fetchall()
        return [r[0] for r in rows]

    def au_row_count(self, site_id: Optional[str] = None) -> int:
        with self._lock:
            if site_id is None:
                row = self._conn.execute("SELECT COUNT(*) FROM au_results").fetchone()
            else:
                row = self._conn.execute(
                    "SELECT COUNT(*) FROM au_results WHERE site_id = ?", (site_id,)
                ).fetchone()
        return int(row[0])

    def au_digest(self) -> str:
        """Order-independent hash of the AU table; read-only checks compare it."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM au_results ORDER BY site_id, channel_start_hz, hour_start, threshold_ref_dbm"
            ).fetchall()
        h = hashlib.sha256()
        for row in rows:
            h.update(repr(tuple(row)).encode())
        return h.hexdigest()

    # -- users and sessions -----------------------------------------------------

    def create_user(self, username: str, salt_hex: str, digest_hex: str, now: datetime) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO users (username, password_salt, password_digest, created_at) "
                "VALUES (?, ?, ?, ?)",
                (username, salt_hex, digest_hex, iso_ts(now)),
            )

    def get_user(self, username: str) -> Optional[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(
                "SELECT * FROM users WHERE username = ?", (username,)
            ).fetchone()

    def create_session(self, token: str, username: str, now: datetime, expires: datetime) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO sessions (token, username, created_at, expires_at) VALUES (?, ?, ?, ?)",
                (token, username, iso_ts(now), iso_ts(expires)),
            )

    def get_session(self, token: str) -> Optional[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(
                "SELECT * FROM sessions WHERE token = ?", (token,)
            ).fetchone()

    # -- ops status and alerts ----------------------------------------------------

    def upsert_status(
        self,
        site_id: str,
        reachability: str,
        reachability_last_seen: Optional[datetime],
        collection: str,
        collection_last_seen: Optional[datetime],
        archive: str,
        latest_archive_mtime: Optional[datetime],
        updated_at: datetime,
    ) -> None:
        with self.transaction() as conn:
            conn.execute(
                """
                INSERT INTO heartbeats (site_id, reachability, reachability_last_seen,
                                        collection, collection_last_seen, archive,
                                        latest_archive_mtime, updated_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(site_id) DO UPDATE SET
                    reachability=excluded.reachability,
                    reachability_last_seen=excluded.reachability_last_seen,
                    collection=excluded.collection,
                    collection_last_seen=excluded.collection_last_seen,
                    archive=excluded.archive,
                    latest_archive_mtime=excluded.latest_archive_mtime,
                    updated_at=excluded.updated_at
                """,
                (
                    site_id,
                    reachability,
                    iso_ts(reachability_last_seen) if reachability_last_seen else None,
                    collection,
                    iso_ts(collection_last_seen) if collection_last_seen else None,
                    archive,
                    iso_ts(latest_archive_mtime) if latest_archive_mtime else None,
                    iso_ts(updated_at),
                ),
            )

    def get_statuses(self) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(
                "SELECT * FROM heartbeats ORDER BY site_id"
            ).fetchall()

    def insert_alert(
        self, site_id: str, failure_type: str, detected_at: datetime, message: str
    ) -> int:
        with self.transaction() as conn:
            cur = conn.execute(
                "INSERT INTO alerts (site_id, failure_type, detected_at, message) "
                "VALUES (?, ?, ?, ?)",
                (site_id, failure_type, iso_ts(detected_at), message),
            )
            return int(cur.lastrowid)

    def mark_alert_delivered(self, alert_id: int) -> None:
        with self.transaction() as conn:
            conn.execute("UPDATE alerts SET delivered = 1 WHERE id = ?", (alert_id,))

    def resolve_alert(self, alert_id: int, resolved_at: datetime) -> None:
        with self.transaction() as conn:
            conn.execute(
                "UPDATE alerts SET resolved_at = ? WHERE id = ?",
                (iso_ts(resolved_at), alert_id),
            )

    def list_alerts(self, site_id: Optional[str] = None, open_only: bool = False) -> list[sqlite3.Row]:
        sql = "SELECT * FROM alerts"
        clauses, params = [], []
        if site_id is not None:
            clauses.append("site_id = ?")
            params.append(site_id)
        if open_only:
            clauses.append("resolved_at IS NULL")
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY id"
        with self._lock:
            return self._conn.execute(sql, params).fetchall()
