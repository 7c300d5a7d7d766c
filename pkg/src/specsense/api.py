"""Authenticated HTTP service over the central store.

Endpoints (all JSON):
    POST /api/signup            create an account
    POST /api/login             exchange credentials for a session token
    GET  /api/sites             site registry with status summaries
    GET  /api/au                filtered AU rows, paginated
    GET  /api/graph/{type}      one of the six aggregate series
    GET  /api/ops/status        per-site three-mode health

Every data route requires "Authorization: Bearer <token>". Query parameters
mirror the filter fields: site_id, start_date, end_date (inclusive site-local
dates), freq_min_hz, freq_max_hz, threshold_ref_dbm.
"""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Callable, Optional
from zoneinfo import ZoneInfo

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel

from .aggregate import GRAPH_TYPES, aggregate_series
from .auth import AuthError, SessionManager
from .clock import UTC, Clock, WallClock, parse_iso_ts
from .db import SiteInfo, Store
from .model import AURecord

DEFAULT_PAGE_SIZE = 10_000


class Credentials(BaseModel):
    username: str
    password: str


def _field_error(field: str, message: str) -> HTTPException:
    return HTTPException(status_code=422, detail=[{"field": field, "error": message}])


def _au_to_dict(record: AURecord) -> dict:
    return {
        "site_id": record.site_id,
        "channel_start_hz": record.channel_start_hz,
        "channel_stop_hz": record.channel_stop_hz,
        "hour_start": record.hour_start.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "au_percent": record.au_percent,
        "occupied_sweeps": record.occupied_sweeps,
        "total_sweeps": record.total_sweeps,
        "threshold_ref_dbm": record.threshold_ref_dbm,
        "complete": record.complete,
    }


def create_app(
    store: Store,
    clock: Optional[Clock] = None,
    *,
    session_ttl_s: float = 24 * 3600,
    status_source: Optional[Callable[[], list]] = None,
) -> FastAPI:
    clock = clock or WallClock()
    sessions = SessionManager(store, clock, ttl_s=session_ttl_s)
    app = FastAPI(title="specsense query API", docs_url=None, redoc_url=None)

    def require_session(authorization: Optional[str] = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        try:
            return sessions.require(authorization.removeprefix("Bearer ").strip())
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc))

    def resolve_filter(
        site_id: str,
        start_date: Optional[str],
        end_date: Optional[str],
        freq_min_hz: Optional[float],
        freq_max_hz: Optional[float],
        threshold_ref_dbm: Optional[float],
    ) -> tuple[SiteInfo, dict]:
        site = store.get_site(site_id)
        if site is None:
            raise HTTPException(status_code=404, detail=f"unknown site {site_id!r}")

        errors = []
        tz = ZoneInfo(site.timezone)

        def parse_date(name: str, value: Optional[str]):
            if value is None:
                return None
            try:
                return datetime.strptime(value, "%Y-%m-%d").date()
            except ValueError:
                errors.append({"field": name, "error": "expected YYYY-MM-DD"})
                return None

        start = parse_date("start_date", start_date)
        end = parse_date("end_date", end_date)
        if start and end and start > end:
            errors.append({"field": "end_date", "error": "date range is empty"})

        if freq_min_hz is not None and freq_max_hz is not None and freq_min_hz >= freq_max_hz:
            errors.append({"field": "freq_max_hz", "error": "freq_min must be below freq_max"})

        threshold = threshold_ref_dbm
        if threshold is None:
            threshold = site.threshold_ref_dbm
        else:
            available = store.distinct_thresholds(site_id)
            if available and threshold not in available:
                errors.append(
                    {
                        "field": "threshold_ref_dbm",
                        "error": f"no data at this threshold; available: {available}",
                    }
                )

        if errors:
            raise HTTPException(status_code=422, detail=errors)

        # inclusive site-local dates -> UTC half-open hour range
        hour_from = (
            datetime(start.year, start.month, start.day, tzinfo=tz).astimezone(UTC)
            if start
            else None
        )
        hour_to = (
            (datetime(end.year, end.month, end.day, tzinfo=tz) + timedelta(days=1)).astimezone(UTC)
            if end
            else None
        )
        return site, {
            "hour_from": hour_from,
            "hour_to": hour_to,
            "freq_min_hz": freq_min_hz,
            "freq_max_hz": freq_max_hz,
            "threshold_ref_dbm": threshold,
        }

    @app.post("/api/signup", status_code=201)
    def signup(body: Credentials):
        try:
            username = sessions.signup(body.username, body.password)
        except AuthError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"username": username}

    @app.post("/api/login")
    def login(body: Credentials):
        try:
            token, expires = sessions.login(body.username, body.password)
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc))
        return {"token": token, "expires_at": expires.isoformat()}

    @app.get("/api/sites")
    def list_sites(_: str = Depends(require_session)):
        statuses = {row["site_id"]: row for row in store.get_statuses()}
        out = []
        for site in store.list_sites():
            row = statuses.get(site.site_id)
            out.append(
                {
                    "site_id": site.site_id,
                    "name": site.name,
                    "latitude": site.latitude,
                    "longitude": site.longitude,
                    "timezone": site.timezone,
                    "threshold_ref_dbm": site.threshold_ref_dbm,
                    "status": (
                        {
                            "reachability": row["reachability"],
                            "collection": row["collection"],
                            "archive": row["archive"],
                        }
                        if row
                        else None
                    ),
                }
            )
        return out

    @app.get("/api/au")
    def query_au(
        site_id: str,
        start_date: Optional[str] = None,
        end_date: Optional[str] = None,
        freq_min_hz: Optional[float] = None,
        freq_max_hz: Optional[float] = None,
        threshold_ref_dbm: Optional[float] = None,
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=DEFAULT_PAGE_SIZE, ge=1, le=100_000),
        _: str = Depends(require_session),
    ):
        _, window = resolve_filter(
            site_id, start_date, end_date, freq_min_hz, freq_max_hz, threshold_ref_dbm
        )
        records = store.query_au(
            site_id,
            limit=page_size,
            offset=(page - 1) * page_size,
            **window,
        )
        return {
            "site_id": site_id,
            "page": page,
            "page_size": page_size,
            "rows": [_au_to_dict(r) for r in records],
        }

    @app.get("/api/graph/{graph_type}")
    def graph_data(
        graph_type: str,
        site_id: str,
        start_date: Optional[str] = None,
        end_date: Optional[str] = None,
        freq_min_hz: Optional[float] = None,
        freq_max_hz: Optional[float] = None,
        threshold_ref_dbm: Optional[float] = None,
        _: str = Depends(require_session),
    ):
        if graph_type not in GRAPH_TYPES:
            raise _field_error("graph_type", f"expected one of {list(GRAPH_TYPES)}")
        site, window = resolve_filter(
            site_id, start_date, end_date, freq_min_hz, freq_max_hz, threshold_ref_dbm
        )
        records = store.query_au(site_id, **window)
        series = aggregate_series(records, graph_type, site.timezone)
        return {"site_id": site_id, "series": series.to_dict()}

    @app.get("/api/ops/status")
    def ops_status(
        site_id: Optional[str] = None,
        _: str = Depends(require_session),
    ):
        if status_source is not None:
            statuses = [s.to_dict() for s in status_source()]
        else:
            statuses = []
            for row in store.get_statuses():
                statuses.append(
                    {
                        "site_id": row["site_id"],
                        "reachability": row["reachability"],
                        "reachability_last_seen": _iso_or_none(row["reachability_last_seen"]),
                        "collection": row["collection"],
                        "collection_last_seen": _iso_or_none(row["collection_last_seen"]),
                        "archive": row["archive"],
                        "latest_archive_mtime": _iso_or_none(row["latest_archive_mtime"]),
                        "updated_at": _iso_or_none(row["updated_at"]),
                    }
                )
        if site_id is not None:
            if store.get_site(site_id) is None:
                raise HTTPException(status_code=404, detail=f"unknown site {site_id!r}")
            statuses = [s for s in statuses if s["site_id"] == site_id]
        return statuses

    @app.get("/api/alerts")
    def alerts(
        site_id: Optional[str] = None,
        _: str = Depends(require_session),
    ):
        if site_id is not None and store.get_site(site_id) is None:
            raise HTTPException(status_code=404, detail=f"unknown site {site_id!r}")
        rows = store.list_alerts(site_id=site_id)
        return [
            {
                "id": row["id"],
                "site_id": row["site_id"],
                "failure_type": row["failure_type"],
                "detected_at": _iso_or_none(row["detected_at"]),
                "message": row["message"],
                "delivered": bool(row["delivered"]),
                "resolved_at": _iso_or_none(row["resolved_at"]),
            }
            for row in rows
        ]

    return app


def _iso_or_none(text: Optional[str]) -> Optional[str]:
    if text is None:
        return None
    return parse_iso_ts(text).isoformat()
