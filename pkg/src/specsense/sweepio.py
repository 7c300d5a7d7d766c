"""Reading and writing the on-disk recording layout.

Layout per site data dir:
    <data_dir>/<YYYYMMDD>/<HHMM>.sweeps      columnar (Parquet) sweep rows
    <data_dir>/<YYYYMMDD>/<HHMM>.manifest    text, two integers: total stored
    <data_dir>/<YYYYMMDD>/<HH>.params.json   capture metadata for that hour

Sweep rows are (timestamp_us int64, freq_hz int64, power_dbm float32); one
sweep expands to one row per frequency bin.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .clock import UTC, day_key, epoch_us, from_epoch_us, hour_key, minute_key
from .model import MinuteManifest, SiteParams, Sweep

SWEEP_SUFFIX = ".sweeps"
MANIFEST_SUFFIX = ".manifest"
PARAMS_SUFFIX = ".params.json"

PARAMS_KEYS = frozenset(
    {
        "site_id",
        "freq_start_hz",
        "freq_stop_hz",
        "rbw_hz",
        "sweep_time_s",
        "latitude",
        "longitude",
        "antenna_type",
        "lna_type",
        "timezone",
        "gate_threshold_dbm",
    }
)

_SCHEMA = pa.schema(
    [
        pa.field("timestamp_us", pa.int64()),
        pa.field("freq_hz", pa.int64()),
        pa.field("power_dbm", pa.float32()),
    ]
)


class SweepFileError(ValueError):
    """A sweep/manifest/params file failed to parse; message names the file."""


def quantize_powers(powers_dbm) -> np.ndarray:
    """Collapse powers onto the float32 lattice used by the storage format.

    Generators apply this up front so a write/read cycle is value-identical.
    """
    return np.asarray(powers_dbm, dtype=np.float32).astype(np.float64)


def write_minute_file(path: Path, sweeps: Iterable[Sweep]) -> None:
    ts_cols, freq_cols, power_cols = [], [], []
    for sweep in sweeps:
        n = sweep.n_bins
        ts_cols.append(np.full(n, epoch_us(sweep.start_time), dtype=np.int64))
        freq_cols.append(np.rint(sweep.freqs_hz).astype(np.int64))
        power_cols.append(sweep.powers_dbm.astype(np.float32))
    if ts_cols:
        table = pa.table(
            {
                "timestamp_us": np.concatenate(ts_cols),
                "freq_hz": np.concatenate(freq_cols),
                "power_dbm": np.concatenate(power_cols),
            },
            schema=_SCHEMA,
        )
    else:
        table = _SCHEMA.empty_table()
    path.parent.mkdir(parents=True, exist_ok=True)
    # left uncompressed: the daily LZMA archive recompresses far better anyway
    pq.write_table(table, path, compression="none", write_statistics=False)


def read_minute_file(path: Path, site_id: str = "") -> list[Sweep]:
    """Sweeps in timestamp order; rows with equal timestamps form one sweep."""
    try:
        table = pq.read_table(path)
    except Exception as exc:
        raise SweepFileError(f"unreadable sweep file {path}: {exc}") from exc
    ts = table.column("timestamp_us").to_numpy()
    freqs = table.column("freq_hz").to_numpy()
    powers = table.column("power_dbm").to_numpy().astype(np.float64)
    if len(ts) == 0:
        return []
    boundaries = np.flatnonzero(np.diff(ts) != 0) + 1
    sweeps = []
    for chunk_ts, chunk_f, chunk_p in zip(
        np.split(ts, boundaries), np.split(freqs, boundaries), np.split(powers, boundaries)
    ):
        try:
            sweeps.append(
                Sweep(
                    site_id=site_id,
                    start_time=from_epoch_us(int(chunk_ts[0])),
                    freqs_hz=chunk_f.astype(np.float64),
                    powers_dbm=chunk_p,
                )
            )
        except ValueError as exc:
            raise SweepFileError(f"malformed sweep in {path}: {exc}") from exc
    sweeps.sort(key=lambda s: s.start_time)
    return sweeps


def write_manifest(path: Path, manifest: MinuteManifest) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"{manifest.total_sweeps} {manifest.stored_sweeps}\n")


def read_manifest(path: Path, minute_start: datetime) -> MinuteManifest:
    try:
        parts = path.read_text().split()
        total, stored = int(parts[0]), int(parts[1])
    except (OSError, IndexError, ValueError) as exc:
        raise SweepFileError(f"malformed manifest {path}: {exc}") from exc
    return MinuteManifest(minute_start=minute_start, total_sweeps=total, stored_sweeps=stored)


def write_params(path: Path, params: SiteParams) -> None:
    payload = asdict(params)
    assert set(payload) == PARAMS_KEYS
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_params(path: Path) -> SiteParams:
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SweepFileError(f"malformed params file {path}: {exc}") from exc
    if set(payload) != PARAMS_KEYS:
        missing = PARAMS_KEYS - set(payload)
        extra = set(payload) - PARAMS_KEYS
        raise SweepFileError(
            f"params file {path} key mismatch (missing={sorted(missing)}, extra={sorted(extra)})"
        )
    return SiteParams(**payload)


def minute_paths(day_dir: Path) -> list[Path]:
    return sorted(day_dir.glob(f"[0-2][0-9][0-5][0-9]{SWEEP_SUFFIX}"))


def manifest_paths(day_dir: Path) -> list[Path]:
    return sorted(day_dir.glob(f"[0-2][0-9][0-5][0-9]{MANIFEST_SUFFIX}"))


def params_paths(day_dir: Path) -> list[Path]:
    return sorted(day_dir.glob(f"[0-2][0-9]{PARAMS_SUFFIX}"))


def minute_start_of(path: Path) -> datetime:
    """Recover the UTC minute from <YYYYMMDD>/<HHMM>.<suffix>."""
    day = path.parent.name
    hhmm = path.name[:4]
    try:
        return datetime.strptime(day + hhmm, "%Y%m%d%H%M").replace(tzinfo=UTC)
    except ValueError as exc:
        raise SweepFileError(f"cannot parse minute key from {path}") from exc


class RecordingWriter:
    """Streams sweeps into the minute/hour layout with rollover bookkeeping.

    Sweeps must arrive with non-decreasing timestamps. Every sweep counts in
    exactly one manifest; a minute's data file is written (possibly with zero
    rows) alongside its manifest so the two stay 1:1 by minute key.
    """

    def __init__(self, data_dir: Path, params: SiteParams):
        self.data_dir = Path(data_dir)
        self.params = params
        self._minute: Optional[datetime] = None
        self._hour: Optional[datetime] = None
        self._buffer: list[Sweep] = []
        self._total = 0
        self._stored = 0
        self._last_ts: Optional[datetime] = None

    def add(self, sweep: Sweep, stored: bool) -> None:
        ts = sweep.start_time
        if self._last_ts is not None and ts < self._last_ts:
            raise ValueError("sweep timestamps must be non-decreasing")
        self._last_ts = ts
        minute = ts.replace(second=0, microsecond=0)
        if self._minute is None:
            self._open_minute(minute)
        elif minute != self._minute:
            self._close_minute()
            self._open_minute(minute)
        self._total += 1
        if stored:
            self._stored += 1
            self._buffer.append(sweep)

    def close(self) -> None:
        if self._minute is not None:
            self._close_minute()
        self._write_params(self._hour)
        self._hour = None

    def flush_through(self, cutoff: datetime) -> None:
        """Close any open minute/hour that started before cutoff (day handoff)."""
        if self._minute is not None and self._minute < cutoff:
            self._close_minute()
        hour_cutoff = cutoff.replace(minute=0, second=0, microsecond=0)
        if self._hour is not None and self._hour < hour_cutoff:
            self._write_params(self._hour)
            self._hour = None

    def _open_minute(self, minute: datetime) -> None:
        hour = minute.replace(minute=0)
        if self._hour is not None and hour != self._hour:
            self._write_params(self._hour)
        self._minute = minute
        self._hour = hour
        self._buffer = []
        self._total = 0
        self._stored = 0

    def _close_minute(self) -> None:
        assert self._minute is not None
        day_dir = self.data_dir / day_key(self._minute)
        stem = minute_key(self._minute)
        write_minute_file(day_dir / f"{stem}{SWEEP_SUFFIX}", self._buffer)
        write_manifest(
            day_dir / f"{stem}{MANIFEST_SUFFIX}",
            MinuteManifest(self._minute, self._total, self._stored),
        )
        last_minute_of_hour = self._minute.minute == 59
        if last_minute_of_hour:
            self._write_params(self._hour)
            self._hour = None
        self._minute = None
        self._buffer = []

    def _write_params(self, hour: Optional[datetime]) -> None:
        if hour is None:
            return
        day_dir = self.data_dir / day_key(hour)
        path = day_dir / f"{hour_key(hour)}{PARAMS_SUFFIX}"
        if not path.exists():
            write_params(path, self.params)


def iter_recorded_sweeps(data_dir: Path, site_id: str = "") -> Iterator[Sweep]:
    """Replay every recorded sweep under data_dir in timestamp order.

    Missing minutes are legal gaps; a malformed file raises SweepFileError
    naming that file.
    """
    root = Path(data_dir)
    if site_id == "":
        site_id = _infer_site_id(root)
    for day_dir in sorted(p for p in root.iterdir() if p.is_dir()) if root.exists() else []:
        for path in minute_paths(day_dir):
            yield from read_minute_file(path, site_id=site_id)


def _infer_site_id(root: Path) -> str:
    if root.exists():
        for day_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            for params_file in params_paths(day_dir):
                try:
                    return read_params(params_file).site_id
                except SweepFileError:
                    continue
    return ""
