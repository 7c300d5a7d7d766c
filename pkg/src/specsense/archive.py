"""Lossless day-directory archives: LZMA-compressed tar with relative paths.

The contract is the byte-identical round trip plus ratio instrumentation, not
any particular container byte layout. Files enter the archive in lexicographic
order so the same tree always produces the same archive.
"""

from __future__ import annotations

import lzma
import shutil
import tarfile
import uuid
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Optional

ARCHIVE_SUFFIX = ".tar.xz"
DEFAULT_LEVEL = 9


class ArchiveIntegrityError(Exception):
    """The archive is corrupt or truncated; nothing was extracted."""


@dataclass(frozen=True)
class ArchiveHandle:
    path: Path
    site_id: str
    day: date
    uncompressed_bytes: int
    compressed_bytes: int

    def __post_init__(self):
        if self.compressed_bytes <= 0:
            raise ValueError("archive has no bytes")

    @property
    def ratio(self) -> float:
        return self.uncompressed_bytes / self.compressed_bytes


def archive_name(site_id: str, day: date) -> str:
    return f"{site_id}_{day.strftime('%Y%m%d')}{ARCHIVE_SUFFIX}"


def compress_dir(
    src_dir: Path,
    dest_path: Path,
    *,
    site_id: str = "",
    day: Optional[date] = None,
    level: int = DEFAULT_LEVEL,
) -> ArchiveHandle:
    """Pack src_dir into one LZMA archive at dest_path.

    Member paths are relative to src_dir; an unreadable file aborts without
    leaving a partial archive behind.
    """
    src_dir = Path(src_dir)
    dest_path = Path(dest_path)
    if not src_dir.is_dir():
        raise ValueError(f"not a directory: {src_dir}")
    if not 1 <= level <= 9:
        raise ValueError("compression level must be in 1..9")

    files = sorted(p for p in src_dir.rglob("*") if p.is_file())
    uncompressed = sum(p.stat().st_size for p in files)

    dest_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest_path.with_name(dest_path.name + f".tmp-{uuid.uuid4().hex[:8]}")
    try:
        with tarfile.open(tmp, "w:xz", preset=level) as tar:
            for path in files:
                tar.add(path, arcname=path.relative_to(src_dir).as_posix(), recursive=False)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise
    tmp.replace(dest_path)

    return ArchiveHandle(
        path=dest_path,
        site_id=site_id,
        day=day if day is not None else date(1970, 1, 1),
        uncompressed_bytes=uncompressed,
        compressed_bytes=dest_path.stat().st_size,
    )


def decompress(archive_path: Path, dest_dir: Path) -> Path:
    """Restore the full tree under dest_dir; on corruption dest_dir is left absent."""
    archive_path = Path(archive_path)
    dest_dir = Path(dest_dir)
    if not archive_path.is_file():
        raise FileNotFoundError(f"no archive at {archive_path}")
    if dest_dir.exists():
        raise ValueError(f"destination already exists: {dest_dir}")

    staging = dest_dir.with_name(dest_dir.name + f".extract-{uuid.uuid4().hex[:8]}")
    staging.mkdir(parents=True)
    try:
        with tarfile.open(archive_path, "r:xz") as tar:
            tar.extractall(staging, filter="data")
    except (tarfile.TarError, lzma.LZMAError, EOFError, OSError) as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise ArchiveIntegrityError(f"corrupt archive {archive_path}: {exc}") from exc
    staging.replace(dest_dir)
    return dest_dir
