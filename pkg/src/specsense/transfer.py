"""File-transfer endpoints with put/list/mtime verbs.

Two backends: a local-directory endpoint (the test and demo default) and an
FTP client for deployments. Puts are atomic-visible everywhere — upload to a
temporary name, then rename — so list() never observes a half-written file.
"""

from __future__ import annotations

import ftplib
import io
import os
import shutil
import uuid
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path, PurePosixPath
from typing import Optional

from .clock import UTC, Clock

FTP_USER_ENV = "SPECSENSE_FTP_USER"
FTP_PASSWORD_ENV = "SPECSENSE_FTP_PASSWORD"


class TransferError(Exception):
    """Transport failure, typed by the phase that broke."""

    def __init__(self, phase: str, message: str):
        super().__init__(f"{phase}: {message}")
        self.phase = phase  # connect | auth | write | read


class RemoteNotFoundError(TransferError):
    def __init__(self, remote: str):
        super().__init__("read", f"no remote file {remote!r}")
        self.remote = remote


@dataclass(frozen=True)
class RemoteEntry:
    path: str
    mtime: datetime
    size: int


def _clean_remote(remote: str) -> PurePosixPath:
    p = PurePosixPath(remote)
    if p.is_absolute() or ".." in p.parts:
        raise ValueError(f"remote path must be relative and inside the root: {remote!r}")
    return p


class TransferEndpoint:
    """put/list/mtime against a remote file store."""

    def check(self) -> None:
        """Explicit reachability probe; raises TransferError when unreachable."""
        raise NotImplementedError

    def put_file(self, local: Path, remote: str) -> RemoteEntry:
        raise NotImplementedError

    def put_bytes(self, data: bytes, remote: str) -> RemoteEntry:
        raise NotImplementedError

    def list(self, prefix: str = "") -> list[RemoteEntry]:
        raise NotImplementedError

    def mtime(self, remote: str) -> datetime:
        raise NotImplementedError


class LocalDirEndpoint(TransferEndpoint):
    """Endpoint over a local directory tree.

    When a clock is injected, upload mtimes come from it instead of the OS,
    which keeps freshness checks coherent inside accelerated-clock runs.
    """

    def __init__(self, root: Path, clock: Optional[Clock] = None):
        self.root = Path(root)
        self.clock = clock

    def check(self) -> None:
        if not self.root.is_dir():
            raise TransferError("connect", f"endpoint root missing: {self.root}")

    def _stamp(self, target: Path) -> None:
        if self.clock is not None:
            ts = self.clock.now().timestamp()
            os.utime(target, (ts, ts))

    def put_file(self, local: Path, remote: str) -> RemoteEntry:
        rel = _clean_remote(remote)
        target = self.root / rel
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(f".{target.name}.tmp-{uuid.uuid4().hex[:8]}")
            shutil.copyfile(local, tmp)
            self._stamp(tmp)
            tmp.replace(target)
        except OSError as exc:
            raise TransferError("write", str(exc)) from exc
        return self._entry(target)

    def put_bytes(self, data: bytes, remote: str) -> RemoteEntry:
        rel = _clean_remote(remote)
        target = self.root / rel
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(f".{target.name}.tmp-{uuid.uuid4().hex[:8]}")
            tmp.write_bytes(data)
            self._stamp(tmp)
            tmp.replace(target)
        except OSError as exc:
            raise TransferError("write", str(exc)) from exc
        return self._entry(target)

    def list(self, prefix: str = "") -> list[RemoteEntry]:
        base = self.root / _clean_remote(prefix) if prefix else self.root
        try:
            if not base.exists():
                return []
            entries = []
            for path in sorted(base.rglob("*")):
                if path.is_file() and not path.name.startswith("."):
                    entries.append(self._entry(path))
            return entries
        except OSError as exc:
            raise TransferError("read", str(exc)) from exc

    def mtime(self, remote: str) -> datetime:
        target = self.root / _clean_remote(remote)
        if not target.is_file():
            raise RemoteNotFoundError(remote)
        return self._entry(target).mtime

    def _entry(self, path: Path) -> RemoteEntry:
        st = path.stat()
        return RemoteEntry(
            path=path.relative_to(self.root).as_posix(),
            mtime=datetime.fromtimestamp(st.st_mtime, tz=UTC),
            size=st.st_size,
        )


class FtpEndpoint(TransferEndpoint):
    """Plain-FTP backend using store / list / modified-time verbs.

    Credentials fall back to SPECSENSE_FTP_USER / SPECSENSE_FTP_PASSWORD.
    A connection is opened per operation; clients are not shared across
    threads.
    """

    def __init__(
        self,
        host: str,
        port: int = 21,
        user: Optional[str] = None,
        password: Optional[str] = None,
        base_path: str = "",
        timeout_s: float = 30.0,
    ):
        self.host = host
        self.port = port
        self.user = user if user is not None else os.environ.get(FTP_USER_ENV, "anonymous")
        self.password = (
            password if password is not None else os.environ.get(FTP_PASSWORD_ENV, "")
        )
        self.base_path = base_path.strip("/")
        self.timeout_s = timeout_s

    def _connect(self) -> ftplib.FTP:
        ftp = ftplib.FTP()
        try:
            ftp.connect(self.host, self.port, timeout=self.timeout_s)
        except ftplib.all_errors as exc:  # includes OSError
            raise TransferError("connect", f"{self.host}:{self.port}: {exc}") from exc
        try:
            ftp.login(self.user, self.password)
        except ftplib.all_errors as exc:
            ftp.close()
            raise TransferError("auth", str(exc)) from exc
        return ftp

    def check(self) -> None:
        ftp = self._connect()
        ftp.quit()

    def _remote_path(self, remote: str) -> str:
        rel = _clean_remote(remote).as_posix()
        return f"{self.base_path}/{rel}" if self.base_path else rel

    def _ensure_dirs(self, ftp: ftplib.FTP, remote_dir: str) -> None:
        built = ""
        for part in PurePosixPath(remote_dir).parts:
            built = f"{built}/{part}" if built else part
            try:
                ftp.mkd(built)
            except ftplib.error_perm:
                pass  # already exists

    def put_file(self, local: Path, remote: str) -> RemoteEntry:
        return self.put_bytes(Path(local).read_bytes(), remote)

    def put_bytes(self, data: bytes, remote: str) -> RemoteEntry:
        full = self._remote_path(remote)
        parent = str(PurePosixPath(full).parent)
        tmp_name = f"{full}.tmp-{uuid.uuid4().hex[:8]}"
        ftp = self._connect()
        try:
            if parent not in ("", "."):
                self._ensure_dirs(ftp, parent)
            try:
                ftp.storbinary(f"STOR {tmp_name}", io.BytesIO(data))
                ftp.rename(tmp_name, full)
            except ftplib.all_errors as exc:
                try:
                    ftp.delete(tmp_name)
                except ftplib.all_errors:
                    pass
                raise TransferError("write", str(exc)) from exc
            mtime = self._mtime_open(ftp, full)
        finally:
            ftp.close()
        return RemoteEntry(path=remote, mtime=mtime, size=len(data))

    def list(self, prefix: str = "") -> list[RemoteEntry]:
        base = self._remote_path(prefix) if prefix else self.base_path
        ftp = self._connect()
        try:
            entries: list[RemoteEntry] = []
            self._walk(ftp, base, prefix.strip("/"), entries)
            return entries
        except ftplib.all_errors as exc:
            raise TransferError("read", str(exc)) from exc
        finally:
            ftp.close()

    def _walk(self, ftp: ftplib.FTP, base: str, rel: str, out: list[RemoteEntry]) -> None:
        try:
            listing = list(ftp.mlsd(base or "."))
        except ftplib.error_perm:
            return  # missing directory: empty listing
        for name, facts in listing:
            if name in (".", "..") or name.startswith("."):
                continue
            child = f"{base}/{name}" if base else name
            child_rel = f"{rel}/{name}" if rel else name
            if facts.get("type") == "dir":
                self._walk(ftp, child, child_rel, out)
            elif facts.get("type") == "file":
                mtime = _parse_ftp_time(facts.get("modify", ""))
                out.append(
                    RemoteEntry(path=child_rel, mtime=mtime, size=int(facts.get("size", 0)))
                )

    def mtime(self, remote: str) -> datetime:
        full = self._remote_path(remote)
        ftp = self._connect()
        try:
            return self._mtime_open(ftp, full)
        finally:
            ftp.close()

    def _mtime_open(self, ftp: ftplib.FTP, full: str) -> datetime:
        try:
            resp = ftp.sendcmd(f"MDTM {full}")
        except ftplib.error_perm as exc:
            raise RemoteNotFoundError(full) from exc
        except ftplib.all_errors as exc:
            raise TransferError("read", str(exc)) from exc
        return _parse_ftp_time(resp.split()[-1])


def _parse_ftp_time(stamp: str) -> datetime:
    stamp = stamp.split(".")[0]
    return datetime.strptime(stamp, "%Y%m%d%H%M%S").replace(tzinfo=UTC)
