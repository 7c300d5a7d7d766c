"""Shared declarative config for all CLI subcommands.

One YAML file, per-module sections. Validation is exhaustive and fail-fast:
unknown or missing keys abort with the key path and file location before any
side effect happens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .agent import DEFAULT_ARCHIVE_HOUR, DEFAULT_HEARTBEAT_INTERVAL_S, AgentConfig
from .collector import CollectorConfig
from .db import SiteInfo
from .model import (
    DEFAULT_CHANNEL_WIDTH_HZ,
    DEFAULT_MIN_COVERAGE_FRACTION,
    DEFAULT_REF_BANDWIDTH_HZ,
    SiteParams,
)
from .monitor import (
    DEFAULT_ARCHIVE_MAX_AGE_S,
    DEFAULT_CHECK_INTERVAL_S,
    DEFAULT_HEARTBEAT_WINDOW_S,
)
from .sim import BandProfile, Environment


class ConfigError(Exception):
    """Invalid config; message carries the file and the offending key path."""


_BAND_KEYS = {"center_hz", "bandwidth_hz", "active_power_dbm", "activity"}
_ENV_KEYS = {
    "freq_start_hz",
    "freq_stop_hz",
    "rbw_hz",
    "noise_floor_dbm",
    "noise_sigma_db",
    "seed",
    "sweep_time_s",
    "bands",
}
_SITE_KEYS = {
    "site_id",
    "name",
    "latitude",
    "longitude",
    "timezone",
    "antenna_type",
    "lna_type",
    "gate_threshold_dbm",
    "archive_hour",
    "heartbeat_interval_s",
    "data_dir",
    "environment",
}
_ANALYSIS_KEYS = {
    "threshold_ref_dbm",
    "ref_bandwidth_hz",
    "channel_width_hz",
    "min_coverage_fraction",
}
_CENTRAL_KEYS = {
    "root",
    "work_root",
    "long_term_root",
    "quarantine_root",
    "db_path",
    "webhook_url",
    "analysis",
}
_TRANSFER_KEYS = {"backend", "ftp"}
_FTP_KEYS = {"host", "port", "user", "password", "base_path"}
_MONITOR_KEYS = {"check_interval_s", "heartbeat_window_s", "archive_max_age_s"}
_API_KEYS = {"host", "port", "session_ttl_s"}
_TOP_KEYS = {"sites", "central", "transfer", "monitor", "api"}


@dataclass
class SiteConfig:
    info: SiteInfo
    params: SiteParams
    environment: Environment
    data_dir: Path
    heartbeat_interval_s: float
    archive_hour: int

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            site_id=self.info.site_id,
            site_params=self.params,
            data_dir=self.data_dir,
            heartbeat_interval_s=self.heartbeat_interval_s,
            archive_hour=self.archive_hour,
        )


@dataclass
class PipelineConfig:
    path: Optional[Path]
    sites: list[SiteConfig]
    central_root: Path
    work_root: Path
    long_term_root: Path
    quarantine_root: Path
    db_path: Path
    webhook_url: Optional[str]
    threshold_ref_dbm: float
    ref_bandwidth_hz: float
    channel_width_hz: float
    min_coverage_fraction: float
    transfer_backend: str = "local-dir"
    ftp: dict = field(default_factory=dict)
    check_interval_s: float = DEFAULT_CHECK_INTERVAL_S
    heartbeat_window_s: float = DEFAULT_HEARTBEAT_WINDOW_S
    archive_max_age_s: float = DEFAULT_ARCHIVE_MAX_AGE_S
    api_host: str = "127.0.0.1"
    api_port: int = 8080
    session_ttl_s: float = 24 * 3600

    def collector_config(self) -> CollectorConfig:
        return CollectorConfig(
            inbox_root=self.central_root,
            work_root=self.work_root,
            long_term_root=self.long_term_root,
            quarantine_root=self.quarantine_root,
            min_coverage_fraction=self.min_coverage_fraction,
        )

    def site(self, site_id: str) -> SiteConfig:
        for site in self.sites:
            if site.info.site_id == site_id:
                return site
        raise ConfigError(f"no site {site_id!r} in config")


class _Section:
    """Mapping wrapper that records its key path for error messages."""

    def __init__(self, data: Any, path: str, origin: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{origin}: section '{path}' must be a mapping")
        self.data = data
        self.path = path
        self.origin = origin

    def check_keys(self, allowed: set) -> None:
        unknown = set(self.data) - allowed
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(
                f"{self.origin}: unknown key '{self.path}.{key}'"
                if self.path
                else f"{self.origin}: unknown key '{key}'"
            )

    def _key_path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def require(self, key: str, kind=None):
        if key not in self.data:
            raise ConfigError(f"{self.origin}: missing required key '{self._key_path(key)}'")
        return self._typed(key, self.data[key], kind)

    def get(self, key: str, default=None, kind=None):
        if key not in self.data or self.data[key] is None:
            return default
        return self._typed(key, self.data[key], kind)

    def _typed(self, key: str, value, kind):
        if kind is None:
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(
                    f"{self.origin}: key '{self._key_path(key)}' must be a number"
                )
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(
                    f"{self.origin}: key '{self._key_path(key)}' must be an integer"
                )
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError(
                    f"{self.origin}: key '{self._key_path(key)}' must be a string"
                )
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ConfigError(f"{self.origin}: key '{self._key_path(key)}' must be a list")
            return value
        return value

    def section(self, key: str, required: bool = True) -> Optional["_Section"]:
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(
                    f"{self.origin}: missing required section '{self._key_path(key)}'"
                )
            return None
        return _Section(self.data[key], self._key_path(key), self.origin)


def _parse_band(section: _Section) -> BandProfile:
    section.check_keys(_BAND_KEYS)
    activity = section.require("activity")
    if isinstance(activity, list):
        activity = tuple(float(p) for p in activity)
    elif isinstance(activity, (int, float)):
        activity = (float(activity),) * 24
    else:
        raise ConfigError(
            f"{section.origin}: key '{section.path}.activity' must be a number or 24-entry list"
        )
    try:
        return BandProfile(
            center_hz=section.require("center_hz", float),
            bandwidth_hz=section.require("bandwidth_hz", float),
            active_power_dbm=section.require("active_power_dbm", float),
            activity=activity,
        )
    except ValueError as exc:
        raise ConfigError(f"{section.origin}: invalid band at '{section.path}': {exc}")


def _parse_site(section: _Section, defaults: "_Defaults") -> SiteConfig:
    section.check_keys(_SITE_KEYS)
    site_id = section.require("site_id", str)
    env_section = section.section("environment")
    env_section.check_keys(_ENV_KEYS)

    bands = []
    for i, band_data in enumerate(env_section.get("bands", [], list) or []):
        bands.append(_parse_band(_Section(band_data, f"{env_section.path}.bands[{i}]", section.origin)))

    try:
        environment = Environment(
            site_id=site_id,
            freq_start_hz=env_section.require("freq_start_hz", float),
            freq_stop_hz=env_section.require("freq_stop_hz", float),
            rbw_hz=env_section.require("rbw_hz", float),
            noise_floor_dbm=env_section.require("noise_floor_dbm", float),
            noise_sigma_db=env_section.get("noise_sigma_db", 0.0, float),
            bands=tuple(bands),
            seed=env_section.require("seed", int),
            sweep_time_s=env_section.get("sweep_time_s", 1.0, float),
            timezone=section.get("timezone", "UTC", str),
        )
        params = SiteParams(
            site_id=site_id,
            freq_start_hz=environment.freq_start_hz,
            freq_stop_hz=environment.freq_stop_hz,
            rbw_hz=environment.rbw_hz,
            sweep_time_s=environment.sweep_time_s,
            latitude=section.require("latitude", float),
            longitude=section.require("longitude", float),
            antenna_type=section.get("antenna_type", "omni", str),
            lna_type=section.get("lna_type", "none", str),
            timezone=environment.timezone,
            gate_threshold_dbm=section.require("gate_threshold_dbm", float),
        )
    except ValueError as exc:
        raise ConfigError(f"{section.origin}: invalid site '{site_id}': {exc}")

    info = SiteInfo(
        site_id=site_id,
        name=section.get("name", site_id, str),
        latitude=params.latitude,
        longitude=params.longitude,
        timezone=params.timezone,
        threshold_ref_dbm=defaults.threshold_ref_dbm,
        ref_bandwidth_hz=defaults.ref_bandwidth_hz,
        channel_width_hz=defaults.channel_width_hz,
    )
    return SiteConfig(
        info=info,
        params=params,
        environment=environment,
        data_dir=Path(section.get("data_dir", f"data/{site_id}", str)),
        heartbeat_interval_s=section.get(
            "heartbeat_interval_s", DEFAULT_HEARTBEAT_INTERVAL_S, float
        ),
        archive_hour=section.get("archive_hour", DEFAULT_ARCHIVE_HOUR, int),
    )


@dataclass
class _Defaults:
    threshold_ref_dbm: float
    ref_bandwidth_hz: float
    channel_width_hz: float


def load_config(path: Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    return parse_config(raw, origin=str(path))


def parse_config(raw: Any, origin: str = "<config>") -> PipelineConfig:
    root = _Section(raw if raw is not None else {}, "", origin)
    root.check_keys(_TOP_KEYS)

    central = root.section("central")
    central.check_keys(_CENTRAL_KEYS)
    analysis = central.section("analysis", required=False)
    if analysis is not None:
        analysis.check_keys(_ANALYSIS_KEYS)
    defaults = _Defaults(
        threshold_ref_dbm=(
            analysis.get("threshold_ref_dbm", -72.0, float) if analysis else -72.0
        ),
        ref_bandwidth_hz=(
            analysis.get("ref_bandwidth_hz", DEFAULT_REF_BANDWIDTH_HZ, float)
            if analysis
            else DEFAULT_REF_BANDWIDTH_HZ
        ),
        channel_width_hz=(
            analysis.get("channel_width_hz", DEFAULT_CHANNEL_WIDTH_HZ, float)
            if analysis
            else DEFAULT_CHANNEL_WIDTH_HZ
        ),
    )

    sites_data = root.require("sites", list)
    sites = []
    for i, site_data in enumerate(sites_data):
        sites.append(_parse_site(_Section(site_data, f"sites[{i}]", origin), defaults))
    seen = set()
    for site in sites:
        if site.info.site_id in seen:
            raise ConfigError(f"{origin}: duplicate site_id '{site.info.site_id}'")
        seen.add(site.info.site_id)

    transfer = root.section("transfer", required=False)
    backend = "local-dir"
    ftp: dict = {}
    if transfer is not None:
        transfer.check_keys(_TRANSFER_KEYS)
        backend = transfer.get("backend", "local-dir", str)
        if backend not in ("local-dir", "ftp"):
            raise ConfigError(f"{origin}: key 'transfer.backend' must be local-dir or ftp")
        ftp_section = transfer.section("ftp", required=(backend == "ftp"))
        if ftp_section is not None:
            ftp_section.check_keys(_FTP_KEYS)
            ftp = {
                "host": ftp_section.require("host", str),
                "port": ftp_section.get("port", 21, int),
                "user": ftp_section.get("user", None, str),
                "password": ftp_section.get("password", None, str),
                "base_path": ftp_section.get("base_path", "", str),
            }

    monitor = root.section("monitor", required=False)
    if monitor is not None:
        monitor.check_keys(_MONITOR_KEYS)

    api = root.section("api", required=False)
    if api is not None:
        api.check_keys(_API_KEYS)

    central_root = Path(central.require("root", str))
    return PipelineConfig(
        path=Path(origin) if origin != "<config>" else None,
        sites=sites,
        central_root=central_root,
        work_root=Path(central.get("work_root", str(central_root / "work"), str)),
        long_term_root=Path(central.get("long_term_root", str(central_root / "long-term"), str)),
        quarantine_root=Path(
            central.get("quarantine_root", str(central_root / "quarantine"), str)
        ),
        db_path=Path(central.get("db_path", str(central_root / "specsense.db"), str)),
        webhook_url=central.get("webhook_url", None, str),
        threshold_ref_dbm=defaults.threshold_ref_dbm,
        ref_bandwidth_hz=defaults.ref_bandwidth_hz,
        channel_width_hz=defaults.channel_width_hz,
        min_coverage_fraction=(
            analysis.get("min_coverage_fraction", DEFAULT_MIN_COVERAGE_FRACTION, float)
            if analysis
            else DEFAULT_MIN_COVERAGE_FRACTION
        ),
        transfer_backend=backend,
        ftp=ftp,
        check_interval_s=monitor.get("check_interval_s", DEFAULT_CHECK_INTERVAL_S, float)
        if monitor
        else DEFAULT_CHECK_INTERVAL_S,
        heartbeat_window_s=monitor.get("heartbeat_window_s", DEFAULT_HEARTBEAT_WINDOW_S, float)
        if monitor
        else DEFAULT_HEARTBEAT_WINDOW_S,
        archive_max_age_s=monitor.get("archive_max_age_s", DEFAULT_ARCHIVE_MAX_AGE_S, float)
        if monitor
        else DEFAULT_ARCHIVE_MAX_AGE_S,
        api_host=api.get("host", "127.0.0.1", str) if api else "127.0.0.1",
        api_port=api.get("port", 8080, int) if api else 8080,
        session_ttl_s=api.get("session_ttl_s", 24 * 3600.0, float) if api else 24 * 3600.0,
    )
