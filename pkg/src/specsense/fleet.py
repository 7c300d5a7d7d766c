"""End-to-end orchestration: simulated agents + collector + monitor + store.

Everything runs single-process on one discrete-event scheduler over a
SimClock, so multi-day multi-site runs execute in seconds and are fully
deterministic. Fault windows inject the three failure modes: network block,
recorder halt, and archive-transfer suppression.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

from .agent import SiteAgent
from .clock import UTC, Clock, Scheduler, SimClock, ensure_utc, floor_hour
from .collector import Collector
from .config import PipelineConfig, SiteConfig
from .db import SiteInfo, Store
from .model import SiteParams, ThresholdSpec, build_channel_grid
from .monitor import OpsMonitor, WebhookNotifier
from .sim import (
    BandProfile,
    Environment,
    UnsupportedConfigError,
    binomial_au_interval,
    expected_au,
    generate_sweeps,
)
from .transfer import LocalDirEndpoint, TransferEndpoint, TransferError

logger = logging.getLogger(__name__)

FAULT_KINDS = ("network", "recorder", "transfer")


@dataclass(frozen=True)
class FaultWindow:
    site_id: str
    kind: str  # network | recorder | transfer
    start: datetime
    end: datetime

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        object.__setattr__(self, "start", ensure_utc(self.start))
        object.__setattr__(self, "end", ensure_utc(self.end))
        if not self.start < self.end:
            raise ValueError("fault window must have positive duration")


@dataclass
class FaultPlan:
    windows: list[FaultWindow] = field(default_factory=list)

    def active(self, kind: str, site_id: str, now: datetime) -> bool:
        return any(
            w.kind == kind and w.site_id == site_id and w.start <= now < w.end
            for w in self.windows
        )

    def expected_failure_types(self) -> set[tuple[str, str]]:
        mapping = {
            "network": "unreachable",
            "recorder": "collection_stopped",
            "transfer": "archive_missing",
        }
        return {(w.site_id, mapping[w.kind]) for w in self.windows}


class FaultEndpoint(TransferEndpoint):
    """Site-side endpoint wrapper that injects upload failures.

    A network fault fails every verb; a transfer fault fails only the daily
    archive upload (heartbeats keep flowing), matching the third failure mode.
    """

    def __init__(self, inner: TransferEndpoint, site_id: str, clock: Clock, plan: FaultPlan):
        self.inner = inner
        self.site_id = site_id
        self.clock = clock
        self.plan = plan

    def _guard(self, remote: str = "") -> None:
        now = self.clock.now()
        if self.plan.active("network", self.site_id, now):
            raise TransferError("connect", "injected network fault")
        if remote.endswith(".tar.xz") and self.plan.active("transfer", self.site_id, now):
            raise TransferError("write", "injected archive-transfer fault")

    def check(self) -> None:
        self._guard()
        self.inner.check()

    def put_file(self, local, remote):
        self._guard(remote)
        return self.inner.put_file(local, remote)

    def put_bytes(self, data, remote):
        self._guard(remote)
        return self.inner.put_bytes(data, remote)

    def list(self, prefix: str = ""):
        self._guard()
        return self.inner.list(prefix)

    def mtime(self, remote: str):
        self._guard()
        return self.inner.mtime(remote)


@dataclass
class VerificationResult:
    ok: bool
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append((name, passed, detail))
        self.ok = self.ok and passed

    def summary(self) -> str:
        lines = []
        for name, passed, detail in self.checks:
            mark = "PASS" if passed else "FAIL"
            lines.append(f"[{mark}] {name}" + (f": {detail}" if detail else ""))
        return "\n".join(lines)


class FleetSim:
    """Wires n simulated sites against one central stack on a shared scheduler."""

    def __init__(
        self,
        config: PipelineConfig,
        start: datetime,
        *,
        store: Optional[Store] = None,
        fault_plan: Optional[FaultPlan] = None,
        notifier: Optional[WebhookNotifier] = None,
        collector_lag_s: float = 1800.0,
        with_collector: bool = True,
    ):
        self.config = config
        self.start = ensure_utc(start)
        self.clock = SimClock(self.start)
        self.scheduler = Scheduler(self.clock)
        self.fault_plan = fault_plan or FaultPlan()
        self.store = store if store is not None else Store(":memory:")
        self._collector_lag_s = collector_lag_s
        self._with_collector = with_collector

        for root in (
            config.central_root,
            config.work_root,
            config.long_term_root,
            config.quarantine_root,
        ):
            Path(root).mkdir(parents=True, exist_ok=True)

        for site in config.sites:
            self.store.upsert_site(site.info, now=self.start)

        self.central_endpoint = LocalDirEndpoint(config.central_root, clock=self.clock)
        self.monitor = OpsMonitor(
            self.store,
            self.central_endpoint,
            self.clock,
            long_term_root=config.long_term_root,
            notifier=notifier,
            heartbeat_window_s=config.heartbeat_window_s,
            archive_max_age_s=config.archive_max_age_s,
            check_interval_s=config.check_interval_s,
        )
        self.collector = Collector(
            self.store,
            config.collector_config(),
            self.clock,
            alert_sink=self.monitor.notify_external,
        )
        self.agents: dict[str, SiteAgent] = {}
        for site in config.sites:
            endpoint = FaultEndpoint(
                LocalDirEndpoint(config.central_root, clock=self.clock),
                site.info.site_id,
                self.clock,
                self.fault_plan,
            )
            agent = SiteAgent(site.agent_config(), endpoint, self.clock)
            self.agents[site.info.site_id] = agent
            self._schedule_site(site, agent)

        self.monitor.schedule_on(self.scheduler)

    def _schedule_site(self, site: SiteConfig, agent: SiteAgent) -> None:
        env = site.environment
        site_id = site.info.site_id

        def feed_minute() -> None:
            end = self.clock.now()
            begin = end - timedelta(seconds=60)
            if self.fault_plan.active("recorder", site_id, begin):
                return  # scanner feed dead: nothing reaches the agent
            for sweep in generate_sweeps(env, begin, end, anchor=self.start):
                agent.process_sweep(sweep)

        self.scheduler.every(
            60.0, feed_minute, first_at=self.start + timedelta(seconds=60), name=f"{site_id}-feed"
        )
        agent.schedule_on(self.scheduler)

        if not self._with_collector:
            return

        def ingest_tick() -> None:
            self.collector.ingest_pending(site_id)
            self.scheduler.at(
                agent.next_daily_run(self.clock.now()) + timedelta(seconds=self._collector_lag_s),
                ingest_tick,
                name=f"{site_id}-ingest",
                priority=5,
            )

        self.scheduler.at(
            agent.next_daily_run(self.clock.now()) + timedelta(seconds=self._collector_lag_s),
            ingest_tick,
            name=f"{site_id}-ingest",
            priority=5,
        )

    def run(self, until: datetime, acceleration: float = 0.0) -> None:
        """Advance the fleet to `until`; acceleration>0 caps sim-seconds per wall-second."""
        until = ensure_utc(until)
        if acceleration <= 0:
            self.scheduler.run_until(until)
            return
        wall_start = _time.monotonic()
        step = timedelta(seconds=60)
        target = self.clock.now()
        while target < until:
            target = min(target + step, until)
            self.scheduler.run_until(target)
            budget = (target - self.start).total_seconds() / acceleration
            ahead = budget - (_time.monotonic() - wall_start)
            if ahead > 0:
                _time.sleep(ahead)

    def close(self) -> None:
        for agent in self.agents.values():
            agent.stop()

    # -- verification -----------------------------------------------------------

    def verify(self, expected_days: int, expect_faults: bool = False) -> VerificationResult:
        result = VerificationResult(ok=True)
        self._verify_rows(result, expected_days)
        self._verify_oracle(result)
        self._verify_alerts(result, expect_faults)
        return result

    def _verify_rows(self, result: VerificationResult, expected_days: int) -> None:
        for site in self.config.sites:
            env = site.environment
            grid = build_channel_grid(
                env.freq_start_hz, env.freq_stop_hz, site.info.channel_width_hz
            )
            expected = expected_days * 24 * len(grid)
            actual = self.store.au_row_count(site.info.site_id)
            result.add(
                f"row-count {site.info.site_id}",
                actual == expected,
                f"{actual} rows (expected {expected})",
            )

    def _verify_oracle(self, result: VerificationResult) -> None:
        worst = 0.0
        failures = 0
        records = 0
        for site in self.config.sites:
            env = site.environment
            threshold = ThresholdSpec(site.info.threshold_ref_dbm, site.info.ref_bandwidth_hz)
            per_bin = threshold.per_bin(env.rbw_hz)
            for record in self.store.query_au(site.info.site_id):
                if not record.complete or record.au_percent is None:
                    continue
                records += 1
                channel = (record.channel_start_hz, record.channel_stop_hz)
                try:
                    expected = expected_au(env, channel, record.hour_start, per_bin)
                except UnsupportedConfigError:
                    expected = self._empirical_au(env, channel, record.hour_start, per_bin)
                lo, hi = binomial_au_interval(expected, record.total_sweeps)
                if not lo <= record.au_percent <= hi:
                    failures += 1
                worst = max(worst, abs(record.au_percent - expected))
        result.add(
            "oracle-match",
            failures == 0 and records > 0,
            f"{records} complete records, {failures} outside the 99.9% interval, "
            f"max deviation {worst:.2f} points",
        )

    @staticmethod
    def _empirical_au(
        env: Environment, channel: tuple[float, float], hour: datetime, per_bin: float
    ) -> float:
        """Slow counting fallback for layouts the analytic oracle refuses."""
        hour = floor_hour(hour)
        occupied = 0
        total = 0
        for sweep in generate_sweeps(env, hour, hour + timedelta(hours=1)):
            total += 1
            for f, p in zip(sweep.freqs_hz, sweep.powers_dbm):
                if channel[0] <= f < channel[1] and p > per_bin:
                    occupied += 1
                    break
        return 100.0 * occupied / total if total else 0.0

    def _verify_alerts(self, result: VerificationResult, expect_faults: bool) -> None:
        raised = {(row["site_id"], row["failure_type"]) for row in self.store.list_alerts()}
        if expect_faults:
            expected = self.fault_plan.expected_failure_types()
            result.add(
                "alerts-match-fault-plan",
                raised == expected,
                f"raised {sorted(raised)}, planned {sorted(expected)}",
            )
        else:
            result.add("zero-alerts", not raised, f"raised {sorted(raised)}")


# daytime-high diurnal schedule: quiet nights, busy working hours
DIURNAL_ACTIVITY = (
    (0.05,) * 7 + (0.3, 0.5) + (0.7,) * 9 + (0.3,) + (0.05,) * 5
)

_DEMO_TIMEZONES = ("UTC", "America/Denver", "America/New_York")


def build_demo_config(
    n_sites: int,
    root: Path,
    *,
    sweep_time_s: float = 2.0,
    activity=DIURNAL_ACTIVITY,
    timezones=_DEMO_TIMEZONES,
    heartbeat_interval_s: float = 300.0,
    seed: int = 1000,
) -> PipelineConfig:
    """Synthetic multi-site deployment under one scratch root.

    Each site watches a 20 MHz span (4 five-MHz channels, 1 MHz bins) with a
    single 4 MHz band in channel 2 following the given activity schedule.
    """
    root = Path(root)
    sites = []
    for i in range(n_sites):
        site_id = f"site{i + 1:02d}"
        tz = timezones[i % len(timezones)]
        env = Environment(
            site_id=site_id,
            freq_start_hz=3.000e9,
            freq_stop_hz=3.020e9,
            rbw_hz=1.0e6,
            noise_floor_dbm=-100.0,
            noise_sigma_db=2.0,
            bands=(
                BandProfile(
                    center_hz=3.0125e9,
                    bandwidth_hz=4.0e6,
                    active_power_dbm=-60.0,
                    activity=activity,
                ),
            ),
            seed=seed + i,
            sweep_time_s=sweep_time_s,
            timezone=tz,
        )
        params = SiteParams(
            site_id=site_id,
            freq_start_hz=env.freq_start_hz,
            freq_stop_hz=env.freq_stop_hz,
            rbw_hz=env.rbw_hz,
            sweep_time_s=env.sweep_time_s,
            latitude=39.0 + i,
            longitude=-105.0 - i,
            antenna_type="discone",
            lna_type="none",
            timezone=tz,
            gate_threshold_dbm=-88.0,
        )
        info = SiteInfo(
            site_id=site_id,
            name=f"Demo site {i + 1}",
            latitude=params.latitude,
            longitude=params.longitude,
            timezone=tz,
            threshold_ref_dbm=-72.0,
        )
        sites.append(
            SiteConfig(
                info=info,
                params=params,
                environment=env,
                data_dir=root / "sites" / site_id,
                heartbeat_interval_s=heartbeat_interval_s,
                archive_hour=1,
            )
        )
    central = root / "central"
    return PipelineConfig(
        path=None,
        sites=sites,
        central_root=central,
        work_root=root / "work",
        long_term_root=root / "long-term",
        quarantine_root=root / "quarantine",
        db_path=root / "specsense.db",
        webhook_url=None,
        threshold_ref_dbm=-72.0,
        ref_bandwidth_hz=20e6,
        channel_width_hz=5e6,
        min_coverage_fraction=0.9,
    )


def demo_end_time(config: PipelineConfig, start: datetime, days: int) -> datetime:
    """Earliest instant by which every site's last day is archived and ingested."""
    start = ensure_utc(start)
    end = start + timedelta(days=days)
    latest = end
    for site in config.sites:
        tz = site.params.tzinfo()
        local = end.astimezone(tz).replace(
            hour=site.archive_hour, minute=0, second=0, microsecond=0
        )
        if local.astimezone(UTC) < end:
            local += timedelta(days=1)
        ingest_at = local.astimezone(UTC) + timedelta(minutes=35)
        latest = max(latest, ingest_at)
    return latest + timedelta(minutes=10)


def run_demo(
    n_sites: int,
    days: int,
    acceleration: float = 0.0,
    *,
    root: Optional[Path] = None,
    start: Optional[datetime] = None,
    fault_plan: Optional[FaultPlan] = None,
    sweep_time_s: float = 2.0,
) -> tuple[int, str]:
    """Spin up the whole pipeline at desk scale and verify it; returns (exit, summary)."""
    import tempfile

    if root is None:
        root = Path(tempfile.mkdtemp(prefix="specsense-demo-"))
    root = Path(root)
    if start is None:
        start = datetime(2025, 6, 2, tzinfo=UTC)
    start = ensure_utc(start)

    config = build_demo_config(n_sites, root, sweep_time_s=sweep_time_s)
    store = Store(config.db_path)
    fleet = FleetSim(config, start, store=store, fault_plan=fault_plan)
    try:
        until = demo_end_time(config, start, days)
        fleet.run(until, acceleration=acceleration)
        result = fleet.verify(expected_days=days, expect_faults=fault_plan is not None)
    finally:
        fleet.close()
        store.close()

    lines = [
        f"demo: {n_sites} site(s), {days} day(s), data root {root}",
        result.summary() if result.checks else "[PASS] no sites configured: clean no-op",
    ]
    return (0 if result.ok else 1), "\n".join(lines)
