"""Single entry point wiring all pipeline roles.

Subcommands: simulate | agent | collector | monitor | serve | demo.
Exit codes: 0 ok, 1 check failure, 2 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import threading
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

from .agent import SiteAgent
from .clock import UTC, Scheduler, SimClock, WallClock, ensure_utc, floor_minute, parse_day
from .collector import Collector
from .config import ConfigError, PipelineConfig, load_config
from .db import Store
from .fleet import run_demo
from .monitor import OpsMonitor, WebhookNotifier
from .sim import generate_sweep, generate_sweeps
from .transfer import FtpEndpoint, LocalDirEndpoint, TransferEndpoint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _endpoint_for(config: PipelineConfig, clock) -> TransferEndpoint:
    if config.transfer_backend == "ftp":
        ftp = config.ftp
        return FtpEndpoint(
            host=ftp["host"],
            port=ftp.get("port", 21),
            user=ftp.get("user"),
            password=ftp.get("password"),
            base_path=ftp.get("base_path", ""),
        )
    config.central_root.mkdir(parents=True, exist_ok=True)
    return LocalDirEndpoint(config.central_root, clock=clock)


def _load(args) -> PipelineConfig:
    return load_config(Path(args.config))


def _parse_start(value: Optional[str]) -> datetime:
    if value is None:
        return floor_minute(datetime.now(UTC))
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return ensure_utc(dt)


def cmd_simulate(args) -> int:
    import dataclasses

    config = _load(args)
    site = config.site(args.site)
    start = _parse_start(args.start)
    out_dir = Path(args.out) if args.out else site.data_dir
    clock = SimClock(start)
    endpoint = LocalDirEndpoint(config.central_root, clock=clock)
    agent_config = dataclasses.replace(site.agent_config(), data_dir=out_dir)
    agent = SiteAgent(agent_config, endpoint, clock)
    end = start + timedelta(hours=args.hours)
    for sweep in generate_sweeps(site.environment, start, end):
        clock.advance_to(sweep.start_time)
        agent.process_sweep(sweep)
    clock.advance_to(end)
    agent.stop()
    print(
        f"simulated {agent.sweeps_processed} sweeps over {args.hours} h "
        f"({agent.sweeps_stored} stored) into {out_dir}"
    )
    return EXIT_OK


def cmd_agent(args) -> int:
    config = _load(args)
    site = config.site(args.site)
    if args.clock == "accelerated":
        start = _parse_start(args.start)
        clock = SimClock(start)
        scheduler = Scheduler(clock)
        endpoint = _endpoint_for(config, clock)
        agent = SiteAgent(site.agent_config(), endpoint, clock)

        def feed_minute() -> None:
            end = clock.now()
            for sweep in generate_sweeps(
                site.environment, end - timedelta(seconds=60), end, anchor=start
            ):
                agent.process_sweep(sweep)

        scheduler.every(60.0, feed_minute, first_at=start + timedelta(seconds=60))
        agent.schedule_on(scheduler)
        scheduler.run_until(start + timedelta(hours=args.hours))
        agent.stop()
        print(
            f"agent {args.site}: processed {agent.sweeps_processed} sweeps, "
            f"stored {agent.sweeps_stored}, heartbeats {agent.heartbeat_attempts}"
        )
        return EXIT_OK

    clock = WallClock()
    scheduler = Scheduler(clock)
    endpoint = _endpoint_for(config, clock)
    agent = SiteAgent(site.agent_config(), endpoint, clock)
    agent.schedule_on(scheduler)
    stop = threading.Event()
    timer_thread = threading.Thread(
        target=lambda: scheduler.run_forever(stop=stop.is_set), daemon=True
    )
    timer_thread.start()
    env = site.environment
    print(f"agent {args.site}: recording (Ctrl-C to stop)")
    try:
        t = floor_minute(clock.now())
        while True:
            now = clock.now()
            if t > now:
                clock.sleep(min((t - now).total_seconds(), 1.0))
                continue
            agent.process_sweep(generate_sweep(env, t))
            t += timedelta(seconds=env.sweep_time_s)
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        agent.stop()
    return EXIT_OK


def _make_collector(config: PipelineConfig, clock) -> tuple[Collector, Store]:
    store = Store(config.db_path)
    for site in config.sites:
        store.upsert_site(site.info, now=clock.now())
    notifier = WebhookNotifier(config.webhook_url) if config.webhook_url else None
    monitor = OpsMonitor(
        store,
        _endpoint_for(config, clock),
        clock,
        long_term_root=config.long_term_root,
        notifier=notifier,
    )
    collector = Collector(
        store, config.collector_config(), clock, alert_sink=monitor.notify_external
    )
    return collector, store


def cmd_collector(args) -> int:
    config = _load(args)
    clock = WallClock()
    collector, store = _make_collector(config, clock)
    try:
        if args.collector_cmd == "ingest":
            report = collector.ingest_daily(args.site, parse_day(args.day))
            print(
                f"{report.site_id} {report.day}: {report.status} "
                f"({report.rows} rows, {report.hours} hours, {report.channels} channels)"
                + (f" - {report.message}" if report.message else "")
            )
            return EXIT_OK if report.status in ("ingested", "no-archive") else EXIT_CHECK_FAILURE
        # run --all
        reports = []
        for site in config.sites:
            reports.extend(collector.ingest_pending(site.info.site_id))
        for report in reports:
            print(f"{report.site_id} {report.day}: {report.status} ({report.rows} rows)")
        bad = [r for r in reports if r.status not in ("ingested", "no-archive")]
        return EXIT_CHECK_FAILURE if bad else EXIT_OK
    finally:
        store.close()


def cmd_monitor(args) -> int:
    config = _load(args)
    clock = WallClock()
    store = Store(config.db_path)
    for site in config.sites:
        store.upsert_site(site.info, now=clock.now())
    notifier = WebhookNotifier(config.webhook_url) if config.webhook_url else None
    monitor = OpsMonitor(
        store,
        _endpoint_for(config, clock),
        clock,
        long_term_root=config.long_term_root,
        notifier=notifier,
        heartbeat_window_s=config.heartbeat_window_s,
        archive_max_age_s=config.archive_max_age_s,
        check_interval_s=config.check_interval_s,
    )
    try:
        statuses = monitor.run_checks()
        for status in statuses:
            print(
                f"{status.site_id}: reach={status.reachability} "
                f"collect={status.collection} archive={status.archive}"
            )
        if args.once:
            return EXIT_OK
        scheduler = Scheduler(clock)
        monitor.schedule_on(scheduler)
        print(f"monitor: checking every {config.check_interval_s:.0f}s (Ctrl-C to stop)")
        try:
            scheduler.run_forever()
        except KeyboardInterrupt:
            pass
        return EXIT_OK
    finally:
        store.close()


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = _load(args)
    store = Store(config.db_path)
    for site in config.sites:
        store.upsert_site(site.info, now=WallClock().now())
    app = create_app(store, WallClock(), session_ttl_s=config.session_ttl_s)
    port = args.port if args.port is not None else config.api_port
    uvicorn.run(app, host=config.api_host, port=port, log_level="info")
    return EXIT_OK


def cmd_demo(args) -> int:
    code, summary = run_demo(
        args.sites,
        args.days,
        acceleration=args.acceleration,
        root=Path(args.root) if args.root else None,
        start=_parse_start(args.start) if args.start else None,
    )
    print(summary)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specsense",
        description="Distributed spectrum sensing and airtime-utilization pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate recorded sweep data for one site")
    p.add_argument("--config", required=True)
    p.add_argument("--site", required=True)
    p.add_argument("--hours", type=float, default=1.0)
    p.add_argument("--start", help="ISO start time (default: now, UTC)")
    p.add_argument("--out", help="output data dir (default: the site's data_dir)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("agent", help="run a site agent")
    p.add_argument("--config", required=True)
    p.add_argument("--site", required=True)
    p.add_argument("--clock", choices=["wall", "accelerated"], default="wall")
    p.add_argument("--hours", type=float, default=24.0, help="accelerated-mode duration")
    p.add_argument("--start", help="accelerated-mode ISO start time")
    p.set_defaults(fn=cmd_agent)

    p = sub.add_parser("collector", help="central ingest")
    csub = p.add_subparsers(dest="collector_cmd", required=True)
    c = csub.add_parser("ingest", help="ingest one site-day from the inbox")
    c.add_argument("--config", required=True)
    c.add_argument("--site", required=True)
    c.add_argument("--day", required=True, help="YYYY-MM-DD or YYYYMMDD")
    c.set_defaults(fn=cmd_collector)
    c = csub.add_parser("run", help="ingest everything pending for all sites")
    c.add_argument("--config", required=True)
    c.add_argument("--all", action="store_true", help="accepted for compatibility")
    c.set_defaults(fn=cmd_collector)

    p = sub.add_parser("monitor", help="ops watchdog")
    msub = p.add_subparsers(dest="monitor_cmd", required=True)
    m = msub.add_parser("run", help="run failure detectors")
    m.add_argument("--config", required=True)
    m.add_argument("--once", action="store_true", help="one check pass, then exit")
    m.set_defaults(fn=cmd_monitor)

    p = sub.add_parser("serve", help="run the query API")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("demo", help="accelerated end-to-end run with verification")
    p.add_argument("--sites", type=int, default=3)
    p.add_argument("--days", type=int, default=2)
    p.add_argument(
        "--acceleration",
        type=float,
        default=0.0,
        help="sim seconds per wall second; 0 = as fast as possible",
    )
    p.add_argument("--root", help="scratch dir (default: a fresh temp dir)")
    p.add_argument("--start", help="ISO start time (default 2025-06-02T00:00Z)")
    p.set_defaults(fn=cmd_demo)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
