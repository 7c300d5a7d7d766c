"""Injectable clocks, a discrete-event scheduler, and UTC time helpers.

Every component takes a Clock instead of calling datetime.now() so that test
runs and the demo can fast-forward days of simulated operation in seconds.
"""

from __future__ import annotations

import heapq
import itertools
import time as _time
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Callable, Optional

UTC = timezone.utc
EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


def utc(year, month, day, hour=0, minute=0, second=0, microsecond=0) -> datetime:
    return datetime(year, month, day, hour, minute, second, microsecond, tzinfo=UTC)


def ensure_utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        raise ValueError("naive datetime; all pipeline timestamps are tz-aware UTC")
    return dt.astimezone(UTC)


def epoch_us(dt: datetime) -> int:
    """Microseconds since the UNIX epoch, exact (no float round-trip)."""
    return (ensure_utc(dt) - EPOCH) // timedelta(microseconds=1)


def from_epoch_us(us: int) -> datetime:
    return EPOCH + timedelta(microseconds=int(us))


def floor_minute(dt: datetime) -> datetime:
    dt = ensure_utc(dt)
    return dt.replace(second=0, microsecond=0)


def floor_hour(dt: datetime) -> datetime:
    dt = ensure_utc(dt)
    return dt.replace(minute=0, second=0, microsecond=0)


def floor_day(dt: datetime) -> datetime:
    dt = ensure_utc(dt)
    return dt.replace(hour=0, minute=0, second=0, microsecond=0)


def day_key(d) -> str:
    """YYYYMMDD partition key for a date or UTC datetime."""
    if isinstance(d, datetime):
        d = ensure_utc(d).date()
    return d.strftime("%Y%m%d")


def minute_key(dt: datetime) -> str:
    return ensure_utc(dt).strftime("%H%M")


def hour_key(dt: datetime) -> str:
    return ensure_utc(dt).strftime("%H")


def parse_day(text: str) -> date:
    """Accepts YYYYMMDD or YYYY-MM-DD."""
    text = text.strip()
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognized day {text!r}; expected YYYYMMDD or YYYY-MM-DD")


def iso_hour(dt: datetime) -> str:
    """Canonical text form used for hour keys in the store: YYYY-MM-DDTHH:00:00Z."""
    dt = floor_hour(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_iso_hour(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=UTC)


def iso_ts(dt: datetime) -> str:
    """Lexicographically sortable instant form with microseconds."""
    return ensure_utc(dt).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_iso_ts(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=UTC)


class Clock:
    """Source of the current UTC time; subclasses decide how time moves."""

    def now(self) -> datetime:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class WallClock(Clock):
    def now(self) -> datetime:
        return datetime.now(UTC)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            _time.sleep(seconds)


class SimClock(Clock):
    """Manually advanced clock; never moves on its own."""

    def __init__(self, start: datetime):
        self._now = ensure_utc(start)

    def now(self) -> datetime:
        return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> datetime:
        if seconds < 0:
            raise ValueError("sim clock cannot move backwards")
        self._now += timedelta(seconds=seconds)
        return self._now

    def advance_to(self, when: datetime) -> datetime:
        when = ensure_utc(when)
        if when < self._now:
            raise ValueError("sim clock cannot move backwards")
        self._now = when
        return self._now


@dataclass(order=True)
class _Task:
    when: datetime
    priority: int
    seq: int
    name: str = field(compare=False)
    fn: Callable[[], None] = field(compare=False)
    interval: Optional[float] = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


class TaskHandle:
    def __init__(self, task: _Task):
        self._task = task

    def cancel(self) -> None:
        self._task.cancelled = True


class Scheduler:
    """Priority-queue event loop over an injected clock.

    In sim mode run_until() advances the SimClock to each due event, firing
    tasks in (time, priority, insertion) order, which makes multi-component
    runs fully deterministic. In wall mode run_forever() sleeps between events.
    """

    def __init__(self, clock: Clock):
        self.clock = clock
        self._heap: list[_Task] = []
        self._seq = itertools.count()

    def at(self, when: datetime, fn: Callable[[], None], *, name: str = "", priority: int = 0) -> TaskHandle:
        task = _Task(ensure_utc(when), priority, next(self._seq), name, fn)
        heapq.heappush(self._heap, task)
        return TaskHandle(task)

    def every(
        self,
        interval_s: float,
        fn: Callable[[], None],
        *,
        first_at: Optional[datetime] = None,
        name: str = "",
        priority: int = 0,
    ) -> TaskHandle:
        if interval_s <= 0:
            raise ValueError("interval must be positive")
        when = ensure_utc(first_at) if first_at is not None else self.clock.now()
        task = _Task(when, priority, next(self._seq), name, fn, interval=interval_s)
        heapq.heappush(self._heap, task)
        return TaskHandle(task)

    def _fire(self, task: _Task) -> None:
        task.fn()
        if task.interval is not None and not task.cancelled:
            nxt = _Task(
                task.when + timedelta(seconds=task.interval),
                task.priority,
                next(self._seq),
                task.name,
                task.fn,
                interval=task.interval,
            )
            nxt.cancelled = task.cancelled
            task.interval = None
            heapq.heappush(self._heap, nxt)

    def run_until(self, until: datetime) -> None:
        """Fire every task due up to and including `until` (sim clocks advance)."""
        until = ensure_utc(until)
        while self._heap and self._heap[0].when <= until:
            task = heapq.heappop(self._heap)
            if task.cancelled:
                continue
            if isinstance(self.clock, SimClock) and task.when > self.clock.now():
                self.clock.advance_to(task.when)
            self._fire(task)
        if isinstance(self.clock, SimClock) and until > self.clock.now():
            self.clock.advance_to(until)

    def run_forever(self, stop: Optional[Callable[[], bool]] = None) -> None:
        """Wall-clock loop: sleep until the next task is due, then fire it."""
        while self._heap:
            if stop is not None and stop():
                return
            task = self._heap[0]
            delay = (task.when - self.clock.now()).total_seconds()
            if delay > 0:
                self.clock.sleep(min(delay, 1.0))
                continue
            heapq.heappop(self._heap)
            if not task.cancelled:
                self._fire(task)
