"""Clock abstraction: wall-clock UTC or deterministic virtual time.

All timestamps in the system are timezone-aware UTC datetimes with
microsecond precision. The virtual clock lets the simulated broker drive
time forward deterministically so two seeded runs produce byte-identical
provenance, timestamps included.
"""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone
from typing import Protocol

VIRTUAL_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)

_TS_FORMAT = "%Y-%m-%dT%H:%M:%S.%fZ"


def isoformat_utc(dt: datetime) -> str:
    """Fixed-width ISO-8601 UTC form used everywhere a timestamp is text."""
    return dt.astimezone(timezone.utc).strftime(_TS_FORMAT)


def parse_utc(text: str) -> datetime:
    return datetime.strptime(text, _TS_FORMAT).replace(tzinfo=timezone.utc)


class Clock(Protocol):
    def now(self) -> datetime: ...


class SystemClock:
    """Real UTC wall clock."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock:
    """Monotone virtual clock counting seconds from a fixed epoch.

    Advancement is serialized; `now()` may be called concurrently. Time
    never moves backwards: `advance_to` clamps to the current reading.
    """

    def __init__(self, epoch: datetime = VIRTUAL_EPOCH) -> None:
        self._epoch = epoch
        self._elapsed = 0.0
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._epoch + timedelta(seconds=self._elapsed)

    def elapsed(self) -> float:
        """Seconds since the virtual epoch."""
        with self._lock:
            return self._elapsed

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        with self._lock:
            self._elapsed += seconds

    def advance_to(self, elapsed: float) -> None:
        with self._lock:
            self._elapsed = max(self._elapsed, elapsed)
