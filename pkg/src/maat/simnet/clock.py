"""Clocks. Scenarios run on logical time so timeouts are reproducible."""
from __future__ import annotations

import threading
import time


class LogicalClock:
    """Seconds of simulated time; only moves when advanced."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("time cannot move backwards")
        with self._lock:
            self._now += seconds
            return self._now


class WallClock:
    """Monotonic real time. ``advance`` is a no-op: real work takes real time."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def advance(self, seconds: float) -> float:
        return self.now()
