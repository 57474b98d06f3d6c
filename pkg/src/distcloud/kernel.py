"""Discrete-event engine with an integer-microsecond clock."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from .errors import PastEvent

# Simulated time is an int count of microseconds; floats never touch the clock.
SimTime = int
US_PER_S = 1_000_000


def to_us(seconds) -> SimTime:
    """Convert seconds (int, float, str or Fraction) to whole microseconds."""
    if isinstance(seconds, float):
        seconds = Fraction(repr(seconds))
    us = Fraction(seconds) * US_PER_S
    return int(round(us))


def to_s(t: SimTime) -> float:
    return t / US_PER_S


class EventKind(enum.Enum):
    TRANSFER_COMPLETE = "TransferComplete"
    VM_BOOT_COMPLETE = "VmBootComplete"
    VM_TEARDOWN_COMPLETE = "VmTeardownComplete"
    SCHEDULER_TICK = "SchedulerTick"
    JOB_DISPATCHED = "JobDispatched"
    JOB_COMPLETE = "JobComplete"
    FAULT_TRIGGER = "FaultTrigger"
    METRICS_SAMPLE = "MetricsSample"
    GENERIC = "Generic"


@dataclass(eq=False)
class SimEvent:
    fire_at: SimTime
    sequence: int
    kind: EventKind
    action: Optional[Callable[["SimEvent"], Any]] = None
    payload: Any = None
    cancelled: bool = field(default=False, repr=False)

    def __lt__(self, other: "SimEvent") -> bool:
        return (self.fire_at, self.sequence) < (other.fire_at, other.sequence)


class Simulator:
    """Event queue ordered by ``(fire_at, sequence)``.

    ``pre_step`` hooks run before each event is popped; the flow network uses
    one to re-solve allocations lazily so that every flow-set change made at
    one instant costs a single solve.
    """

    def __init__(self):
        self.now: SimTime = 0
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._stopped = False
        self.pre_step: list[Callable[[], None]] = []
        self.trace: Optional[list[tuple[int, int, str]]] = None

    def schedule(self, fire_at: SimTime, kind: EventKind = EventKind.GENERIC,
                 action=None, payload=None) -> SimEvent:
        if fire_at < self.now:
            raise PastEvent(f"event at {fire_at} us is before now={self.now} us")
        event = SimEvent(fire_at, self._seq, kind, action, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: SimTime, kind: EventKind = EventKind.GENERIC,
                    action=None, payload=None) -> SimEvent:
        return self.schedule(self.now + delay, kind, action, payload)

    @staticmethod
    def cancel(event: Optional[SimEvent]) -> None:
        if event is not None:
            event.cancelled = True

    def stop(self) -> None:
        """Make the current ``run_until`` return after the running handler."""
        self._stopped = True

    @property
    def stopped(self) -> bool:
        return self._stopped

    def peek_time(self) -> Optional[SimTime]:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].fire_at if self._queue else None

    def run_until(self, t_end: SimTime) -> int:
        if t_end < self.now:
            raise PastEvent(f"t_end={t_end} us is before now={self.now} us")
        fired = 0
        self._stopped = False
        while True:
            for hook in self.pre_step:
                hook()
            nxt = self.peek_time()
            if nxt is None or nxt > t_end:
                break
            event = heapq.heappop(self._queue)
            self.now = event.fire_at
            if self.trace is not None:
                self.trace.append((event.fire_at, event.sequence, event.kind.value))
            if event.action is not None:
                event.action(event)
            fired += 1
            if self._stopped:
                return fired
        self.now = t_end
        return fired
