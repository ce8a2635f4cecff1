"""
Deterministic discrete-event engine

Simulation clock, (at, seq)-ordered event queue, the run's single seeded
random stream, and the append-only trace.
"""

import hashlib
import heapq
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from iotstage.utils.exceptions import ScheduleInPastError
from iotstage.utils.metrics import track_event

logger = logging.getLogger(__name__)

SimTime = int  # nanoseconds since scenario start


class EventKind(str, Enum):
    """Kinds of discrete events"""

    PACKET_DELIVERY = "PacketDelivery"
    TIMER_FIRE = "TimerFire"
    FAULT_APPLY = "FaultApply"
    EXTERNAL_INJECTION = "ExternalInjection"


@dataclass
class SimEvent:
    """Timestamped event; seq is assigned by the engine on schedule."""

    at: SimTime
    kind: EventKind
    payload: Any = None
    seq: int = -1


@dataclass(frozen=True)
class TraceRecord:
    at: SimTime
    kind: str
    subject: str
    attrs: Dict[str, Any] = field(default_factory=dict)

    def canonical(self) -> str:
        """Canonical JSON line: fixed key order, attrs in insertion order."""
        return json.dumps(
            {"at": self.at, "kind": self.kind, "subject": self.subject, "attrs": self.attrs},
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        )

    @classmethod
    def from_line(cls, line: str) -> "TraceRecord":
        data = json.loads(line)
        return cls(data["at"], data["kind"], data["subject"], data["attrs"])


class Trace:
    """
    Append-only run trace

    Keeps a running SHA-256 over the canonical lines, optionally writes them
    to a JSON Lines file and optionally keeps the records in memory.
    """

    def __init__(self, path: Optional[str] = None, keep_records: bool = True):
        self.path = path
        self.keep_records = keep_records
        self.records: List[TraceRecord] = []
        self.counts: Counter = Counter()
        self._hash = hashlib.sha256()
        self._last_at = 0
        self._file = open(path, "w", encoding="utf-8") if path else None

    def append(self, record: TraceRecord) -> None:
        if record.at < self._last_at:
            raise ValueError(
                f"trace time went backwards: {record.at} after {self._last_at}"
            )
        self._last_at = record.at
        line = record.canonical() + "\n"
        self._hash.update(line.encode("utf-8"))
        self.counts[record.kind] += 1
        if self._file is not None:
            self._file.write(line)
        if self.keep_records:
            self.records.append(record)

    def hexdigest(self) -> str:
        return self._hash.hexdigest()

    def of_kind(self, *kinds: str) -> List[TraceRecord]:
        return [r for r in self.records if r.kind in kinds]

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


def trace_hash(lines) -> str:
    """SHA-256 over canonical lines, e.g. those of a trace file."""
    digest = hashlib.sha256()
    for line in lines:
        digest.update((line.rstrip("\n") + "\n").encode("utf-8"))
    return digest.hexdigest()


class Engine:
    """Single-threaded discrete-event engine"""

    def __init__(self, seed: int, trace: Optional[Trace] = None):
        """
        Initialize the engine

        Args:
            seed: Effective run seed (unsigned 64-bit)
            trace: Trace sink; an in-memory trace is created when omitted
        """
        self.seed = seed
        self.trace = trace if trace is not None else Trace()
        self.processed = 0
        self.draws: Counter = Counter()

        self._now: SimTime = 0
        self._seq = 0
        self._queue: list = []
        self._handlers: Dict[EventKind, Callable[[SimEvent], None]] = {}
        self._rng = np.random.Generator(np.random.PCG64(seed))

    @property
    def now(self) -> SimTime:
        return self._now

    @property
    def pending(self) -> int:
        return len(self._queue)

    def on(self, kind: EventKind, handler: Callable[[SimEvent], None]) -> None:
        """Register the handler for one event kind."""
        self._handlers[kind] = handler

    def schedule(self, event: SimEvent) -> SimEvent:
        """
        Enqueue an event

        Raises:
            ScheduleInPastError: event.at is before the clock
        """
        if event.at < self._now:
            raise ScheduleInPastError(
                f"cannot schedule {event.kind.value} at {event.at} ns, clock is {self._now} ns",
                payload={"at": event.at, "now": self._now},
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (event.at, event.seq, event))
        return event

    def run_until(self, t: SimTime) -> int:
        """
        Process every event with at < t, then set the clock to t

        Events scheduled by handlers inside the window are processed in the
        same call.

        Returns:
            Number of events processed
        """
        if t < self._now:
            raise ScheduleInPastError(f"cannot run back to {t} ns, clock is {self._now} ns")

        count = 0
        while self._queue and self._queue[0][0] < t:
            at, _, event = heapq.heappop(self._queue)
            self._now = at
            handler = self._handlers.get(event.kind)
            if handler is None:
                raise KeyError(f"no handler for {event.kind.value}")
            handler(event)
            track_event(event.kind.value)
            count += 1

        self._now = t
        self.processed += count
        return count

    def next_random(self, purpose: str) -> float:
        """Unit-interval draw [0, 1) from the run stream."""
        self.draws[purpose] += 1
        return float(self._rng.random())

    def next_index(self, n: int, purpose: str) -> int:
        """Uniform integer in [0, n)."""
        self.draws[purpose] += 1
        return int(self._rng.integers(0, n))

    def record(self, kind: str, subject: str, /, **attrs) -> TraceRecord:
        """Append a trace record stamped with the current clock."""
        record = TraceRecord(self._now, kind, subject, attrs)
        self.trace.append(record)
        return record
