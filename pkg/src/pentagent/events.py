"""Append-only engagement event log: gapless JSONL with follower wakeups.

The log is the authoritative record of a run. One thread appends; any
number of readers follow by cursor (the seq of the last event they saw).
Replayed timestamps count seconds from a fixed epoch so two identical runs
produce identical files.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import CorruptLog

EVENT_KINDS = frozenset(
    {
        "engagement_started",
        "plan_updated",
        "task_selected",
        "plan_proposed",
        "ticket_submitted",
        "ticket_decided",
        "step_executed",
        "summary_created",
        "finding_extracted",
        "query_issued",
        "warning",
        "engagement_stopped",
    }
)

# lifecycle markers are bookkeeping, not engagement behavior; resume
# comparisons and catch-up matching treat them specially
LIFECYCLE_KINDS = frozenset({"engagement_started", "engagement_stopped"})

SIM_EPOCH = 1704067200.0  # 2024-01-01T00:00:00Z


def sim_timestamp(seq: int) -> float:
    """Deterministic timestamp for simulated runs: epoch + one tick/event."""
    return SIM_EPOCH + seq


def wall_timestamp(_seq: int) -> float:
    return time.time()


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: float
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "timestamp": self.timestamp,
                "kind": self.kind,
                "payload": self.payload,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        try:
            raw = json.loads(line)
            return cls(
                seq=int(raw["seq"]),
                timestamp=float(raw["timestamp"]),
                kind=str(raw["kind"]),
                payload=dict(raw["payload"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptLog(f"unreadable event line: {exc}") from exc


def load_events(path: Path | str) -> list[Event]:
    """Read a log file back, insisting on a gapless 1..N sequence."""
    path = Path(path)
    events: list[Event] = []
    if not path.exists():
        return events
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            event = Event.from_json(line)
            if event.seq != len(events) + 1:
                raise CorruptLog(
                    f"seq gap: expected {len(events) + 1}, found {event.seq}"
                )
            events.append(event)
    return events


class EventLog:
    """Single-writer event log; readers follow by cursor.

    With a path every event is persisted as one JSON line and the file is
    kept owner-read-only. Passing `recorded` puts the log in catch-up mode:
    appends are matched against the recorded events instead of re-written,
    until the recording is exhausted. That is how resume works — the engine
    re-executes deterministically and the log verifies it retraces the same
    steps before new events are allowed in. A mid-recording stop marker
    (the reason the run needs resuming at all) is skipped, not matched.
    """

    def __init__(
        self,
        path: Path | str | None = None,
        *,
        timestamp_for: Callable[[int], float] = sim_timestamp,
        recorded: Sequence[Event] | None = None,
    ):
        self._path = Path(path) if path is not None else None
        self._timestamp_for = timestamp_for
        self._events: list[Event] = list(recorded or [])
        self._catchup_limit = len(self._events)
        self._matched = 0
        self._cond = threading.Condition()
        self._fh = None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(
                self._path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o600
            )
            os.chmod(self._path, 0o600)
            self._fh = os.fdopen(fd, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        with self._cond:
            return len(self._events)

    @property
    def catching_up(self) -> bool:
        with self._cond:
            return self._matched < self._catchup_limit

    def append(self, kind: str, payload: dict) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        # canonicalize through JSON so catch-up equality matches file reality
        payload = json.loads(json.dumps(payload, ensure_ascii=False))
        with self._cond:
            while self._matched < self._catchup_limit:
                recorded = self._events[self._matched]
                if recorded.kind == kind and recorded.payload == payload:
                    self._matched += 1
                    return recorded
                if recorded.kind == "engagement_stopped":
                    self._matched += 1
                    continue
                if kind == "engagement_stopped":
                    # stopped again before catch-up finished; keep the
                    # recording untouched so a later resume still works
                    seq = len(self._events) + 1
                    return Event(
                        seq=seq,
                        timestamp=self._timestamp_for(seq),
                        kind=kind,
                        payload=payload,
                    )
                raise CorruptLog(
                    f"resume diverged at seq {recorded.seq}: recorded "
                    f"{recorded.kind}, regenerated {kind}"
                )
            seq = len(self._events) + 1
            event = Event(
                seq=seq,
                timestamp=self._timestamp_for(seq),
                kind=kind,
                payload=payload,
            )
            self._events.append(event)
            if self._fh is not None:
                self._fh.write(event.to_json() + "\n")
                self._fh.flush()
            self._cond.notify_all()
            return event

    def events_since(self, cursor: int = 0) -> list[Event]:
        with self._cond:
            if cursor < 0:
                cursor = 0
            return list(self._events[cursor:])

    def wait_for(self, cursor: int, timeout: float) -> list[Event]:
        """Block until events beyond the cursor exist, or the timeout runs out."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while len(self._events) <= cursor:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._cond.wait(remaining)
            return list(self._events[cursor:])

    def close(self) -> None:
        with self._cond:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
