"""Terminal sessions: a scripted simulated target, and an opt-in live shell.

Simulated mode answers commands from an ordered rule list (first match wins,
optional one-shot rules, per-rule delays that only compare against the step
timeout, side effects that write into other sessions). It exists so a whole
engagement can replay deterministically with no network and no target VM.

Live mode drives a tmux server and is wired but deliberately hard to reach:
construction fails unless the configuration carries unsafe_live_execution
and a non-empty scope allowlist. No test exercises it.
"""

from __future__ import annotations

import re
import subprocess
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import (
    ConfigInvalid,
    MissingApproval,
    SessionExists,
    UnknownSession,
)
from .execution import CommandStep, is_listener

TRUNCATE_HEAD_LINES = 200
TRUNCATE_TAIL_LINES = 200
TIMEOUT_EXIT_STATUS = 124  # convention borrowed from timeout(1)
DETACHED = "detached"

_SENTINEL = "__STEP_STATUS__"


@dataclass(frozen=True)
class SideEffect:
    session: str
    output: str


@dataclass
class ScenarioRule:
    command: str  # regex over the (possibly edited) command line
    output: str = ""
    exit_status: int = 0
    delay: float = 0.0
    consume_once: bool = False
    session: str | None = None  # None matches any session
    side_effects: list[SideEffect] = field(default_factory=list)

    def __post_init__(self):
        try:
            self._pattern = re.compile(self.command)
        except re.error as exc:
            raise ConfigInvalid(f"bad scenario pattern {self.command!r}: {exc}") from exc

    def matches(self, session: str, command_line: str) -> bool:
        if self.session is not None and self.session != session:
            return False
        return self._pattern.search(command_line) is not None


def rules_from_config(raw_rules: Sequence[Mapping]) -> list[ScenarioRule]:
    rules = []
    for raw in raw_rules:
        rules.append(
            ScenarioRule(
                command=raw["command"],
                output=raw.get("output", ""),
                exit_status=int(raw.get("exit", 0)),
                delay=float(raw.get("delay", 0.0)),
                consume_once=bool(raw.get("consume_once", False)),
                session=raw.get("session"),
                side_effects=[
                    SideEffect(session=s["session"], output=s["output"])
                    for s in raw.get("side_effects", [])
                ],
            )
        )
    return rules


@dataclass
class ExecutionRecord:
    step: CommandStep
    session: str
    started_at: float
    ended_at: float
    output: str
    exit_status: int | str  # integer, or "detached" for listeners
    error_class: str | None = None  # timeout | launch_failure
    truncated: bool = False
    retained_head: int = 0
    retained_tail: int = 0
    ticket_id: int | None = None
    command_line: str = ""  # what actually ran (operator edits included)


def truncate_transcript(text: str) -> tuple[str, bool, int, int]:
    """Keep both ends of a long transcript with an explicit elision line."""
    lines = text.splitlines()
    if len(lines) <= TRUNCATE_HEAD_LINES + TRUNCATE_TAIL_LINES:
        return text, False, 0, 0
    omitted = len(lines) - TRUNCATE_HEAD_LINES - TRUNCATE_TAIL_LINES
    kept = (
        lines[:TRUNCATE_HEAD_LINES]
        + [f"[... {omitted} lines omitted ...]"]
        + lines[-TRUNCATE_TAIL_LINES:]
    )
    return "\n".join(kept), True, TRUNCATE_HEAD_LINES, TRUNCATE_TAIL_LINES


class _Session:
    def __init__(self, name: str):
        self.name = name
        self.stream: list[str] = []

    def append(self, text: str) -> None:
        if text and not text.endswith("\n"):
            text += "\n"
        self.stream.append(text)

    def transcript(self) -> str:
        return "".join(self.stream)


class SimulatedExecutor:
    """Scripted target: rules in file order, first match wins."""

    mode = "simulated"

    def __init__(
        self,
        rules: Sequence[ScenarioRule],
        clock: Callable[[], float] = time.time,
    ):
        self._rules = list(rules)
        self._consumed = [False] * len(self._rules)
        self._sessions: dict[str, _Session] = {}
        self._clock = clock

    # -- session lifecycle -------------------------------------------------
    def open_session(self, name: str) -> None:
        if name in self._sessions:
            raise SessionExists(f"session {name!r} already open")
        self._sessions[name] = _Session(name)

    def close_session(self, name: str) -> None:
        self._sessions.pop(name, None)  # idempotent

    def close_all(self) -> None:
        self._sessions.clear()

    def open_sessions(self) -> list[str]:
        return list(self._sessions)

    def _session(self, name: str) -> _Session:
        session = self._sessions.get(name)
        if session is None:
            raise UnknownSession(f"session {name!r} is not open")
        return session

    # -- execution ---------------------------------------------------------
    def _match_rule(self, session: str, command_line: str) -> ScenarioRule | None:
        for index, rule in enumerate(self._rules):
            if self._consumed[index]:
                continue
            if rule.matches(session, command_line):
                if rule.consume_once:
                    self._consumed[index] = True
                return rule
        return None

    def execute_step(
        self,
        step: CommandStep,
        ticket_id: int | None,
        command_override: str | None = None,
    ) -> ExecutionRecord:
        if ticket_id is None:
            raise MissingApproval(
                f"step {step.command_line!r} has no approval ticket"
            )
        session = self._session(step.session)
        command_line = command_override or step.command_line
        started = self._clock()
        rule = self._match_rule(step.session, command_line)

        if rule is None:
            word = command_line.split()[0]
            output = f"{word}: command not found"
            session.append(f"$ {command_line}\n{output}")
            return self._record(
                step, started, output, 127, ticket_id, command_line
            )

        if is_listener(command_line):
            # holds the port open: report detached now, output arrives via poll
            session.append(f"$ {command_line}\n{rule.output}")
            return ExecutionRecord(
                step=step,
                session=step.session,
                started_at=started,
                ended_at=started,
                output=rule.output,
                exit_status=DETACHED,
                ticket_id=ticket_id,
                command_line=command_line,
            )

        if rule.delay > step.timeout:
            # no real waiting in simulation; only the comparison matters
            session.append(f"$ {command_line}")
            record = self._record(
                step, started, "", TIMEOUT_EXIT_STATUS, ticket_id, command_line
            )
            record.error_class = "timeout"
            return record

        session.append(f"$ {command_line}\n{rule.output}")
        for effect in rule.side_effects:
            self._session(effect.session).append(effect.output)
        return self._record(
            step, started, rule.output, rule.exit_status, ticket_id, command_line
        )

    def _record(
        self,
        step: CommandStep,
        started: float,
        output: str,
        exit_status: int,
        ticket_id: int,
        command_line: str,
    ) -> ExecutionRecord:
        text, truncated, head, tail = truncate_transcript(output)
        return ExecutionRecord(
            step=step,
            session=step.session,
            started_at=started,
            ended_at=self._clock(),
            output=text,
            exit_status=exit_status,
            truncated=truncated,
            retained_head=head,
            retained_tail=tail,
            ticket_id=ticket_id,
            command_line=command_line,
        )

    def poll_output(self, name: str, cursor: int = 0) -> tuple[str, int]:
        """Output appended to the session since cursor (character offset)."""
        session = self._session(name)
        transcript = session.transcript()
        return transcript[cursor:], len(transcript)


class LiveExecutor:
    """Real sessions on a tmux server. Refuses to exist unless opted in.

    Exit status detection wraps every command with a sentinel echo that is
    stripped from recorded output. This class is the only place that touches
    a real shell; nothing in the test suite constructs it with opt-in set.
    """

    mode = "live"

    def __init__(
        self,
        *,
        unsafe_live_execution: bool,
        scope: Sequence[str],
        tmux_binary: str = "tmux",
        socket_name: str = "pentagent",
        poll_interval: float = 0.2,
    ):
        if not unsafe_live_execution:
            raise ConfigInvalid(
                "live execution requires unsafe_live_execution = true"
            )
        if not scope:
            raise ConfigInvalid("live execution requires a non-empty scope")
        self._tmux = tmux_binary
        self._socket = socket_name
        self._poll_interval = poll_interval
        self._sessions: set[str] = set()
        self._cursors: dict[str, int] = {}

    def _run(self, *args: str) -> subprocess.CompletedProcess:
        return subprocess.run(
            [self._tmux, "-L", self._socket, *args],
            capture_output=True,
            text=True,
            check=False,
        )

    def open_session(self, name: str) -> None:
        if name in self._sessions:
            raise SessionExists(f"session {name!r} already open")
        proc = self._run("new-session", "-d", "-s", name)
        if proc.returncode != 0:
            raise ConfigInvalid(f"tmux new-session failed: {proc.stderr.strip()}")
        self._sessions.add(name)
        self._cursors[name] = 0

    def close_session(self, name: str) -> None:
        if name in self._sessions:
            self._run("kill-session", "-t", name)
            self._sessions.discard(name)

    def close_all(self) -> None:
        for name in list(self._sessions):
            self.close_session(name)

    def _capture(self, name: str) -> str:
        proc = self._run("capture-pane", "-p", "-t", name, "-S", "-10000")
        return proc.stdout

    def poll_output(self, name: str, cursor: int = 0) -> tuple[str, int]:
        if name not in self._sessions:
            raise UnknownSession(f"session {name!r} is not open")
        transcript = self._capture(name)
        return transcript[cursor:], len(transcript)

    def execute_step(
        self,
        step: CommandStep,
        ticket_id: int | None,
        command_override: str | None = None,
    ) -> ExecutionRecord:
        if ticket_id is None:
            raise MissingApproval(
                f"step {step.command_line!r} has no approval ticket"
            )
        if step.session not in self._sessions:
            raise UnknownSession(f"session {step.session!r} is not open")
        command_line = command_override or step.command_line
        started = time.time()
        before = self._capture(step.session)
        if is_listener(command_line):
            self._run("send-keys", "-t", step.session, command_line, "Enter")
            return ExecutionRecord(
                step=step,
                session=step.session,
                started_at=started,
                ended_at=started,
                output="",
                exit_status=DETACHED,
                ticket_id=ticket_id,
                command_line=command_line,
            )
        wrapped = f"{command_line}; printf '{_SENTINEL} %d\\n' $?"
        self._run("send-keys", "-t", step.session, wrapped, "Enter")
        deadline = started + step.timeout
        inputs = list(step.interactive_inputs)
        last_len = len(before)
        last_change = time.time()
        exit_status: int | str = TIMEOUT_EXIT_STATUS
        error_class: str | None = "timeout"
        while time.time() < deadline:
            time.sleep(self._poll_interval)
            transcript = self._capture(step.session)
            if len(transcript) != last_len:
                last_len = len(transcript)
                last_change = time.time()
                if inputs:
                    self._run(
                        "send-keys", "-t", step.session, inputs.pop(0), "Enter"
                    )
                    continue
            elif inputs and time.time() - last_change > 2.0:
                # no output for a while; assume the prompt is waiting
                self._run("send-keys", "-t", step.session, inputs.pop(0), "Enter")
                last_change = time.time()
            match = re.search(rf"{_SENTINEL} (\d+)", transcript)
            if match is not None:
                exit_status = int(match.group(1))
                error_class = None
                break
        raw = self._capture(step.session)[len(before):]
        cleaned = "\n".join(
            line for line in raw.splitlines() if _SENTINEL not in line
        )
        text, truncated, head, tail = truncate_transcript(cleaned)
        return ExecutionRecord(
            step=step,
            session=step.session,
            started_at=started,
            ended_at=time.time(),
            output=text,
            exit_status=exit_status,
            error_class=error_class,
            truncated=truncated,
            retained_head=head,
            retained_tail=tail,
            ticket_id=ticket_id,
            command_line=command_line,
        )
