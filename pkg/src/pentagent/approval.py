"""The human gate: every command becomes a ticket before it may run.

Policy does three jobs here. Danger patterns flag commands that can wreck a
host (recursive delete, disk overwrite, format, fork bomb, firewall flush).
Privilege and scope checks flag escalation and out-of-scope targets. The
auto-approve allowlist short-circuits the queue, but only for steps carrying
zero risk flags; a destructive command can never ride the allowlist.

The store serializes decisions under one condition variable so exactly one
decision wins, and the orchestrator can block until an operator acts.
"""

from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import (
    AlreadyDecided,
    ConfigInvalid,
    MissingDenyReason,
    MissingEditedCommand,
    UnknownTicket,
)
from .execution import CommandStep

PENDING = "pending"
APPROVED = "approved"
DENIED = "denied"
APPROVED_WITH_EDIT = "approved_with_edit"

RISK_DESTRUCTIVE = "destructive"
RISK_PRIVILEGE = "privilege"
RISK_SCOPE = "scope"

DEFAULT_DANGER_PATTERNS = (
    r"\brm\s+-[a-zA-Z]*[rR][a-zA-Z]*[fF]|\brm\s+-[a-zA-Z]*[fF][a-zA-Z]*[rR]",
    r"\bdd\b[^|;&]*\bof=/dev/sd",
    r"\bmkfs(\.\w+)?\b",
    r":\(\)\s*\{\s*:\s*\|\s*:\s*&\s*\}\s*;\s*:",
    r"\biptables\b[^|;&]*\s-F\b",
)

# read-only reconnaissance preset, opt-in for low-friction replays
RECON_PRESET_PATTERNS = (
    r"^nmap\b",
    r"^whatweb\b",
    r"^curl\s+-I\b",
    r"^gobuster\b",
    r"^ffuf\b",
)

_PRIVILEGE_RE = re.compile(r"(?:^|[\s;|&])(?:sudo|su)(?:\s|$)")
_IPV4_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")
_DOTTED_NAME_RE = re.compile(r"\b[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+\b")
# dotted tokens ending in these are files, not hosts
_FILE_SUFFIXES = frozenset(
    """py sh php txt conf html htm js json md gz tar zip git log xml yml yaml
    ini cfg csv pdf exe bin so deb rpm service socket timer server list lock
    bak old tmp""".split()
)


@dataclass
class Policy:
    auto_approve_patterns: list[str] = field(default_factory=list)
    danger_patterns: list[str] = field(default_factory=lambda: list(DEFAULT_DANGER_PATTERNS))
    scope: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._auto = [self._compile(p) for p in self.auto_approve_patterns]
        self._danger = [self._compile(p) for p in self.danger_patterns]

    @staticmethod
    def _compile(pattern: str) -> re.Pattern:
        try:
            return re.compile(pattern)
        except re.error as exc:
            raise ConfigInvalid(f"bad policy pattern {pattern!r}: {exc}") from exc

    def allows(self, command_line: str) -> bool:
        return any(p.search(command_line) for p in self._auto)

    def is_dangerous(self, command_line: str) -> bool:
        return any(p.search(command_line) for p in self._danger)

    def in_scope(self, address: str) -> bool:
        candidate = address.lower()
        for entry in self.scope:
            entry = entry.lower()
            if candidate == entry or candidate.endswith("." + entry):
                return True
        return False


def _address_candidates(command_line: str) -> list[str]:
    """IPv4 literals plus dotted names that are not obviously file names."""
    seen = dict.fromkeys(_IPV4_RE.findall(command_line))
    for token in _DOTTED_NAME_RE.findall(command_line):
        if token in seen:
            continue
        last = token.rsplit(".", 1)[-1].lower()
        if last.isdigit() or last in _FILE_SUFFIXES:
            continue
        seen[token] = None
    return list(seen)


def classify_risks(step: CommandStep, policy: Policy) -> list[str]:
    flags = []
    if policy.is_dangerous(step.command_line):
        flags.append(RISK_DESTRUCTIVE)
    if _PRIVILEGE_RE.search(step.command_line):
        flags.append(RISK_PRIVILEGE)
    if policy.scope:
        for address in _address_candidates(step.command_line):
            if not policy.in_scope(address):
                flags.append(RISK_SCOPE)
                break
    return flags


@dataclass
class ApprovalTicket:
    ticket_id: int
    step: CommandStep
    explanation: str
    risk_flags: list[str]
    state: str = PENDING
    edited_command: str | None = None
    decided_by: str | None = None
    decided_at: float | None = None
    reason: str | None = None

    @property
    def effective_command(self) -> str:
        """What actually runs: the operator's edit when one was made."""
        if self.state == APPROVED_WITH_EDIT:
            return self.edited_command or self.step.command_line
        return self.step.command_line

    @property
    def is_approved(self) -> bool:
        return self.state in (APPROVED, APPROVED_WITH_EDIT)


class TicketStore:
    """Serialized ticket lifecycle: submit, decide once, wait, list."""

    def __init__(self, policy: Policy, clock: Callable[[], float] = time.time):
        self.policy = policy
        self._clock = clock
        self._tickets: dict[int, ApprovalTicket] = {}
        self._order: list[int] = []
        self._next_id = 1
        self._cond = threading.Condition()

    def submit(self, step: CommandStep, explanation: str) -> ApprovalTicket:
        with self._cond:
            ticket = ApprovalTicket(
                ticket_id=self._next_id,
                step=step,
                explanation=explanation,
                risk_flags=classify_risks(step, self.policy),
            )
            self._next_id += 1
            # allowlist only clears unflagged commands; flags keep a human in
            if not ticket.risk_flags and self.policy.allows(step.command_line):
                ticket.state = APPROVED
                ticket.decided_by = "policy"
                ticket.decided_at = self._clock()
            self._tickets[ticket.ticket_id] = ticket
            self._order.append(ticket.ticket_id)
            self._cond.notify_all()
            return ticket

    def get(self, ticket_id: int) -> ApprovalTicket:
        with self._cond:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"no ticket {ticket_id}")
            return ticket

    def decide(
        self,
        ticket_id: int,
        decision: str,
        *,
        operator: str,
        reason: str | None = None,
        edited_command: str | None = None,
    ) -> ApprovalTicket:
        with self._cond:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"no ticket {ticket_id}")
            if ticket.state != PENDING:
                raise AlreadyDecided(
                    f"ticket {ticket_id} already {ticket.state}"
                )
            if decision == "approve":
                if edited_command is not None:
                    raise ValueError("edited_command only valid with approve_with_edit")
                ticket.state = APPROVED
            elif decision == "deny":
                if not reason:
                    raise MissingDenyReason(
                        f"denying ticket {ticket_id} requires a reason"
                    )
                ticket.state = DENIED
            elif decision == "approve_with_edit":
                if not edited_command or not edited_command.strip():
                    raise MissingEditedCommand(
                        f"approve_with_edit on ticket {ticket_id} requires a command"
                    )
                ticket.state = APPROVED_WITH_EDIT
                ticket.edited_command = edited_command
            else:
                raise ValueError(f"unknown decision {decision!r}")
            ticket.reason = reason
            ticket.decided_by = operator
            ticket.decided_at = self._clock()
            self._cond.notify_all()
            return ticket

    def pending(self) -> list[ApprovalTicket]:
        with self._cond:
            return [
                self._tickets[tid]
                for tid in self._order
                if self._tickets[tid].state == PENDING
            ]

    def all_tickets(self) -> list[ApprovalTicket]:
        with self._cond:
            return [self._tickets[tid] for tid in self._order]

    def wait_for_decision(
        self, ticket_id: int, timeout: float | None = None
    ) -> ApprovalTicket:
        """Block until the ticket leaves pending; returns it decided.

        With a timeout, returns the ticket in whatever state it reached.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"no ticket {ticket_id}")
            while ticket.state == PENDING:
                remaining = None
                if deadline is not None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        break
                self._cond.wait(remaining)
            return ticket
