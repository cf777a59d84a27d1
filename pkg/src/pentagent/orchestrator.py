"""Engagement engine: plan, select, gate, execute, summarize, repeat.

One engine drives one engagement. Every externally visible effect lands on
the append-only event log, which makes a simulated run reproducible: resume
rebuilds the engine from the bundle and re-executes deterministically while
the log verifies each regenerated event against the recording before new
ones are accepted (recorded operator decisions are injected so the human
input repeats too).

Credential findings are kept verbatim in the log file (later steps need
them) but every display surface goes through the redaction helpers here.
"""

from __future__ import annotations

import dataclasses
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .approval import (
    APPROVED_WITH_EDIT,
    PENDING,
    Policy,
    RECON_PRESET_PATTERNS,
    TicketStore,
)
from .approval import ApprovalTicket
from .config import Bundle, EngagementConfig, load_bundle
from .errors import (
    BudgetExceeded,
    ConfigInvalid,
    CorruptLog,
    NoTaskAvailable,
    UnparseablePlan,
)
from .events import Event, EventLog, load_events, sim_timestamp, wall_timestamp
from .execution import (
    CommandPlan,
    formulate_queries,
    plan_commands,
    revise_plan,
)
from .executor import LiveExecutor, SimulatedExecutor, rules_from_config
from .gateway import (
    Gateway,
    HashEmbeddingProvider,
    ModelAssignment,
    ScriptedProvider,
    TermOverlapReranker,
)
from .planning import PlanningContext, TaskSelection, select_task, update_plan
from .ptt import Ptt, TaskStatus, next_todo, parse_ptt, serialize_ptt, set_status
from .refine import RoleProfile
from .retrieval import KnowledgeStore, WebSearchClient
from .summarization import Finding, Summary, extract_findings, summarize

RUNNING = "running"
COMPLETE = "complete"
BUDGET_EXHAUSTED = "budget_exhausted"
STOPPED = "stopped"
STALLED = "stalled"
TERMINAL_STATUSES = (COMPLETE, BUDGET_EXHAUSTED, STOPPED, STALLED)

STALL_CYCLE_LIMIT = 3  # same task failing this many cycles in a row -> failed
NO_PROGRESS_LIMIT = 3  # cycles without any progress -> terminal stalled
SNAPSHOT_EVERY_CYCLES = 10
RESULT_LINE_CAP = 8
RESULTS_PER_QUERY = 3
FAILURE_TAIL_LINES = 20

SECRET_FINDING_KINDS = frozenset({"credential"})
MIN_SECRET_LENGTH = 4

Decider = Callable[[ApprovalTicket], dict | None]


# --- secret display hygiene -------------------------------------------------

def mask_secret(value: str) -> str:
    """Keep two characters of context at each end, star the rest."""
    if len(value) <= MIN_SECRET_LENGTH:
        return "*" * MIN_SECRET_LENGTH
    return value[:2] + "*" * (len(value) - 4) + value[-2:]


def secret_values(findings: Sequence[Finding]) -> list[str]:
    """Finding values that display surfaces must mask, longest first."""
    values = {
        f.value
        for f in findings
        if f.kind in SECRET_FINDING_KINDS and len(f.value) >= MIN_SECRET_LENGTH
    }
    return sorted(values, key=len, reverse=True)


def redact_text(text: str, secrets: Sequence[str]) -> str:
    for secret in secrets:
        if secret in text:
            text = text.replace(secret, mask_secret(secret))
    return text


def redact_structure(value, secrets: Sequence[str]):
    """Deep-copy a JSON-shaped structure with every string redacted."""
    if isinstance(value, str):
        return redact_text(value, secrets)
    if isinstance(value, dict):
        return {k: redact_structure(v, secrets) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [redact_structure(v, secrets) for v in value]
    return value


# --- deciders ----------------------------------------------------------------

def approve_all_decider(operator: str = "replay") -> Decider:
    def decide(_ticket: ApprovalTicket) -> dict:
        return {"decision": "approve", "operator": operator}

    return decide


def recorded_decisions_decider(events: Sequence[Event]) -> Decider:
    """Re-issue the operator decisions a previous run recorded.

    Policy auto-approvals regenerate on their own inside the ticket store,
    so only human decisions need injecting; ticket ids regenerate
    identically under deterministic re-execution, which makes them the key.
    """
    by_ticket: dict[int, dict] = {}
    for event in events:
        if event.kind != "ticket_decided":
            continue
        payload = event.payload
        if payload.get("decided_by") == "policy":
            continue
        decision = {
            "approved": "approve",
            "denied": "deny",
            "approved_with_edit": "approve_with_edit",
        }.get(payload.get("decision", ""))
        if decision is None:
            continue
        by_ticket[int(payload["ticket_id"])] = {
            "decision": decision,
            "operator": payload.get("decided_by") or "operator",
            "reason": payload.get("reason"),
            "edited_command": payload.get("edited_command"),
        }

    def decide(ticket: ApprovalTicket) -> dict | None:
        return by_ticket.get(ticket.ticket_id)

    return decide


class _WarnProxy:
    """Late-bound warning sink for components built before the engine."""

    def __init__(self):
        self.target: Callable[[str], None] | None = None

    def __call__(self, message: str) -> None:
        if self.target is not None:
            self.target(message)


# --- engagement state ---------------------------------------------------------

@dataclass
class EngagementState:
    status: str
    cycle: int
    ptt: Ptt
    findings: list[Finding]
    summaries: list[Summary]
    used_tokens: int
    scope: list[str] = field(default_factory=list)
    mode: str = "simulated"
    max_cycles: int = 0
    max_tokens: int | None = None


class Engagement:
    """One engagement loop over an event log. Single-threaded control;
    the control plane reads snapshots and injects decisions/stop requests."""

    def __init__(
        self,
        config: EngagementConfig,
        *,
        gateway: Gateway,
        executor,
        tickets: TicketStore,
        log: EventLog,
        plan_roles: dict[str, RoleProfile],
        exec_roles: dict[str, RoleProfile],
        web: WebSearchClient | None = None,
        store: KnowledgeStore | None = None,
        kb_ready: bool = False,
        deciders: Sequence[Decider] = (),
        run_dir: Path | str | None = None,
        replay: bool = False,
    ):
        config.validate()
        self.config = config
        self.gateway = gateway
        self.executor = executor
        self.tickets = tickets
        self.log = log
        self._plan_roles = plan_roles
        self._exec_roles = exec_roles
        self._web = web
        self._store = store
        self._kb_ready = kb_ready
        self._deciders = list(deciders)
        self._run_dir = Path(run_dir) if run_dir is not None else None
        self._replay = replay

        self._lock = threading.RLock()
        self._ptt = Ptt(phases=[])
        self._findings: list[Finding] = []
        self._finding_keys: set[tuple[str, str]] = set()
        self._summaries: list[Summary] = []
        self._status = RUNNING
        self._cycle = 0
        self._started = False
        self._stop = threading.Event()
        self._fail_task: str | None = None
        self._fail_streak = 0
        self._no_progress = 0

    # -- public surface ------------------------------------------------------

    @property
    def status(self) -> str:
        with self._lock:
            return self._status

    @property
    def cycle(self) -> int:
        with self._lock:
            return self._cycle

    def state(self) -> EngagementState:
        with self._lock:
            return EngagementState(
                status=self._status,
                cycle=self._cycle,
                ptt=self._ptt,
                findings=list(self._findings),
                summaries=list(self._summaries),
                used_tokens=self.gateway.used_tokens,
                scope=list(self.config.scope),
                mode=self.config.mode,
                max_cycles=self.config.budgets.max_cycles,
                max_tokens=self.config.budgets.max_tokens,
            )

    def request_stop(self) -> None:
        self._stop.set()

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self._emit(
            "engagement_started",
            {
                "scope": list(self.config.scope),
                "mode": self.config.mode,
                "bundle": self.config.bundle_path,
                "replay": self._replay,
                "budgets": {
                    "max_cycles": self.config.budgets.max_cycles,
                    "max_tokens": self.config.budgets.max_tokens,
                    "max_revisions_per_step": self.config.budgets.max_revisions_per_step,
                },
            },
        )

    def run(self) -> EngagementState:
        self.start()
        while self.status == RUNNING:
            self.step_cycle()
        return self.state()

    def step_cycle(self) -> str:
        """Apply one plan-select-execute-summarize cycle; returns the status."""
        with self._lock:
            if self._status != RUNNING:
                return self._status
        self.start()
        if self._stop.is_set():
            return self._finalize(STOPPED)
        if self._cycle >= self.config.budgets.max_cycles:
            return self._finalize(BUDGET_EXHAUSTED)
        with self._lock:
            self._cycle += 1
        try:
            self._one_cycle()
        except BudgetExceeded:
            return self._finalize(BUDGET_EXHAUSTED)
        if self.status == RUNNING and self._stop.is_set():
            return self._finalize(STOPPED)
        return self.status

    # -- internals -------------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> Event:
        return self.log.append(kind, payload)

    def _warn(self, origin: str, message: str) -> None:
        self._emit("warning", {"origin": origin, "message": message})

    def _warn_sink(self, origin: str) -> Callable[[str], None]:
        return lambda message: self._warn(origin, message)

    def _finalize(self, status: str, reason: str | None = None) -> str:
        with self._lock:
            if self._status != RUNNING:
                return self._status
            self._status = status
        payload = {
            "status": status,
            "cycles": self._cycle,
            "used_tokens": self.gateway.used_tokens,
        }
        if reason:
            payload["reason"] = reason
        self._emit("engagement_stopped", payload)
        return status

    def _context(self) -> PlanningContext:
        with self._lock:
            return PlanningContext(
                current_ptt=self._ptt,
                recent_summaries=list(self._summaries),
                findings=list(self._findings),
                scope=list(self.config.scope),
            )

    def _one_cycle(self) -> None:
        ctx = self._context()
        tree = update_plan(
            ctx,
            self._plan_roles,
            self.gateway,
            max_rounds=self.config.refine_rounds,
            on_warning=self._warn_sink("planning"),
        )
        with self._lock:
            self._ptt = tree
        self._emit_tree()

        if next_todo(tree) is None:
            self._finalize(COMPLETE)
            return

        ctx = self._context()
        try:
            selection = select_task(
                tree,
                ctx,
                self._plan_roles,
                self.gateway,
                on_warning=self._warn_sink("planning"),
            )
        except NoTaskAvailable:
            self._finalize(COMPLETE)
            return
        node = tree.find(selection.node_id)
        self._emit(
            "task_selected",
            {
                "task_id": selection.node_id,
                "title": node.title if node else "",
                "rationale": selection.rationale,
            },
        )

        observations = self._gather_observations(selection, ctx)

        try:
            plan = plan_commands(
                selection,
                ctx,
                self._exec_roles,
                self.gateway,
                observations=observations,
                max_rounds=self.config.refine_rounds,
                on_warning=self._warn_sink("execution"),
            )
        except UnparseablePlan as exc:
            self._warn("execution", f"no usable plan for {selection.node_id}: {exc}")
            self._after_cycle(selection, outcome="failed_cycle")
            return
        self._emit("plan_proposed", self._plan_payload(plan, revision=0))

        outcome = self._execute_plan(selection, plan, observations)
        if outcome == "stopped":
            return
        self._after_cycle(selection, outcome=outcome)

    def _emit_tree(self) -> None:
        with self._lock:
            tree = self._ptt
        self._emit(
            "plan_updated",
            {"revision": tree.revision, "tree": serialize_ptt(tree)},
        )

    def _plan_payload(
        self, plan: CommandPlan, revision: int, feedback: str | None = None
    ) -> dict:
        return {
            "task_id": plan.task_id,
            "revision": revision,
            "feedback": feedback,
            "notes": plan.notes,
            "steps": [
                {
                    "session": s.session,
                    "command_line": s.command_line,
                    "purpose": s.purpose,
                    "timeout": s.timeout,
                    "interactive_inputs": list(s.interactive_inputs),
                }
                for s in plan.steps
            ],
        }

    def _gather_observations(
        self, selection: TaskSelection, ctx: PlanningContext
    ) -> str:
        try:
            actions = formulate_queries(
                selection, ctx, self._exec_roles, self.gateway
            )
        except BudgetExceeded:
            raise
        parts: list[str] = []
        for action in actions:
            count = 0
            if action.tool == "web_search" and self._web is not None:
                results = self._web.search(action.query)
                count = len(results)
                for r in results[:RESULTS_PER_QUERY]:
                    parts.append(f"- {r.title} ({r.url}): {r.snippet}")
            elif action.tool == "knowledge_base" and (
                self._store is not None and self._kb_ready
            ):
                hits = self._store.hybrid_search(action.query, k=RESULTS_PER_QUERY)
                count = len(hits)
                for hit in hits:
                    chunk = self._store.get_chunk(hit.chunk_id)
                    parts.append(f"- [{hit.chunk_id}] {chunk.text[:240]}")
            else:
                self._warn(
                    "retrieval", f"no backend for {action.tool}; query skipped"
                )
            self._emit(
                "query_issued",
                {
                    "task_id": selection.node_id,
                    "tool": action.tool,
                    "query": action.query,
                    "result_count": count,
                },
            )
        return "\n".join(parts)

    def _ensure_session(self, name: str) -> None:
        if name not in self.executor.open_sessions():
            self.executor.open_session(name)

    def _await_decision(self, ticket: ApprovalTicket) -> ApprovalTicket | None:
        if ticket.state != PENDING:
            return ticket
        for decider in self._deciders:
            params = decider(ticket)
            if params is not None:
                return self.tickets.decide(
                    ticket.ticket_id,
                    params["decision"],
                    operator=params.get("operator", "operator"),
                    reason=params.get("reason"),
                    edited_command=params.get("edited_command"),
                )
        while True:
            decided = self.tickets.wait_for_decision(ticket.ticket_id, timeout=0.05)
            if decided.state != PENDING:
                return decided
            if self._stop.is_set():
                return None

    def _execute_plan(
        self, selection: TaskSelection, plan: CommandPlan, observations: str
    ) -> str:
        """Run the plan's steps through the approval gate.

        Returns "completed", "failed_cycle" (leave the task for another
        cycle), "failed_task" (the operator said no too often; fail it now),
        or "stopped".
        """
        max_revisions = self.config.budgets.max_revisions_per_step
        revisions = 0
        step_summaries: list[Summary] = []
        index = 0
        while index < len(plan.steps):
            if self._stop.is_set():
                return "stopped"
            step = plan.steps[index]
            self._ensure_session(step.session)
            ticket = self.tickets.submit(step, explanation=step.purpose)
            self._emit(
                "ticket_submitted",
                {
                    "ticket_id": ticket.ticket_id,
                    "task_id": selection.node_id,
                    "step_index": index,
                    "session": step.session,
                    "command_line": step.command_line,
                    "purpose": step.purpose,
                    "risk_flags": list(ticket.risk_flags),
                },
            )
            decided = self._await_decision(ticket)
            if decided is None:
                return "stopped"
            self._emit(
                "ticket_decided",
                {
                    "ticket_id": decided.ticket_id,
                    "decision": decided.state,
                    "decided_by": decided.decided_by,
                    "reason": decided.reason,
                    "edited_command": decided.edited_command,
                },
            )

            if not decided.is_approved:
                revisions += 1
                feedback = (
                    f"The operator denied `{step.command_line}`: "
                    f"{decided.reason or 'no reason given'}"
                )
                if revisions > max_revisions:
                    self._warn(
                        "execution",
                        f"task {selection.node_id}: revision budget exhausted "
                        "after repeated denials; marking the task failed",
                    )
                    return "failed_task"
                try:
                    plan = revise_plan(
                        plan,
                        feedback,
                        self._exec_roles,
                        self.gateway,
                        denied_command=step.command_line,
                        observations=observations,
                        max_rounds=0,
                        on_warning=self._warn_sink("execution"),
                    )
                except UnparseablePlan as exc:
                    self._warn(
                        "execution",
                        f"task {selection.node_id}: no usable revision after "
                        f"denial ({exc}); marking the task failed",
                    )
                    return "failed_task"
                self._emit(
                    "plan_proposed",
                    self._plan_payload(plan, revision=revisions, feedback=feedback),
                )
                index = 0
                step_summaries.clear()
                continue

            override = (
                decided.edited_command
                if decided.state == APPROVED_WITH_EDIT
                else None
            )
            record = self.executor.execute_step(
                step, decided.ticket_id, command_override=override
            )
            self._emit(
                "step_executed",
                {
                    "ticket_id": decided.ticket_id,
                    "task_id": selection.node_id,
                    "step_index": index,
                    "session": record.session,
                    "command_line": record.command_line,
                    "exit_status": record.exit_status,
                    "error_class": record.error_class,
                    "output": record.output,
                    "truncated": record.truncated,
                    "duration": record.ended_at - record.started_at,
                },
            )

            failed = record.error_class is not None or (
                isinstance(record.exit_status, int) and record.exit_status != 0
            )
            if failed:
                revisions += 1
                feedback = self._describe_failure(record, step, index + 1)
                if revisions > max_revisions:
                    self._warn(
                        "execution",
                        f"task {selection.node_id}: revision budget exhausted; "
                        "leaving the task for a later cycle",
                    )
                    return "failed_cycle"
                try:
                    plan = revise_plan(
                        plan,
                        feedback,
                        self._exec_roles,
                        self.gateway,
                        observations=observations,
                        max_rounds=0,
                        on_warning=self._warn_sink("execution"),
                    )
                except UnparseablePlan as exc:
                    self._warn(
                        "execution",
                        f"task {selection.node_id}: no usable revision ({exc})",
                    )
                    return "failed_cycle"
                self._emit(
                    "plan_proposed",
                    self._plan_payload(plan, revision=revisions, feedback=feedback),
                )
                index = 0
                step_summaries.clear()
                continue

            raw = f"$ {record.command_line}\n{record.output}"
            summary = summarize(
                raw, step.purpose, self.gateway, source_ref=decided.ticket_id
            )
            self._emit(
                "summary_created",
                {
                    "task_id": selection.node_id,
                    "step_index": index,
                    "ticket_id": decided.ticket_id,
                    "text": summary.text,
                    "dropped_lines": summary.dropped_lines,
                },
            )
            with self._lock:
                self._summaries.append(summary)
            step_summaries.append(summary)

            for finding in extract_findings(
                raw, self.gateway, source_ref=decided.ticket_id
            ):
                key = (finding.kind, finding.value)
                with self._lock:
                    if key in self._finding_keys:
                        continue
                    self._finding_keys.add(key)
                    self._findings.append(finding)
                self._emit(
                    "finding_extracted",
                    {
                        "kind": finding.kind,
                        "value": finding.value,
                        "context": finding.context,
                        "source_ref": finding.source_ref,
                    },
                )
            index += 1

        self._complete_task(selection, step_summaries)
        return "completed"

    def _describe_failure(self, record, step, step_no: int) -> str:
        if record.error_class == "timeout":
            return (
                f"Step {step_no} `{record.command_line}` timed out after "
                f"{step.timeout:g}s."
            )
        tail = "\n".join(record.output.splitlines()[-FAILURE_TAIL_LINES:])
        return (
            f"Step {step_no} `{record.command_line}` exited with status "
            f"{record.exit_status}.\nOutput:\n{tail}"
        )

    def _complete_task(
        self, selection: TaskSelection, step_summaries: list[Summary]
    ) -> None:
        result_lines: list[str] = []
        for summary in step_summaries:
            for line in summary.text:
                line = line.strip()
                if line:
                    result_lines.append(line)
        result_lines = result_lines[:RESULT_LINE_CAP]
        with self._lock:
            self._ptt = set_status(
                self._ptt,
                selection.node_id,
                TaskStatus.COMPLETED,
                result_lines or None,
            )
        self._emit_tree()

    def _mark_task_failed(self, task_id: str) -> None:
        with self._lock:
            self._ptt = set_status(self._ptt, task_id, TaskStatus.FAILED)
        self._emit_tree()

    def _after_cycle(self, selection: TaskSelection, outcome: str) -> None:
        progress = False
        if outcome == "completed":
            self._fail_task, self._fail_streak = None, 0
            progress = True
        elif outcome == "failed_task":
            self._mark_task_failed(selection.node_id)
            self._fail_task, self._fail_streak = None, 0
            progress = True
        else:  # failed_cycle
            if selection.node_id == self._fail_task:
                self._fail_streak += 1
            else:
                self._fail_task, self._fail_streak = selection.node_id, 1
            if self._fail_streak >= STALL_CYCLE_LIMIT:
                self._warn(
                    "orchestrator",
                    f"task {selection.node_id} failed {self._fail_streak} "
                    "cycles in a row; marking it failed",
                )
                self._mark_task_failed(selection.node_id)
                self._fail_task, self._fail_streak = None, 0
                progress = True

        if progress:
            self._no_progress = 0
        else:
            self._no_progress += 1
            if self._no_progress >= NO_PROGRESS_LIMIT:
                self._finalize(STALLED)
                return

        self._maybe_snapshot()

    def _maybe_snapshot(self) -> None:
        if self._run_dir is None or self._cycle % SNAPSHOT_EVERY_CYCLES != 0:
            return
        snap_dir = self._run_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        path = snap_dir / f"cycle-{self._cycle:05d}.txt"
        with self._lock:
            text = serialize_ptt(self._ptt)
        path.write_text(text, encoding="utf-8")
        path.chmod(0o600)

    # -- views used by the control plane --------------------------------------

    def poll_session(self, name: str, cursor: int = 0) -> tuple[str, int]:
        return self.executor.poll_output(name, cursor)

    def session_names(self) -> list[str]:
        return self.executor.open_sessions()

    def display_secrets(self) -> list[str]:
        with self._lock:
            return secret_values(self._findings)


# --- wiring -------------------------------------------------------------------

def build_roles(
    prompts: dict[str, str], model: str
) -> dict[str, RoleProfile]:
    return {
        kind: RoleProfile(kind=kind, system_template=prompts[kind], model=model)
        for kind in ("reasoner", "evaluator", "analyst")
    }


def build_engine(
    bundle: Bundle,
    run_dir: Path | str | None = None,
    *,
    replay: bool = False,
    deciders: Sequence[Decider] | None = None,
    recorded_events: Sequence[Event] | None = None,
) -> Engagement:
    """Compose an engine from a loaded bundle.

    `replay` forces simulated mode, adds the recon auto-approve preset, and
    (unless deciders are supplied) approves the rest as operator "replay".
    """
    config = bundle.config
    if replay:
        merged = list(
            dict.fromkeys([*config.auto_approve_patterns, *RECON_PRESET_PATTERNS])
        )
        config = dataclasses.replace(
            config, mode="simulated", auto_approve_patterns=merged
        )
        if deciders is None:
            deciders = [approve_all_decider("replay")]
    config.validate()
    deciders = list(deciders or [])

    simulated = config.mode == "simulated"
    if simulated:
        executor = SimulatedExecutor(
            rules_from_config(bundle.scenario), clock=lambda: 0.0
        )
    else:
        executor = LiveExecutor(
            unsafe_live_execution=config.unsafe_live_execution,
            scope=config.scope,
        )

    models = config.models
    chat_providers = {
        model_id: ScriptedProvider.from_config(entries, name=model_id)
        for model_id, entries in bundle.provider_entries.items()
    }
    assignment = ModelAssignment(
        planning=models["planning"],
        execution=models["execution"],
        summarization=models["summarization"],
        embedding=models["embedding"],
        rerank=models["rerank"],
    )
    gateway = Gateway(
        chat_providers=chat_providers,
        assignment=assignment,
        embedding_providers={models["embedding"]: HashEmbeddingProvider()},
        rerank_providers={models["rerank"]: TermOverlapReranker()},
        token_budget=config.budgets.max_tokens,
    )

    policy = Policy(
        auto_approve_patterns=list(config.auto_approve_patterns),
        danger_patterns=list(config.danger_patterns),
        scope=list(config.scope),
    )
    tickets = TicketStore(policy, clock=(lambda: 0.0) if simulated else time.time)

    log_path = Path(run_dir) / "events.jsonl" if run_dir is not None else None
    log = EventLog(
        log_path,
        timestamp_for=sim_timestamp if simulated else wall_timestamp,
        recorded=recorded_events,
    )

    warn_proxy = _WarnProxy()
    web = WebSearchClient(
        WebSearchClient.fixtures_from_config(bundle.web_fixtures),
        on_warning=warn_proxy,
    )
    store = KnowledgeStore(gateway)
    for doc in bundle.corpus_docs:
        store.ingest(doc)

    engine = Engagement(
        config,
        gateway=gateway,
        executor=executor,
        tickets=tickets,
        log=log,
        plan_roles=build_roles(bundle.role_prompts, models["planning"]),
        exec_roles=build_roles(bundle.role_prompts, models["execution"]),
        web=web,
        store=store,
        kb_ready=bool(bundle.corpus_docs),
        deciders=deciders,
        run_dir=run_dir,
        replay=replay,
    )
    warn_proxy.target = engine._warn_sink("retrieval")
    return engine


def run_engagement(
    bundle: Bundle,
    run_dir: Path | str | None = None,
    *,
    replay: bool = False,
    deciders: Sequence[Decider] | None = None,
) -> EngagementState:
    engine = build_engine(bundle, run_dir, replay=replay, deciders=deciders)
    return engine.run()


def resume(
    run_dir: Path | str,
    bundle_path: Path | str | None = None,
    *,
    deciders: Sequence[Decider] | None = None,
) -> Engagement:
    """Rebuild an engine that retraces a recorded run, then continues it.

    The recorded operator decisions are injected ahead of any configured
    decider; pending tickets that were never decided stay pending. A live
    run cannot be resumed: the target's state is gone.
    """
    run_dir = Path(run_dir)
    events = load_events(run_dir / "events.jsonl")
    replay = False
    if events:
        started = events[0]
        if started.kind != "engagement_started":
            raise CorruptLog("log does not begin with engagement_started")
        if started.payload.get("mode") == "live":
            raise ConfigInvalid("a live engagement cannot be resumed")
        bundle_path = bundle_path or started.payload.get("bundle")
        replay = bool(started.payload.get("replay", False))
    if bundle_path is None:
        raise ConfigInvalid("resume needs a bundle path (empty or missing log)")
    bundle = load_bundle(bundle_path)
    resume_deciders: list[Decider] = [recorded_decisions_decider(events)]
    if deciders is not None:
        resume_deciders.extend(deciders)
    elif replay:
        resume_deciders.append(approve_all_decider("replay"))
    return build_engine(
        bundle,
        run_dir,
        replay=replay,
        deciders=resume_deciders,
        recorded_events=events,
    )


# --- log audits -----------------------------------------------------------------

def audit_gate(events: Sequence[Event]) -> list[str]:
    """Check the human-gate invariants over a finished log.

    Returns violation descriptions; an empty list means the log is sound:
    every executed step follows an approval for its ticket, and every denial
    is answered by a plan revision or a task failure.
    """
    violations: list[str] = []
    approved: set[int] = set()
    task_by_ticket: dict[int, str] = {}
    denials: list[tuple[int, int, str]] = []  # (event index, ticket, task)

    for idx, event in enumerate(events):
        payload = event.payload
        if event.kind == "ticket_submitted":
            task_by_ticket[payload["ticket_id"]] = payload["task_id"]
        elif event.kind == "ticket_decided":
            if payload["decision"] in ("approved", "approved_with_edit"):
                approved.add(payload["ticket_id"])
            elif payload["decision"] == "denied":
                ticket_id = payload["ticket_id"]
                denials.append(
                    (idx, ticket_id, task_by_ticket.get(ticket_id, ""))
                )
        elif event.kind == "step_executed":
            if payload["ticket_id"] not in approved:
                violations.append(
                    f"seq {event.seq}: step executed without an approved "
                    f"ticket {payload['ticket_id']}"
                )

    for idx, ticket_id, task_id in denials:
        answered = False
        for event in events[idx + 1 :]:
            if (
                event.kind == "plan_proposed"
                and event.payload.get("task_id") == task_id
                and event.payload.get("revision", 0) > 0
            ):
                answered = True
                break
            if event.kind == "plan_updated":
                tree = parse_ptt(event.payload["tree"])
                node = tree.find(task_id)
                if node is not None and node.status is TaskStatus.FAILED:
                    answered = True
                    break
        if not answered:
            violations.append(
                f"denied ticket {ticket_id} (task {task_id}) was never "
                "answered by a revision or task failure"
            )
    return violations
