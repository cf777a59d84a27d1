"""Turning a selected task into an executable, reviewable command plan.

Plans travel as fenced step blocks so parsing is a grammar, not a guess:

    ```step
    session: main
    purpose: service scan of the target
    timeout: 120
    nmap -sS -sV 10.10.11.11
    input: answer to the first prompt   (optional, repeatable)
    ```

Every parsed step demands approval; the policy allowlist, not the planner,
is the only thing that may wave a command through. Plans are data — nothing
in this module runs anything.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import UnparseablePlan
from .gateway import ChatMessage, ChatRequest, Gateway
from .planning import PlanningContext, TaskSelection, _render_findings, _render_summaries
from .refine import DEFAULT_MAX_ROUNDS, RoleProfile, ToolAction, parse_tool_actions, refine

DEFAULT_STEP_TIMEOUT = 120.0
MAX_QUERY_ACTIONS = 3

PLAN_REQUEST_HEADER = "Produce the command plan for the selected task."
REVISE_REQUEST_HEADER = "Revise the command plan for task {task_id}."
QUERY_REQUEST_HEADER = (
    "Propose search queries for the task as lines 'web_search: <query>' or "
    "'knowledge_base: <query>', or 'none'."
)
PLAN_GRAMMAR_HINT = (
    "Reply with one fenced block per step:\n"
    "```step\n"
    "session: <name>\n"
    "purpose: <why this step>\n"
    "timeout: <seconds>\n"
    "<the command line>\n"
    "input: <line sent after launch, repeatable>\n"
    "```"
)
PLAN_REMINDER = (
    "\n\nYour previous reply was not a valid command plan. Reply with fenced "
    "step blocks only, in the stated format."
)

_HEADER_RE = re.compile(r"^(?P<key>session|purpose|timeout)\s*:\s*(?P<value>.*?)\s*$", re.I)
_INPUT_RE = re.compile(r"^input\s*:\s?(?P<value>.*)$", re.I)
_FENCE_RE = re.compile(r"^```")
# commands that hold a port open; they detach instead of running to exit
_LISTENER_RE = re.compile(r"(?:^|[;&|]\s*)(?:nc|ncat)\s+(?:-\w*l|\-\-listen)|python3?\s+-m\s+http\.server")


@dataclass
class CommandStep:
    session: str
    command_line: str
    purpose: str = ""
    interactive_inputs: list[str] = field(default_factory=list)
    timeout: float = DEFAULT_STEP_TIMEOUT
    requires_approval: bool = True

    def __post_init__(self):
        if not self.command_line.strip():
            raise ValueError("command_line must be non-empty")
        if "\n" in self.command_line:
            raise ValueError("command_line must be a single line")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class CommandPlan:
    task_id: str
    steps: list[CommandStep]
    notes: str = ""

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a plan needs at least one step")


def is_listener(command_line: str) -> bool:
    return _LISTENER_RE.search(command_line) is not None


def parse_plan(text: str, task_id: str) -> CommandPlan:
    steps: list[CommandStep] = []
    notes: list[str] = []
    block: list[str] | None = None
    for line in text.splitlines():
        if _FENCE_RE.match(line.strip()):
            if block is None:
                block = []
            else:
                steps.append(_parse_block(block))
                block = None
            continue
        if block is not None:
            block.append(line)
        elif line.strip():
            notes.append(line.strip())
    if block is not None:
        raise UnparseablePlan("unclosed step block")
    if not steps:
        raise UnparseablePlan("no step blocks found")
    return CommandPlan(task_id=task_id, steps=steps, notes="\n".join(notes))


def _parse_block(lines: list[str]) -> CommandStep:
    session = "main"
    purpose = ""
    timeout = DEFAULT_STEP_TIMEOUT
    command: str | None = None
    inputs: list[str] = []
    for line in lines:
        if not line.strip():
            continue
        input_match = _INPUT_RE.match(line.strip())
        if input_match is not None:
            if command is None:
                raise UnparseablePlan("input line before the command line")
            inputs.append(input_match.group("value"))
            continue
        header = _HEADER_RE.match(line.strip())
        if header is not None and command is None:
            key = header.group("key").lower()
            value = header.group("value")
            if key == "session":
                session = value or "main"
            elif key == "purpose":
                purpose = value
            else:
                try:
                    timeout = float(value)
                except ValueError as exc:
                    raise UnparseablePlan(f"bad timeout {value!r}") from exc
            continue
        if command is not None:
            raise UnparseablePlan(
                f"second command line in one block: {line.strip()!r}"
            )
        command = line.strip()
    if command is None:
        raise UnparseablePlan("step block has no command line")
    try:
        return CommandStep(
            session=session,
            command_line=command,
            purpose=purpose,
            interactive_inputs=inputs,
            timeout=timeout,
        )
    except ValueError as exc:
        raise UnparseablePlan(str(exc)) from exc


def render_plan(plan: CommandPlan) -> str:
    """The inverse of parse_plan, used when a plan goes back into a prompt."""
    blocks = []
    for step in plan.steps:
        lines = [
            "```step",
            f"session: {step.session}",
            f"purpose: {step.purpose}",
            f"timeout: {step.timeout:g}",
            step.command_line,
        ]
        lines.extend(f"input: {text}" for text in step.interactive_inputs)
        lines.append("```")
        blocks.append("\n".join(lines))
    rendered = "\n\n".join(blocks)
    if plan.notes:
        rendered = plan.notes + "\n\n" + rendered
    return rendered


def _ask(role: RoleProfile, context: dict, gateway: Gateway, user_content: str) -> str:
    request = ChatRequest(
        model=role.model,
        messages=[
            ChatMessage("system", role.render(context)),
            ChatMessage("user", user_content),
        ],
    )
    return gateway.complete(request).text


def build_plan_request(
    task: TaskSelection, title: str, ctx: PlanningContext, observations: str
) -> str:
    parts = [
        f"{PLAN_REQUEST_HEADER}\nTask {task.node_id}: {title}",
    ]
    if task.rationale:
        parts.append(f"Rationale: {task.rationale}")
    parts.append(PLAN_GRAMMAR_HINT)
    parts.append(f"RECENT SUMMARIES:\n{_render_summaries(ctx.recent_summaries)}")
    parts.append(f"FINDINGS:\n{_render_findings(ctx.findings)}")
    if observations:
        parts.append(f"OBSERVATIONS:\n{observations}")
    return "\n\n".join(parts)


def plan_commands(
    task: TaskSelection,
    ctx: PlanningContext,
    roles: dict[str, RoleProfile],
    gateway: Gateway,
    *,
    tools: Callable[[ToolAction], str] | None = None,
    observations: str = "",
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    on_warning: Callable[[str], None] | None = None,
) -> CommandPlan:
    warn = on_warning or (lambda _message: None)
    node = ctx.current_ptt.find(task.node_id)
    title = node.title if node is not None else task.node_id
    request = build_plan_request(task, title, ctx, observations)
    context = {"request": request}
    outcome = refine(context, roles, gateway, tools=tools, max_rounds=max_rounds)
    try:
        return parse_plan(outcome.artifact, task.node_id)
    except UnparseablePlan as exc:
        warn(f"plan unparseable ({exc}); asking once more")
        if outcome.budget_exhausted:
            raise
        retry = _ask(roles["reasoner"], context, gateway, request + PLAN_REMINDER)
        return parse_plan(retry, task.node_id)  # second failure propagates


def revise_plan(
    plan: CommandPlan,
    feedback: str,
    roles: dict[str, RoleProfile],
    gateway: Gateway,
    *,
    success: bool = False,
    denied_command: str | None = None,
    observations: str = "",
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    on_warning: Callable[[str], None] | None = None,
) -> CommandPlan:
    """Rework a failed or denied plan; a successful record is a no-op.

    Steps repeating a denied command verbatim are stripped from the result:
    the operator said no, and a prompt is not a guarantee.
    """
    if success:
        return plan
    warn = on_warning or (lambda _message: None)
    request = "\n\n".join(
        part
        for part in [
            REVISE_REQUEST_HEADER.format(task_id=plan.task_id),
            f"CURRENT PLAN:\n{render_plan(plan)}",
            f"FAILURE:\n{feedback}",
            f"OBSERVATIONS:\n{observations}" if observations else "",
        ]
        if part
    )
    context = {"request": request}
    outcome = refine(context, roles, gateway, max_rounds=max_rounds)
    try:
        revised = parse_plan(outcome.artifact, plan.task_id)
    except UnparseablePlan as exc:
        warn(f"revision unparseable ({exc}); asking once more")
        if outcome.budget_exhausted:
            raise
        retry = _ask(roles["reasoner"], context, gateway, request + PLAN_REMINDER)
        revised = parse_plan(retry, plan.task_id)
    if denied_command is not None:
        kept = [s for s in revised.steps if s.command_line != denied_command]
        if not kept:
            raise UnparseablePlan("revision repeated only the denied command")
        if len(kept) < len(revised.steps):
            warn("revision repeated the denied command; step dropped")
            revised = CommandPlan(task_id=revised.task_id, steps=kept, notes=revised.notes)
    return revised


def build_query_request(task: TaskSelection, title: str, ctx: PlanningContext) -> str:
    return (
        f"{QUERY_REQUEST_HEADER}\n"
        f"Task {task.node_id}: {title}\n\n"
        f"RECENT SUMMARIES:\n{_render_summaries(ctx.recent_summaries)}\n\n"
        f"FINDINGS:\n{_render_findings(ctx.findings)}"
    )


def formulate_queries(
    task: TaskSelection,
    ctx: PlanningContext,
    roles: dict[str, RoleProfile],
    gateway: Gateway,
) -> list[ToolAction]:
    node = ctx.current_ptt.find(task.node_id)
    title = node.title if node is not None else task.node_id
    request = build_query_request(task, title, ctx)
    reply = _ask(roles["reasoner"], {"request": request}, gateway, request)
    return parse_tool_actions(reply, cap=MAX_QUERY_ACTIONS)
