"""Task-tree upkeep and next-task selection.

The planner proposes a full replacement tree each cycle; merge_update keeps
completed work and recorded results safe from model forgetfulness. Selection
is a single model ask validated against the tree, with a deterministic
fallback to the first open leaf so an engagement never stalls on a bad id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import NoTaskAvailable, PttParseError
from .gateway import ChatMessage, ChatRequest, Gateway
from .ptt import Ptt, TaskStatus, merge_update, next_todo, parse_ptt, serialize_ptt
from .refine import DEFAULT_MAX_ROUNDS, RoleProfile, ToolAction, refine
from .summarization import Finding, Summary

UPDATE_REQUEST_HEADER = (
    "Propose the updated task tree for the engagement. Reply with the full "
    "tree, one task per line, as '<id> <title> - [<status>]'."
)
TREE_REMINDER = (
    "\n\nYour previous reply was not a valid task tree. Reply with only the "
    "updated tree, one task per line, as '<id> <title> - [<status>]'."
)
SELECT_REQUEST_HEADER = (
    "Select the next task to perform. Reply 'TASK: <id>' and "
    "'RATIONALE: <why>'."
)

MAX_CONTEXT_SUMMARIES = 5

_TASK_LINE_RE = re.compile(r"^\s*TASK:\s*(?P<id>\d+(?:\.\d+)*)\s*$", re.I | re.M)
_RATIONALE_LINE_RE = re.compile(r"^\s*RATIONALE:\s*(?P<why>\S.*?)\s*$", re.I | re.M)


@dataclass
class PlanningContext:
    current_ptt: Ptt
    recent_summaries: list[Summary] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)
    scope: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TaskSelection:
    node_id: str
    rationale: str = ""


def strip_fences(text: str) -> str:
    return "\n".join(
        line for line in text.splitlines() if not line.lstrip().startswith("```")
    )


def _render_summaries(summaries: list[Summary]) -> str:
    recent = summaries[-MAX_CONTEXT_SUMMARIES:]
    blocks = ["\n".join(s.text) for s in recent if s.text]
    return "\n\n".join(blocks) if blocks else "(none)"


def _render_findings(findings: list[Finding]) -> str:
    lines = [f"{f.kind}: {f.value}" for f in findings]
    return "\n".join(dict.fromkeys(lines)) if lines else "(none)"


def build_update_request(ctx: PlanningContext) -> str:
    tree = "(empty)" if ctx.current_ptt.is_empty else serialize_ptt(ctx.current_ptt)
    return (
        f"{UPDATE_REQUEST_HEADER}\n\n"
        f"CURRENT TREE:\n{tree}\n\n"
        f"RECENT SUMMARIES:\n{_render_summaries(ctx.recent_summaries)}\n\n"
        f"FINDINGS:\n{_render_findings(ctx.findings)}\n\n"
        f"SCOPE: {', '.join(ctx.scope) if ctx.scope else '(unset)'}"
    )


def build_select_request(ptt: Ptt, ctx: PlanningContext) -> str:
    return (
        f"{SELECT_REQUEST_HEADER}\n\n"
        f"TREE:\n{serialize_ptt(ptt)}\n\n"
        f"FINDINGS:\n{_render_findings(ctx.findings)}"
    )


def _ask(role: RoleProfile, context: dict, gateway: Gateway, user_content: str) -> str:
    request = ChatRequest(
        model=role.model,
        messages=[
            ChatMessage("system", role.render(context)),
            ChatMessage("user", user_content),
        ],
    )
    return gateway.complete(request).text


def update_plan(
    ctx: PlanningContext,
    roles: dict[str, RoleProfile],
    gateway: Gateway,
    *,
    tools: Callable[[ToolAction], str] | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    on_warning: Callable[[str], None] | None = None,
) -> Ptt:
    """Refine a replacement tree and merge it over the current one.

    A reply that fails to parse gets one corrective re-ask; if that also
    fails, the current tree is kept unchanged and the caller hears about it
    through on_warning. Nothing here raises for model misbehavior.
    """
    warn = on_warning or (lambda _message: None)
    request = build_update_request(ctx)
    context = {"request": request}
    outcome = refine(context, roles, gateway, tools=tools, max_rounds=max_rounds)
    try:
        proposed = parse_ptt(strip_fences(outcome.artifact))
    except PttParseError as exc:
        warn(f"proposed tree unparseable ({exc}); asking once more")
        if outcome.budget_exhausted:
            return ctx.current_ptt
        retry = _ask(roles["reasoner"], context, gateway, request + TREE_REMINDER)
        try:
            proposed = parse_ptt(strip_fences(retry))
        except PttParseError as exc2:
            warn(f"proposed tree unparseable again ({exc2}); keeping current tree")
            return ctx.current_ptt
    return merge_update(ctx.current_ptt, proposed, on_warning=warn)


def select_task(
    ptt: Ptt,
    ctx: PlanningContext,
    roles: dict[str, RoleProfile],
    gateway: Gateway,
    *,
    on_warning: Callable[[str], None] | None = None,
) -> TaskSelection:
    warn = on_warning or (lambda _message: None)
    fallback = next_todo(ptt)
    if fallback is None:
        raise NoTaskAvailable("tree has no to-do leaf")
    context = {"request": build_select_request(ptt, ctx)}
    reply = _ask(roles["reasoner"], context, gateway, context["request"])
    id_match = _TASK_LINE_RE.search(reply)
    why_match = _RATIONALE_LINE_RE.search(reply)
    rationale = why_match.group("why") if why_match else ""
    if id_match:
        node = ptt.find(id_match.group("id"))
        if node is not None and node.is_leaf and node.status == TaskStatus.TODO:
            return TaskSelection(node_id=node.id, rationale=rationale)
    warn(f"selection reply invalid (first line {reply.splitlines()[:1]!r})")
    return TaskSelection(node_id=fallback.id, rationale="deterministic fallback")
