"""Self-refinement loop shared by the planning and execution modules.

One reasoner drafts, one evaluator votes ACCEPT/REVISE through a forced
one-line verdict grammar, and an optional analyst may pull in outside
evidence (retrieval or web lookups) between rounds. The loop is bounded by
an evaluator-call budget: a round normally costs one call, a malformed
verdict costs a second (the single corrective re-ask), and when the budget
runs out the last revision is returned unaccepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import BudgetExceeded, ConfigInvalid, MalformedVerdict
from .gateway import ChatMessage, ChatRequest, Gateway

DEFAULT_MAX_ROUNDS = 3
MAX_ANALYST_ACTIONS = 2

EVALUATE_PREFIX = (
    "Critique the following draft and reply with VERDICT: ACCEPT or "
    "VERDICT: REVISE on the first line, reasons after it.\n\nDRAFT:\n"
)
VERDICT_REMINDER = (
    "\n\nYour previous reply did not follow the verdict grammar. Reply again "
    "with VERDICT: ACCEPT or VERDICT: REVISE as the first line."
)
ANALYST_PREFIX = (
    "Propose up to {cap} lookups that would improve the draft, one per line, "
    "as 'web_search: <query>' or 'knowledge_base: <query>'. "
    "Reply 'none' if nothing would help.\n\n"
)

_VERDICT_LINE_RE = re.compile(r"^\s*verdict\s*:\s*(?P<rest>.*)$", re.IGNORECASE)
_VERDICT_TOKEN_RE = re.compile(r"^(accept|revise)\b(?P<feedback>.*)$", re.IGNORECASE)
_ACTION_LINE_RE = re.compile(
    r"^\s*(?:[-*]\s*)?(?P<tool>web_search|knowledge_base)\s*:\s*(?P<query>\S.*)$",
    re.IGNORECASE,
)


@dataclass
class RoleProfile:
    """A participant in the loop: prompt template plus model binding."""

    kind: str  # "reasoner" | "evaluator" | "analyst"
    system_template: str
    model: str

    def render(self, context: dict[str, str]) -> str:
        try:
            return self.system_template.format(**context)
        except (KeyError, IndexError) as exc:
            raise ConfigInvalid(
                f"{self.kind} template placeholder unbound: {exc}"
            ) from exc


@dataclass
class Critique:
    accepted: bool
    feedback: str


@dataclass(frozen=True)
class ToolAction:
    tool: str  # "web_search" | "knowledge_base"
    query: str


@dataclass
class RefineRound:
    draft: str
    critique: Critique
    actions: list[tuple[ToolAction, str]] = field(default_factory=list)
    revision: str | None = None


@dataclass
class RefineOutcome:
    artifact: str
    accepted: bool
    rounds: list[RefineRound] = field(default_factory=list)
    evaluator_calls: int = 0
    budget_exhausted: bool = False


def parse_verdict(text: str) -> Critique:
    """First line matching 'VERDICT:' decides; the rest is feedback.

    A verdict line with an unknown token, or no verdict line at all, raises
    MalformedVerdict. A bare REVISE keeps the raw reply as feedback so the
    reasoner always has something to act on.
    """
    lines = text.splitlines()
    for index, line in enumerate(lines):
        m = _VERDICT_LINE_RE.match(line)
        if m is None:
            continue
        token = _VERDICT_TOKEN_RE.match(m.group("rest").strip())
        if token is None:
            raise MalformedVerdict(
                f"unknown verdict token in line {line.strip()!r}"
            )
        accepted = token.group(1).lower() == "accept"
        feedback = token.group("feedback").strip()
        remainder = "\n".join(lines[index + 1:]).strip()
        if remainder:
            feedback = f"{feedback}\n{remainder}".strip() if feedback else remainder
        if not accepted and not feedback:
            feedback = text.strip()
        return Critique(accepted=accepted, feedback=feedback)
    raise MalformedVerdict("no VERDICT line in evaluator reply")


def parse_tool_actions(text: str, cap: int) -> list[ToolAction]:
    """Pull 'tool: query' lines from model output, capped, junk ignored."""
    actions: list[ToolAction] = []
    for line in text.splitlines():
        m = _ACTION_LINE_RE.match(line)
        if m is None:
            continue
        actions.append(
            ToolAction(tool=m.group("tool").lower(), query=m.group("query").strip())
        )
        if len(actions) >= cap:
            break
    return actions


def refine(
    context: dict[str, str],
    roles: dict[str, RoleProfile],
    gateway: Gateway,
    tools: Callable[[ToolAction], str] | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> RefineOutcome:
    """Run the draft/critique/revise loop and return the final artifact.

    `context` must carry "request" (the reasoner's task); every other key is
    available to the role templates. `tools` resolves an analyst action to an
    observation string (already summarized by the caller's pipeline).
    """
    if "request" not in context:
        raise ConfigInvalid("refine context needs a 'request' entry")
    reasoner = roles["reasoner"]
    evaluator = roles["evaluator"]
    analyst = roles.get("analyst")

    def ask(role: RoleProfile, user_content: str) -> str:
        request = ChatRequest(
            model=role.model,
            messages=[
                ChatMessage("system", role.render(context)),
                ChatMessage("user", user_content),
            ],
        )
        return gateway.complete(request).text

    draft = ask(reasoner, context["request"])
    outcome = RefineOutcome(artifact=draft, accepted=False)

    while outcome.evaluator_calls < max_rounds:
        try:
            reply = ask(evaluator, EVALUATE_PREFIX + draft)
        except BudgetExceeded:
            outcome.budget_exhausted = True
            return outcome
        outcome.evaluator_calls += 1
        try:
            critique = parse_verdict(reply)
        except MalformedVerdict:
            # one corrective re-ask; it spends a second evaluator call
            if outcome.evaluator_calls >= max_rounds:
                critique = Critique(accepted=False, feedback=reply.strip())
            else:
                try:
                    retry = ask(evaluator, EVALUATE_PREFIX + draft + VERDICT_REMINDER)
                except BudgetExceeded:
                    outcome.budget_exhausted = True
                    return outcome
                outcome.evaluator_calls += 1
                try:
                    critique = parse_verdict(retry)
                except MalformedVerdict:
                    # second failure counts as a revise with the raw reply
                    critique = Critique(accepted=False, feedback=retry.strip())

        round_record = RefineRound(draft=draft, critique=critique)
        outcome.rounds.append(round_record)
        if critique.accepted:
            outcome.artifact = draft
            outcome.accepted = True
            return outcome

        try:
            if analyst is not None and tools is not None:
                analyst_reply = ask(
                    analyst,
                    ANALYST_PREFIX.format(cap=MAX_ANALYST_ACTIONS)
                    + f"DRAFT:\n{draft}\n\nFEEDBACK:\n{critique.feedback}",
                )
                for action in parse_tool_actions(analyst_reply, MAX_ANALYST_ACTIONS):
                    observation = tools(action)
                    round_record.actions.append((action, observation))

            revision_prompt = (
                f"{context['request']}\n\nPREVIOUS DRAFT:\n{draft}\n\n"
                f"FEEDBACK:\n{critique.feedback}"
            )
            if round_record.actions:
                observations = "\n\n".join(obs for _, obs in round_record.actions)
                revision_prompt += f"\n\nOBSERVATIONS:\n{observations}"
            draft = ask(reasoner, revision_prompt)
        except BudgetExceeded:
            outcome.budget_exhausted = True
            return outcome

        round_record.revision = draft
        outcome.artifact = draft

    return outcome
