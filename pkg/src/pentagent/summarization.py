"""Grounded summaries and verbatim finding extraction.

The model proposes, the filter disposes: summary lines that reference numbers
or quoted strings absent from the source are dropped mechanically, and any
proposed finding whose value is not a verbatim substring of the source is
discarded. Prompting alone cannot guarantee a model never embellishes, so the
guarantees live in code, not in the prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .gateway import ChatMessage, ChatRequest, Gateway

SUMMARIZE_INSTRUCTION = "Summarize the output below for purpose: {purpose}.\n\n"
EXTRACT_INSTRUCTION = (
    "Extract findings from the output below. One per line as 'kind: value'.\n\n"
)

SUMMARIZER_SYSTEM = (
    "You condense penetration-test tool output. State only facts present in "
    "the output; never invent hosts, ports, versions or credentials."
)
EXTRACTOR_SYSTEM = (
    "You list security findings from tool output. Every value must be copied "
    "verbatim from the output. Reply 'none' when there is nothing to extract."
)

MAX_SUMMARY_LINES = 40
TRUNCATE_HEAD_LINES = 200
TRUNCATE_TAIL_LINES = 200
CONTEXT_CHARS = 120

FINDING_KINDS = frozenset(
    {
        "credential",
        "username",
        "hostname",
        "port",
        "service",
        "version",
        "path",
        "cve",
        "other",
    }
)

_CVE_RE = re.compile(r"CVE-\d{4}-\d{4,}", re.IGNORECASE)
_IPV4_RE = re.compile(r"(?:\d{1,3}\.){3}\d{1,3}")
_PORT_RE = re.compile(r"\d+/(?:tcp|udp)")
_DIGIT_RUN_RE = re.compile(r"\d+")
# paired quotes only; an unpaired quote constrains nothing
_QUOTED_RE = re.compile(r"\"([^\"\n]*)\"|'([^'\n]*)'")
_FINDING_LINE_RE = re.compile(
    r"^\s*(?:[-*]\s*)?(?P<kind>[A-Za-z_]+)\s*:\s*(?P<value>\S.*?)\s*$"
)


@dataclass
class Summary:
    text: list[str]  # grounded lines, at most MAX_SUMMARY_LINES
    dropped_lines: int  # lines removed by the groundedness filter
    source_ref: int | None = None  # event seq of the raw output


@dataclass(frozen=True)
class Finding:
    kind: str
    value: str
    source_ref: int | None = None
    context: str = ""  # <= CONTEXT_CHARS of surrounding source text


def truncate_for_prompt(
    raw: str, head: int = TRUNCATE_HEAD_LINES, tail: int = TRUNCATE_TAIL_LINES
) -> str:
    """Clip very long output to head+tail lines for the prompt only.

    Validation always runs against the full text; only the model's view
    shrinks.
    """
    lines = raw.splitlines()
    if len(lines) <= head + tail:
        return raw
    omitted = len(lines) - head - tail
    marker = f"[... {omitted} lines omitted ...]"
    return "\n".join(lines[:head] + [marker] + lines[-tail:])


def is_grounded_line(line: str, raw: str) -> bool:
    """True when every digit run and every paired-quote token occurs in raw."""
    for run in _DIGIT_RUN_RE.findall(line):
        if run not in raw:
            return False
    for match in _QUOTED_RE.finditer(line):
        token = match.group(1) if match.group(1) is not None else match.group(2)
        if token and token not in raw:
            return False
    return True


def summarize(
    raw: str,
    purpose: str,
    gateway: Gateway,
    *,
    source_ref: int | None = None,
    model: str | None = None,
) -> Summary:
    if not raw:
        raise ValueError("cannot summarize empty output")
    prompt = SUMMARIZE_INSTRUCTION.format(purpose=purpose) + truncate_for_prompt(raw)
    request = ChatRequest(
        model=model or gateway.assignment.summarization,
        messages=[
            ChatMessage("system", SUMMARIZER_SYSTEM),
            ChatMessage("user", prompt),
        ],
    )
    reply = gateway.complete(request).text
    kept: list[str] = []
    dropped = 0
    for line in reply.splitlines():
        if not line.strip():
            continue
        if is_grounded_line(line, raw):
            kept.append(line.rstrip())
        else:
            dropped += 1
    return Summary(
        text=kept[:MAX_SUMMARY_LINES], dropped_lines=dropped, source_ref=source_ref
    )


def classify_kind(value: str, proposed: str) -> str:
    """Regex patterns win; the model's label only breaks the remaining ties."""
    if _CVE_RE.fullmatch(value):
        return "cve"
    if _IPV4_RE.fullmatch(value):
        return "hostname"
    if _PORT_RE.fullmatch(value):
        return "port"
    kind = proposed.strip().lower()
    return kind if kind in FINDING_KINDS else "other"


def harvest_cves(raw: str) -> list[str]:
    """Verbatim CVE identifiers in first-appearance order, deduplicated."""
    return list(dict.fromkeys(_CVE_RE.findall(raw)))


def _context_window(raw: str, value: str) -> str:
    idx = raw.find(value)
    if idx < 0:
        return ""
    lo = raw.rfind("\n", 0, idx) + 1
    hi = raw.find("\n", idx + len(value))
    if hi < 0:
        hi = len(raw)
    segment = raw[lo:hi]
    if len(segment) > CONTEXT_CHARS:
        pos = idx - lo
        start = max(
            0,
            min(pos - (CONTEXT_CHARS - len(value)) // 2, len(segment) - CONTEXT_CHARS),
        )
        segment = segment[start : start + CONTEXT_CHARS]
    return segment.strip()


def extract_findings(
    raw: str,
    gateway: Gateway,
    *,
    source_ref: int | None = None,
    model: str | None = None,
) -> list[Finding]:
    if not raw:
        return []
    findings: list[Finding] = []
    seen: set[tuple[str, str]] = set()

    def admit(proposed_kind: str, value: str) -> None:
        if not value or value not in raw:  # groundedness gate, no exceptions
            return
        kind = classify_kind(value, proposed_kind)
        key = (kind, value)
        if key in seen:
            return
        seen.add(key)
        findings.append(
            Finding(
                kind=kind,
                value=value,
                source_ref=source_ref,
                context=_context_window(raw, value),
            )
        )

    request = ChatRequest(
        model=model or gateway.assignment.summarization,
        messages=[
            ChatMessage("system", EXTRACTOR_SYSTEM),
            ChatMessage("user", EXTRACT_INSTRUCTION + truncate_for_prompt(raw)),
        ],
    )
    reply = gateway.complete(request).text
    for line in reply.splitlines():
        stripped = line.strip()
        if not stripped or stripped.lower() == "none":
            continue
        match = _FINDING_LINE_RE.match(line)
        if match is None:
            continue  # junk lines are tolerated, not fatal
        admit(match.group("kind"), match.group("value"))

    # CVE ids are harvested from the source regardless of what the model said
    for cve in harvest_cves(raw):
        admit("cve", cve)
    return findings
