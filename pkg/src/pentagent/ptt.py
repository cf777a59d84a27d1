"""Pentesting task tree: the shared plan structure the planner and the
operator both read.

The tree lives as text in model prompts and as structured nodes in the
engine, so the grammar here is the contract: one node per line,

    <dotted-id> <title> - [<status>]     depth 1
    <dotted-id> <title> - (<status>)     deeper nodes

with optional "- <text>" bullet lines attaching a result note to the nearest
preceding node, and a bare "..." line marking "unchanged subtree here" for
merge. Indentation is cosmetic: two spaces per level below the phase line on
output, ignored entirely on input. Node ids, not whitespace, carry depth.
"""

from __future__ import annotations

import copy
import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .errors import (
    DuplicateId,
    InvalidStatusToken,
    MalformedLine,
    OrphanResultBullet,
)


class TaskStatus(str, enum.Enum):
    TODO = "to-do"
    IN_PROGRESS = "in-progress"
    COMPLETED = "completed"
    FAILED = "failed"

    def __str__(self) -> str:  # serialize as the bare token
        return self.value


_STATUS_BY_TEXT = {s.value: s for s in TaskStatus}

# Node line: id, title (greedy, may itself contain " - "), status in [] or ().
# The status anchor at end-of-line keeps titles with embedded separators safe.
_NODE_RE = re.compile(
    r"^(?P<id>\d+(?:\.\d+)*) (?P<title>.*\S) - "
    r"[\[(](?P<status>to-do|in-progress|completed|failed)[\])]$"
)
# Looser shape used only to report a bad status token precisely.
_NODE_SHAPE_RE = re.compile(
    r"^(?P<id>\d+(?:\.\d+)*) (?P<title>.*\S) - [\[(](?P<status>[^\])]*)[\])]$"
)

ELLIPSIS_LINE = "..."


@dataclass
class ResultNote:
    """Verbatim evidence lines shown under a node ("- " prefixed on output)."""

    lines: list[str]


@dataclass
class PttNode:
    id: str
    title: str
    status: TaskStatus
    result: ResultNote | None = None
    children: list[PttNode] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.id.count(".") + 1

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator[PttNode]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class Ptt:
    phases: list[PttNode] = field(default_factory=list)
    revision: int = field(default=0, compare=False)
    # Ids under which an "..." marker appeared in the source text; "" means a
    # marker before any node. Parse-only bookkeeping for merge, never emitted.
    elisions: frozenset[str] = field(default_factory=frozenset, compare=False)

    def walk(self) -> Iterator[PttNode]:
        for phase in self.phases:
            yield from phase.walk()

    def find(self, node_id: str) -> PttNode | None:
        for node in self.walk():
            if node.id == node_id:
                return node
        return None

    @property
    def is_empty(self) -> bool:
        return not self.phases


def _final_segment(node_id: str) -> int:
    return int(node_id.rsplit(".", 1)[-1])


def _parent_id(node_id: str) -> str | None:
    if "." not in node_id:
        return None
    return node_id.rsplit(".", 1)[0]


def _ancestor_ids(node_id: str) -> list[str]:
    parts = node_id.split(".")
    return [".".join(parts[:i]) for i in range(1, len(parts))]


def parse_ptt(text: str) -> Ptt:
    """Parse task-tree text into a Ptt.

    Tolerant where model output needs it (indentation ignored, either status
    bracket form accepted, blank lines skipped), strict where structure is at
    stake: unknown ids' parents, non-increasing sibling ids, duplicate ids and
    unknown status tokens all raise. A completed node with incomplete children
    is repaired to in-progress rather than rejected, since planners routinely
    mark a phase done while appending new work under it.
    """
    by_id: dict[str, PttNode] = {}
    phases: list[PttNode] = []
    elisions: set[str] = set()
    last_node: PttNode | None = None

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line == ELLIPSIS_LINE:
            elisions.add(last_node.id if last_node is not None else "")
            continue
        if line.startswith("- ") or line == "-":
            if last_node is None:
                raise OrphanResultBullet("result bullet before any node", line_no)
            if last_node.result is None:
                last_node.result = ResultNote(lines=[])
            last_node.result.lines.append(line[2:])
            continue

        m = _NODE_RE.match(line)
        if m is None:
            shape = _NODE_SHAPE_RE.match(line)
            if shape is not None and shape.group("status") not in _STATUS_BY_TEXT:
                raise InvalidStatusToken(
                    f"unknown status {shape.group('status')!r}", line_no
                )
            raise MalformedLine(f"not a task line: {line!r}", line_no)

        node_id = m.group("id")
        if node_id in by_id:
            raise DuplicateId(f"id {node_id} appears twice", line_no)
        parent_id = _parent_id(node_id)
        if parent_id is None:
            siblings = phases
        else:
            parent = by_id.get(parent_id)
            if parent is None:
                raise MalformedLine(
                    f"node {node_id} has no parent {parent_id} above it", line_no
                )
            siblings = parent.children
        if siblings and _final_segment(siblings[-1].id) >= _final_segment(node_id):
            raise MalformedLine(
                f"sibling ids must strictly increase at {node_id}", line_no
            )

        node = PttNode(
            id=node_id,
            title=m.group("title"),
            status=_STATUS_BY_TEXT[m.group("status")],
        )
        by_id[node_id] = node
        siblings.append(node)
        last_node = node

    tree = Ptt(phases=phases, revision=0, elisions=frozenset(elisions))
    _normalize_statuses(tree)
    return tree


def serialize_ptt(tree: Ptt) -> str:
    """Emit canonical text: preorder, 2-space indent per level below phases,
    [] brackets on phases and () below, result bullets at the node's indent."""
    lines: list[str] = []
    for node in tree.walk():
        indent = "  " * (node.depth - 1)
        if node.depth == 1:
            status = f"[{node.status}]"
        else:
            status = f"({node.status})"
        lines.append(f"{indent}{node.id} {node.title} - {status}")
        if node.result is not None:
            for result_line in node.result.lines:
                lines.append(f"{indent}- {result_line}")
    return "\n".join(lines)


def _normalize_statuses(tree: Ptt) -> None:
    """Repair upward inconsistency: completed requires all children completed."""

    def visit(node: PttNode) -> None:
        for child in node.children:
            visit(child)
        if node.status is TaskStatus.COMPLETED and any(
            c.status is not TaskStatus.COMPLETED for c in node.children
        ):
            node.status = TaskStatus.IN_PROGRESS

    for phase in tree.phases:
        visit(phase)


def _copy_node_shallow(node: PttNode) -> PttNode:
    return PttNode(
        id=node.id,
        title=node.title,
        status=node.status,
        result=copy.deepcopy(node.result),
        children=[],
    )


def merge_update(
    current: Ptt,
    proposed: Ptt,
    on_warning: Callable[[str], None] | None = None,
) -> Ptt:
    """Fold a proposed tree onto the current one without losing evidence.

    Proposed nodes win, with three exceptions: a title conflict keeps the
    current title (warning), a completed current node never regresses to
    to-do, and a node's recorded result survives a proposal that omits it.
    Current nodes missing from the proposal are re-inserted when they are
    completed-with-result, or when they sit under an "..." elision marker.
    Revision always advances by one.
    """

    def warn(message: str) -> None:
        if on_warning is not None:
            on_warning(message)

    merged: dict[str, PttNode] = {}
    cur_index = {n.id: n for n in current.walk()}

    for pn in proposed.walk():
        node = _copy_node_shallow(pn)
        cn = cur_index.get(pn.id)
        if cn is not None:
            if cn.title != pn.title:
                warn(
                    f"task {pn.id}: keeping title {cn.title!r}, "
                    f"proposal renamed it to {pn.title!r}"
                )
                node.title = cn.title
            if (
                cn.status is TaskStatus.COMPLETED
                and pn.status is TaskStatus.TODO
            ):
                node.status = TaskStatus.COMPLETED
            if node.result is None and cn.result is not None:
                node.result = copy.deepcopy(cn.result)
        merged[pn.id] = node

    # Which missing current nodes come back: everything under an elision
    # marker, plus any completed node carrying results.
    elided: set[str] = set()
    for marker in proposed.elisions:
        for cn in current.walk():
            if marker == "" or cn.id == marker or cn.id.startswith(marker + "."):
                elided.add(cn.id)

    for cn in current.walk():  # preorder, so ancestors come first
        if cn.id in merged:
            continue
        keep = cn.id in elided or (
            cn.status is TaskStatus.COMPLETED and cn.result is not None
        )
        if not keep:
            continue
        for anc_id in _ancestor_ids(cn.id):
            if anc_id not in merged:
                merged[anc_id] = _copy_node_shallow(cur_index[anc_id])
        merged[cn.id] = _copy_node_shallow(cn)

    # Rebuild child lists ordered by final id segment.
    phases: list[PttNode] = []
    for node_id in sorted(merged, key=lambda i: [int(s) for s in i.split(".")]):
        node = merged[node_id]
        parent_id = _parent_id(node_id)
        if parent_id is None:
            phases.append(node)
        else:
            merged[parent_id].children.append(node)

    result = Ptt(phases=phases, revision=current.revision + 1)
    _normalize_statuses(result)
    return result


def next_todo(tree: Ptt) -> PttNode | None:
    """First to-do leaf in document order; None when no work remains."""
    for node in tree.walk():
        if node.is_leaf and node.status is TaskStatus.TODO:
            return node
    return None


def set_status(
    tree: Ptt,
    node_id: str,
    status: TaskStatus,
    result_lines: list[str] | None = None,
) -> Ptt:
    """Return a new tree with one node's status (and optionally result) set.

    Completing a node promotes each ancestor whose children are then all
    completed, so finished phases read as finished. Revision advances.
    """
    new_tree = Ptt(
        phases=copy.deepcopy(tree.phases),
        revision=tree.revision + 1,
    )
    node = new_tree.find(node_id)
    if node is None:
        raise KeyError(f"no task with id {node_id}")
    node.status = status
    if result_lines is not None:
        node.result = ResultNote(lines=list(result_lines))
    if status is TaskStatus.COMPLETED:
        for anc_id in reversed(_ancestor_ids(node_id)):
            anc = new_tree.find(anc_id)
            assert anc is not None
            if all(c.status is TaskStatus.COMPLETED for c in anc.children):
                anc.status = TaskStatus.COMPLETED
    _normalize_statuses(new_tree)
    return new_tree
