"""Command-line surface: run, replay, ingest, approve, log.

Display rules here mirror the HTTP API: credential findings are masked on
everything printed, and only `log --reveal` shows raw values. Exit codes:
0 success, 1 engagement or remote failure, 2 usage errors.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

import click
import httpx

from .config import (
    DEFAULT_MODELS,
    TOKEN_ENV_VAR,
    load_bundle,
    load_corpus_manifest,
)
from .errors import BundleMissing, ConfigInvalid, CorruptLog, PentagentError
from .events import load_events
from .gateway import (
    Gateway,
    HashEmbeddingProvider,
    ModelAssignment,
    TermOverlapReranker,
)
from .orchestrator import (
    COMPLETE,
    MIN_SECRET_LENGTH,
    SECRET_FINDING_KINDS,
    build_engine,
    redact_structure,
    redact_text,
)
from .retrieval import KnowledgeStore


@click.group()
def main() -> None:
    """Semi-autonomous penetration-testing engine."""


def _load_bundle_or_usage(bundle_dir: str):
    try:
        return load_bundle(bundle_dir)
    except (BundleMissing, ConfigInvalid) as exc:
        raise click.UsageError(str(exc)) from exc


def _print_outcome(engine) -> int:
    state = engine.state()
    secrets = engine.display_secrets()
    click.echo(
        f"status: {state.status} "
        f"({state.cycle} cycles, {state.used_tokens} tokens)"
    )
    for finding in state.findings:
        click.echo(
            f"  {finding.kind}: {redact_text(finding.value, secrets)}"
        )
    return 0 if state.status == COMPLETE else 1


class _TerminalDecider:
    """Prompt on stdin for each ticket the policy did not clear."""

    def __init__(self) -> None:
        self.engine = None  # set after build_engine; needed for masking

    def __call__(self, ticket) -> dict | None:
        secrets = self.engine.display_secrets() if self.engine else []
        click.echo(
            f"\nticket {ticket.ticket_id} session={ticket.step.session} "
            f"flags={','.join(ticket.risk_flags) or 'none'}"
        )
        click.echo(f"  $ {redact_text(ticket.step.command_line, secrets)}")
        click.echo(f"  purpose: {redact_text(ticket.step.purpose, secrets)}")
        choice = click.prompt(
            "decision",
            type=click.Choice(["approve", "deny", "edit"]),
            default="approve",
        )
        if choice == "approve":
            return {"decision": "approve", "operator": "cli"}
        if choice == "deny":
            reason = ""
            while not reason.strip():
                reason = click.prompt("reason")
            return {"decision": "deny", "operator": "cli", "reason": reason}
        edited = click.prompt("edited command", default=ticket.step.command_line)
        return {
            "decision": "approve_with_edit",
            "operator": "cli",
            "edited_command": edited,
        }


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path())
@click.option("--run-dir", type=click.Path(), default=None, help="Event log directory.")
@click.option(
    "--serve",
    "serve_addr",
    default=None,
    metavar="HOST:PORT",
    help="Expose the control-plane API and take decisions over HTTP.",
)
def run(bundle_dir: str, run_dir: str | None, serve_addr: str | None) -> None:
    """Run an engagement from a bundle."""
    bundle = _load_bundle_or_usage(bundle_dir)
    if serve_addr is None:
        decider = _TerminalDecider()
        try:
            engine = build_engine(bundle, run_dir, deciders=[decider])
        except (ConfigInvalid, PentagentError) as exc:
            raise click.UsageError(str(exc)) from exc
        decider.engine = engine
        engine.run()
        raise SystemExit(_print_outcome(engine))

    host, _, port_text = serve_addr.partition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError(f"bad --serve address {serve_addr!r}, want HOST:PORT")
    try:
        engine = build_engine(bundle, run_dir)
    except (ConfigInvalid, PentagentError) as exc:
        raise click.UsageError(str(exc)) from exc
    worker = threading.Thread(target=engine.run, name="engagement")
    worker.start()
    from .server import serve  # deferred: uvicorn import is heavy

    try:
        serve(engine, host, int(port_text))
    finally:
        engine.request_stop()
        worker.join()
    raise SystemExit(_print_outcome(engine))


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path())
@click.option("--run-dir", type=click.Path(), default=None, help="Event log directory.")
def replay(bundle_dir: str, run_dir: str | None) -> None:
    """Re-run a recorded scenario: simulated target, auto-approved tickets."""
    bundle = _load_bundle_or_usage(bundle_dir)
    try:
        engine = build_engine(bundle, run_dir, replay=True)
    except (ConfigInvalid, PentagentError) as exc:
        raise click.UsageError(str(exc)) from exc
    engine.run()
    raise SystemExit(_print_outcome(engine))


@main.command()
@click.option("--corpus", "manifest_path", required=True, type=click.Path())
@click.option(
    "--out",
    "out_path",
    type=click.Path(),
    default=None,
    help="Index summary destination (default: index.json beside the manifest).",
)
def ingest(manifest_path: str, out_path: str | None) -> None:
    """Chunk and index a knowledge corpus; writes an index summary."""
    manifest = Path(manifest_path)
    try:
        docs = load_corpus_manifest(manifest)
    except (BundleMissing, ConfigInvalid) as exc:
        raise click.UsageError(str(exc)) from exc

    models = dict(DEFAULT_MODELS)
    gateway = Gateway(
        chat_providers={},
        assignment=ModelAssignment(
            planning=models["planning"],
            execution=models["execution"],
            summarization=models["summarization"],
            embedding=models["embedding"],
            rerank=models["rerank"],
        ),
        embedding_providers={models["embedding"]: HashEmbeddingProvider()},
        rerank_providers={models["rerank"]: TermOverlapReranker()},
    )
    store = KnowledgeStore(gateway)
    per_doc: dict[str, int] = {}
    for doc in docs:
        per_doc[doc.doc_id] = len(store.ingest(doc))

    out = Path(out_path) if out_path else manifest.parent / "index.json"
    summary = {
        "documents": len(docs),
        "chunks": len(store),
        "per_document": per_doc,
    }
    tmp = out.with_suffix(".tmp")
    tmp.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    tmp.replace(out)
    click.echo(f"indexed {len(docs)} documents into {len(store)} chunks ({out})")


def _decide_remote(client: httpx.Client, ticket: dict) -> bool:
    """Prompt for one ticket; returns False when the operator quits."""
    click.echo(
        f"\nticket {ticket['ticket_id']} session={ticket['session']} "
        f"flags={','.join(ticket['risk_flags']) or 'none'}"
    )
    click.echo(f"  $ {ticket['command_line']}")
    click.echo(f"  purpose: {ticket['purpose']}")
    choice = click.prompt(
        "decision",
        type=click.Choice(["approve", "deny", "edit", "skip", "quit"]),
        default="skip",
    )
    if choice == "quit":
        return False
    if choice == "skip":
        return True
    body: dict = {"decision": "approve", "operator": "cli"}
    if choice == "deny":
        reason = ""
        while not reason.strip():
            reason = click.prompt("reason")
        body = {"decision": "deny", "operator": "cli", "reason": reason}
    elif choice == "edit":
        edited = click.prompt("edited command", default=ticket["command_line"])
        body = {
            "decision": "approve_with_edit",
            "operator": "cli",
            "edited_command": edited,
        }
    response = client.post(f"/tickets/{ticket['ticket_id']}/decision", json=body)
    if response.status_code == 409:
        click.echo("already decided elsewhere; skipping")
    elif response.status_code >= 400:
        click.echo(f"decision rejected: {response.status_code} {response.text}")
    return True


def _approve_loop(client: httpx.Client) -> int:
    response = client.get("/tickets", params={"state": "pending"})
    if response.status_code == 401:
        click.echo("unauthorized: bad or missing token", err=True)
        return 1
    response.raise_for_status()
    tickets = response.json()
    if not tickets:
        click.echo("no pending tickets")
        return 0
    for ticket in tickets:
        if not _decide_remote(client, ticket):
            break
    return 0


@main.command()
@click.option("--url", default="http://127.0.0.1:8800", show_default=True)
@click.option(
    "--token",
    default=None,
    help=f"Bearer token (default: ${TOKEN_ENV_VAR}).",
)
def approve(url: str, token: str | None) -> None:
    """Review pending tickets on a serving engagement, one prompt each."""
    token = token or os.environ.get(TOKEN_ENV_VAR)
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    try:
        with httpx.Client(base_url=url, headers=headers, timeout=10.0) as client:
            raise SystemExit(_approve_loop(client))
    except httpx.HTTPError as exc:
        click.echo(f"control plane unreachable: {exc}", err=True)
        raise SystemExit(1) from exc


def _secrets_from_events(events) -> list[str]:
    values = {
        e.payload.get("value", "")
        for e in events
        if e.kind == "finding_extracted"
        and e.payload.get("kind") in SECRET_FINDING_KINDS
    }
    values = {v for v in values if len(v) >= MIN_SECRET_LENGTH}
    return sorted(values, key=len, reverse=True)


@main.command(name="log")
@click.option("--run", "run_dir", required=True, type=click.Path())
@click.option(
    "--reveal",
    is_flag=True,
    default=False,
    help="Print credential findings unmasked.",
)
def log_command(run_dir: str, reveal: bool) -> None:
    """Pretty-print a run's event log, credentials masked."""
    path = Path(run_dir) / "events.jsonl"
    try:
        events = load_events(path)
    except CorruptLog as exc:
        raise click.UsageError(str(exc)) from exc
    if not events:
        raise click.UsageError(f"no events at {path}")
    secrets = [] if reveal else _secrets_from_events(events)
    for event in events:
        payload = redact_structure(event.payload, secrets)
        click.echo(
            f"{event.seq:5d} {event.kind:<19} "
            f"{json.dumps(payload, ensure_ascii=False)}"
        )
