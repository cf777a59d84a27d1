"""Record console test fixtures from the real engine.

Runs the packaged demo replay plus a small deny-then-approve engagement
through the in-process HTTP app and saves the exact bytes the console
would receive. Rerun after any engine change that alters the stream:

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import shutil
import sys
import threading
import time
from pathlib import Path

from fastapi.testclient import TestClient

REPO = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(REPO / "tests"))  # for the mini-bundle helper

from conftest import CURL_PLAN, write_mini_bundle  # noqa: E402

from pentagent.config import builtin_bundle_path, load_bundle  # noqa: E402
from pentagent.orchestrator import build_engine  # noqa: E402
from pentagent.server import create_app  # noqa: E402

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"
TOKEN = "fixture-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}


def record_boardlight(tmp: Path) -> None:
    engine = build_engine(load_bundle(builtin_bundle_path("boardlight")),
                          tmp / "board-run", replay=True)
    engine.run()
    client = TestClient(create_app(engine, token=TOKEN), headers=AUTH)

    stream = client.get("/events", params={"cursor": 0, "follow": 0})
    (FIXTURES / "boardlight-stream.txt").write_text(stream.text)

    masked = client.get("/findings").json()
    (FIXTURES / "boardlight-findings-masked.json").write_text(
        json.dumps(masked, indent=2) + "\n"
    )
    raw = client.get("/findings", params={"reveal": 1}).json()
    (FIXTURES / "boardlight-findings-raw.json").write_text(
        json.dumps(raw, indent=2) + "\n"
    )
    tickets = client.get("/tickets").json()
    (FIXTURES / "boardlight-tickets.json").write_text(
        json.dumps(tickets, indent=2) + "\n"
    )


def wait_for_pending(engine, deadline: float = 5.0) -> None:
    limit = time.monotonic() + deadline
    while time.monotonic() < limit:
        if engine.tickets.pending():
            return
        time.sleep(0.01)
    raise RuntimeError("engagement never paused on a ticket")


REVISED_PLAN = (
    "```step\n"
    "session: main\n"
    "purpose: fetch response headers only\n"
    "curl -I http://10.10.11.11/\n"
    "```"
)


def record_steering(tmp: Path) -> None:
    bundle = write_mini_bundle(
        tmp / "steer-bundle",
        tree="1 Survey - [to-do]\n  1.1 Probe the landing page - (to-do)",
        selections=["TASK: 1.1\nRATIONALE: only task."],
        plan=CURL_PLAN,
        revise=REVISED_PLAN,  # a denial must yield a genuinely new command
        max_cycles=2,
        scenario=[{"command": "^curl ", "output": "HTTP/1.1 200 OK", "exit": 0}],
    )
    engine = build_engine(bundle, tmp / "steer-run")
    client = TestClient(create_app(engine, token=TOKEN), headers=AUTH)
    worker = threading.Thread(target=engine.run, daemon=True)
    worker.start()

    wait_for_pending(engine)
    denied = client.post(
        "/tickets/1/decision",
        json={"decision": "deny", "reason": "stay passive for now",
              "operator": "console"},
    )
    assert denied.status_code == 200, denied.text

    wait_for_pending(engine)  # the revised plan resubmits
    approved = client.post(
        "/tickets/2/decision",
        json={"decision": "approve", "operator": "console"},
    )
    assert approved.status_code == 200, approved.text
    worker.join(timeout=5)
    assert engine.status == "complete", engine.status

    stream = client.get("/events", params={"cursor": 0, "follow": 0})
    (FIXTURES / "steering-stream.txt").write_text(stream.text)


def main() -> None:
    tmp = Path("/tmp/console-fixtures")
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir()
    FIXTURES.mkdir(parents=True, exist_ok=True)
    record_boardlight(tmp)
    record_steering(tmp)
    for path in sorted(FIXTURES.iterdir()):
        print(f"{path.name}: {path.stat().st_size} bytes")


if __name__ == "__main__":
    main()
