"""Suite-wide guard: no test may touch the network.

Every socket primitive that could reach another host is replaced with a
function that fails the test. In-process ASGI transports never hit these,
so the control-plane tests still work.

Also holds the mini-bundle builder shared by the engine and server tests.
"""

import json
import socket

import pytest

from pentagent.config import load_bundle


def _refuse(*_args, **_kwargs):
    raise RuntimeError("network access attempted during tests")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    monkeypatch.setattr(socket.socket, "connect", _refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", _refuse)
    monkeypatch.setattr(socket, "create_connection", _refuse)
    monkeypatch.setattr(socket, "getaddrinfo", _refuse)
    yield


CURL_PLAN = (
    "```step\n"
    "session: main\n"
    "purpose: fetch the landing page\n"
    "curl http://10.10.11.11/\n"
    "```"
)


def write_mini_bundle(
    root, *, tree, selections, plan, revise=None, max_cycles=10, scenario=None
):
    """A tiny bundle for control-flow tests: scripted planner and executor."""
    providers = root / "fixtures" / "providers"
    providers.mkdir(parents=True)
    if scenario is not None:
        (root / "scenario.json").write_text(json.dumps(scenario))
    (root / "config.json").write_text(
        json.dumps(
            {
                "scope": ["10.10.11.11"],
                "mode": "simulated",
                "budgets": {"max_cycles": max_cycles},
                "refine_rounds": 1,
                "models": {
                    "planning": "mini-planner",
                    "execution": "mini-executor",
                    "summarization": "mini-executor",
                },
                "policy": {"auto_approve": []},
            }
        )
    )
    planner = [{"match": "Propose the updated task tree", "response": tree}]
    planner += [{"match": "Select the next task", "response": s} for s in selections]
    planner.append(
        {"match": "Critique the following draft", "response": "VERDICT: ACCEPT\nFine."}
    )
    executor = [
        {"match": "Propose search queries", "response": "none"},
        {"match": "Produce the command plan", "response": plan},
        {"match": "Critique the following draft", "response": "VERDICT: ACCEPT\nFine."},
        {
            "match": "Summarize the output below",
            "response": "Command completed without notable findings.",
        },
        {"match": "Extract findings from the output below", "response": "none"},
    ]
    if revise is not None:
        executor.insert(1, {"match": "Revise the command plan", "response": revise})
    (providers / "mini-planner.json").write_text(json.dumps(planner))
    (providers / "mini-executor.json").write_text(json.dumps(executor))
    return load_bundle(root)
