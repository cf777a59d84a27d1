"""CLI behavior: exit codes, masking on printed surfaces, prompt flows."""

import json
from types import SimpleNamespace

import pytest
from click.testing import CliRunner
from conftest import CURL_PLAN, write_mini_bundle
from fastapi.testclient import TestClient

import pentagent.cli as cli
from pentagent.config import builtin_bundle_path
from pentagent.orchestrator import mask_secret
from pentagent.server import create_app

BOARDLIGHT = str(builtin_bundle_path("boardlight"))
SECRET = "serverfun2$2023!!"


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def replay_dir(runner, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("cli-replay")
    result = runner.invoke(
        cli.main, ["replay", "--bundle", BOARDLIGHT, "--run-dir", str(run_dir)]
    )
    assert result.exit_code == 0, result.output
    return SimpleNamespace(run_dir=run_dir, output=result.output)


class TestReplayCommand:
    def test_prints_terminal_status(self, replay_dir):
        assert "status: complete" in replay_dir.output

    def test_findings_masked_on_stdout(self, replay_dir):
        assert SECRET not in replay_dir.output
        assert mask_secret(SECRET) in replay_dir.output
        assert "credential:" in replay_dir.output

    def test_missing_bundle_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(cli.main, ["replay", "--bundle", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_unknown_subcommand_is_usage_error(self, runner):
        assert runner.invoke(cli.main, ["explode"]).exit_code == 2


class TestRunCommand:
    def test_interactive_approval_runs_to_completion(self, runner, tmp_path):
        write_mini_bundle(
            tmp_path / "bundle",
            tree="1 Survey - [to-do]\n  1.1 Probe the web root - (to-do)",
            selections=["TASK: 1.1\nRATIONALE: Only one task exists."],
            plan=CURL_PLAN,
            max_cycles=2,
            scenario=[{"command": "^curl ", "output": "<html>hello</html>"}],
        )
        result = runner.invoke(
            cli.main, ["run", "--bundle", str(tmp_path / "bundle")], input="\n"
        )
        assert result.exit_code == 0, result.output
        assert "ticket 1" in result.output
        assert "status: complete" in result.output

    def test_interactive_denial_exits_nonzero(self, runner, tmp_path):
        write_mini_bundle(
            tmp_path / "bundle",
            tree="1 Survey - [to-do]\n  1.1 Probe the web root - (to-do)",
            selections=["TASK: 1.1\nRATIONALE: Only one task exists."],
            plan=CURL_PLAN,
            revise=CURL_PLAN,
            max_cycles=2,
            scenario=[{"command": "^curl ", "output": "<html>hello</html>"}],
        )
        result = runner.invoke(
            cli.main,
            ["run", "--bundle", str(tmp_path / "bundle")],
            input="deny\nout of scope\ndeny\nstill no\n",
        )
        assert result.exit_code == 1, result.output
        assert "status:" in result.output

    def test_live_bundle_without_unlock_rejected(self, runner, tmp_path):
        (tmp_path / "config.json").write_text(
            json.dumps({"scope": ["10.10.11.11"], "mode": "live"})
        )
        result = runner.invoke(cli.main, ["run", "--bundle", str(tmp_path)])
        assert result.exit_code == 2
        assert "unsafe_live_execution" in result.output

    def test_bad_serve_address_rejected(self, runner):
        result = runner.invoke(
            cli.main, ["run", "--bundle", BOARDLIGHT, "--serve", "nonsense"]
        )
        assert result.exit_code == 2


class TestIngestCommand:
    def test_indexes_the_builtin_corpus(self, runner, tmp_path):
        manifest = builtin_bundle_path("boardlight") / "corpora" / "manifest.json"
        out = tmp_path / "index.json"
        result = runner.invoke(
            cli.main, ["ingest", "--corpus", str(manifest), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(out.read_text())
        assert summary["documents"] == 2
        assert summary["chunks"] >= 2
        assert set(summary["per_document"]) == {
            "dolibarr-17-code-injection",
            "enlightenment-sys-suid",
        }

    def test_missing_manifest_exits_2_without_writing(self, runner, tmp_path):
        out = tmp_path / "index.json"
        result = runner.invoke(
            cli.main,
            ["ingest", "--corpus", str(tmp_path / "absent.json"), "--out", str(out)],
        )
        assert result.exit_code == 2
        assert not out.exists()


class TestLogCommand:
    def test_masks_credentials_by_default(self, runner, replay_dir):
        result = runner.invoke(cli.main, ["log", "--run", str(replay_dir.run_dir)])
        assert result.exit_code == 0
        assert SECRET not in result.output
        assert mask_secret(SECRET) in result.output
        assert "engagement_started" in result.output
        assert "engagement_stopped" in result.output

    def test_reveal_flag_prints_raw_values(self, runner, replay_dir):
        result = runner.invoke(
            cli.main, ["log", "--run", str(replay_dir.run_dir), "--reveal"]
        )
        assert result.exit_code == 0
        assert SECRET in result.output

    def test_empty_run_dir_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(cli.main, ["log", "--run", str(tmp_path)])
        assert result.exit_code == 2


@pytest.fixture()
def remote(tmp_path, monkeypatch):
    """An engine mid-cycle with one pending ticket, reachable over ASGI."""
    import threading
    import time

    from pentagent.orchestrator import build_engine

    bundle = write_mini_bundle(
        tmp_path / "bundle",
        tree="1 Survey - [to-do]\n  1.1 Probe the web root - (to-do)",
        selections=["TASK: 1.1\nRATIONALE: Only one task exists."],
        plan=CURL_PLAN,
        revise=CURL_PLAN,
        max_cycles=2,
        scenario=[{"command": "^curl ", "output": "<html>hello</html>"}],
    )
    engine = build_engine(bundle, tmp_path / "run")
    app = create_app(engine, token="tok-cli")

    def fake_client(base_url=None, headers=None, timeout=None):
        client = TestClient(app)
        client.headers.update(headers or {})
        return client

    monkeypatch.setattr(cli.httpx, "Client", fake_client)
    thread = threading.Thread(target=engine.run)
    thread.start()
    deadline = time.monotonic() + 5
    while not engine.tickets.pending():
        if time.monotonic() > deadline:
            engine.request_stop()
            thread.join()
            pytest.fail("no ticket ever went pending")
        time.sleep(0.005)
    yield SimpleNamespace(engine=engine, thread=thread)
    engine.request_stop()
    thread.join(timeout=5)


class TestApproveCommand:
    def test_approves_pending_ticket_end_to_end(self, runner, remote):
        result = runner.invoke(
            cli.main, ["approve", "--token", "tok-cli"], input="approve\n"
        )
        assert result.exit_code == 0, result.output
        remote.thread.join(timeout=5)
        assert remote.engine.status == "complete"

    def test_bad_token_exits_nonzero(self, runner, remote):
        result = runner.invoke(
            cli.main, ["approve", "--token", "wrong"], input="approve\n"
        )
        assert result.exit_code == 1
        assert "unauthorized" in result.output

    def test_skip_leaves_ticket_pending(self, runner, remote):
        result = runner.invoke(
            cli.main, ["approve", "--token", "tok-cli"], input="skip\n"
        )
        assert result.exit_code == 0
        assert remote.engine.tickets.pending()

    def test_no_pending_tickets_is_success(self, runner, remote):
        ticket = remote.engine.tickets.pending()[0]
        remote.engine.tickets.decide(ticket.ticket_id, "approve", operator="test")
        remote.thread.join(timeout=5)
        result = runner.invoke(cli.main, ["approve", "--token", "tok-cli"])
        assert result.exit_code == 0
        assert "no pending tickets" in result.output
