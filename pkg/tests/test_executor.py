"""Simulated terminal sessions: rule matching, listeners, truncation."""

from __future__ import annotations

import time

import pytest

from pentagent.errors import (
    ConfigInvalid,
    MissingApproval,
    SessionExists,
    UnknownSession,
)
from pentagent.execution import CommandStep
from pentagent.executor import (
    DETACHED,
    TIMEOUT_EXIT_STATUS,
    TRUNCATE_HEAD_LINES,
    TRUNCATE_TAIL_LINES,
    ExecutionRecord,
    LiveExecutor,
    ScenarioRule,
    SideEffect,
    SimulatedExecutor,
    rules_from_config,
    truncate_transcript,
)

NMAP_OUTPUT = """\
Starting Nmap 7.94
PORT   STATE SERVICE VERSION
22/tcp open  ssh     OpenSSH 8.2p1 Ubuntu 4ubuntu0.11
80/tcp open  http    Apache httpd 2.4.41
"""


def step(command, session="main", timeout=120.0, inputs=None):
    return CommandStep(
        session=session,
        command_line=command,
        purpose="test",
        interactive_inputs=inputs or [],
        timeout=timeout,
    )


def make_executor(rules, clock=None):
    executor = SimulatedExecutor(rules, clock=clock or (lambda: 0.0))
    executor.open_session("main")
    return executor


class TestSessions:
    def test_open_twice_rejected(self):
        ex = make_executor([])
        with pytest.raises(SessionExists):
            ex.open_session("main")

    def test_close_is_idempotent_and_reopen_works(self):
        ex = make_executor([])
        ex.close_session("main")
        ex.close_session("main")
        ex.open_session("main")
        assert ex.open_sessions() == ["main"]

    def test_close_all(self):
        ex = make_executor([])
        ex.open_session("listener")
        ex.open_session("ssh")
        ex.close_all()
        assert ex.open_sessions() == []

    def test_execute_in_unknown_session(self):
        ex = make_executor([])
        with pytest.raises(UnknownSession):
            ex.execute_step(step("ls", session="ghost"), ticket_id=1)

    def test_poll_on_closed_session(self):
        ex = make_executor([])
        ex.close_session("main")
        with pytest.raises(UnknownSession):
            ex.poll_output("main")


class TestRuleMatching:
    def test_first_match_wins(self):
        ex = make_executor(
            [
                ScenarioRule(command=r"^nmap", output="first"),
                ScenarioRule(command=r"nmap -sS", output="second"),
            ]
        )
        record = ex.execute_step(step("nmap -sS -sV 10.10.11.11"), ticket_id=1)
        assert record.output == "first"
        assert record.exit_status == 0

    def test_session_scoped_rule(self):
        ex = make_executor(
            [
                ScenarioRule(command=r"^whoami$", session="ssh", output="larissa"),
                ScenarioRule(command=r"^whoami$", output="root"),
            ]
        )
        ex.open_session("ssh")
        assert ex.execute_step(step("whoami", session="ssh"), 1).output == "larissa"
        assert ex.execute_step(step("whoami", session="main"), 2).output == "root"

    def test_unmatched_command_not_found(self):
        ex = make_executor([])
        record = ex.execute_step(step("frobnicate --all"), ticket_id=1)
        assert "command not found" in record.output
        assert record.exit_status == 127

    def test_consume_once_rule_retires_after_one_hit(self):
        ex = make_executor(
            [
                ScenarioRule(
                    command=r"sshpass", output="Permission denied", exit_status=5,
                    consume_once=True,
                ),
                ScenarioRule(command=r"sshpass", output="Welcome to Ubuntu"),
            ]
        )
        first = ex.execute_step(step("sshpass -p x ssh larissa@10.10.11.11"), 1)
        second = ex.execute_step(step("sshpass -p y ssh larissa@10.10.11.11"), 2)
        assert first.exit_status == 5
        assert second.exit_status == 0
        assert "Welcome" in second.output

    def test_nonzero_exit_recorded(self):
        ex = make_executor(
            [ScenarioRule(command=r"exploit\.py", output="Traceback", exit_status=2)]
        )
        record = ex.execute_step(step("python3 exploit.py http://x <USERNAME>"), 1)
        assert record.exit_status == 2


class TestApprovalRequirement:
    def test_missing_ticket_refuses(self):
        ex = make_executor([ScenarioRule(command=r".", output="x")])
        with pytest.raises(MissingApproval):
            ex.execute_step(step("ls"), ticket_id=None)

    def test_ticket_id_lands_on_record(self):
        ex = make_executor([ScenarioRule(command=r"^ls", output="files")])
        record = ex.execute_step(step("ls"), ticket_id=42)
        assert record.ticket_id == 42

    def test_command_override_is_what_runs(self):
        ex = make_executor(
            [
                ScenarioRule(command=r"admin admin", output="shell granted"),
                ScenarioRule(command=r"<USERNAME>", output="bad args", exit_status=2),
            ]
        )
        original = step("python3 exploit.py <USERNAME> <PASSWORD>")
        record = ex.execute_step(
            original, ticket_id=1, command_override="python3 exploit.py admin admin"
        )
        assert record.output == "shell granted"
        assert record.command_line == "python3 exploit.py admin admin"
        assert record.step.command_line == "python3 exploit.py <USERNAME> <PASSWORD>"


class TestTimeout:
    def test_delay_beyond_timeout_records_timeout_without_sleeping(self):
        ex = make_executor(
            [ScenarioRule(command=r"^slowscan", output="never seen", delay=300.0)]
        )
        wall_start = time.monotonic()
        record = ex.execute_step(step("slowscan", timeout=1.0), ticket_id=1)
        assert time.monotonic() - wall_start < 1.0
        assert record.error_class == "timeout"
        assert record.exit_status == TIMEOUT_EXIT_STATUS
        assert record.output == ""

    def test_delay_within_timeout_runs_normally(self):
        ex = make_executor(
            [ScenarioRule(command=r"^scan", output="done", delay=5.0)]
        )
        record = ex.execute_step(step("scan", timeout=60.0), ticket_id=1)
        assert record.error_class is None
        assert record.output == "done"


class TestListeners:
    def exploit_rules(self):
        return [
            ScenarioRule(
                command=r"nc -lnvp 4444",
                output="listening on [any] 4444 ...",
            ),
            ScenarioRule(
                command=r"python3 exploit\.py",
                output="[+] payload sent",
                side_effects=[
                    SideEffect(
                        session="listener",
                        output="connect to [10.10.14.2] from board.htb\nwww-data@boardlight:~$",
                    )
                ],
            ),
        ]

    def test_listener_detaches(self):
        ex = make_executor(self.exploit_rules())
        ex.open_session("listener")
        record = ex.execute_step(step("nc -lnvp 4444", session="listener"), 1)
        assert record.exit_status == DETACHED
        assert record.error_class is None

    def test_side_effect_reaches_listener_session(self):
        ex = make_executor(self.exploit_rules())
        ex.open_session("listener")
        ex.execute_step(step("nc -lnvp 4444", session="listener"), 1)
        delta, cursor = ex.poll_output("listener")
        assert "listening on" in delta

        ex.execute_step(step("python3 exploit.py http://crm.board.htb"), 2)
        delta, cursor2 = ex.poll_output("listener", cursor)
        assert "www-data@boardlight" in delta
        assert cursor2 > cursor

    def test_repeated_poll_is_empty(self):
        ex = make_executor(self.exploit_rules())
        ex.open_session("listener")
        ex.execute_step(step("nc -lnvp 4444", session="listener"), 1)
        _, cursor = ex.poll_output("listener")
        delta, cursor_again = ex.poll_output("listener", cursor)
        assert delta == ""
        assert cursor_again == cursor

    def test_side_effect_to_unopened_session_fails_loudly(self):
        ex = make_executor(self.exploit_rules())  # listener session not opened
        with pytest.raises(UnknownSession):
            ex.execute_step(step("python3 exploit.py"), 1)


class TestTranscripts:
    def test_session_stream_echoes_commands(self):
        ex = make_executor([ScenarioRule(command=r"^nmap", output=NMAP_OUTPUT)])
        ex.execute_step(step("nmap -sS -sV 10.10.11.11"), 1)
        delta, _ = ex.poll_output("main")
        assert delta.startswith("$ nmap -sS -sV 10.10.11.11\n")
        assert "22/tcp open  ssh" in delta

    def test_truncation_keeps_both_ends(self):
        long_output = "\n".join(f"line {i}" for i in range(1000))
        text, truncated, head, tail = truncate_transcript(long_output)
        lines = text.splitlines()
        assert truncated
        assert (head, tail) == (TRUNCATE_HEAD_LINES, TRUNCATE_TAIL_LINES)
        assert lines[0] == "line 0"
        assert lines[-1] == "line 999"
        assert lines[TRUNCATE_HEAD_LINES] == "[... 600 lines omitted ...]"
        assert len(lines) == TRUNCATE_HEAD_LINES + TRUNCATE_TAIL_LINES + 1

    def test_short_transcript_untouched(self):
        text, truncated, head, tail = truncate_transcript("just one line")
        assert not truncated
        assert text == "just one line"
        assert (head, tail) == (0, 0)

    def test_execute_truncates_record_output(self):
        long_output = "\n".join(f"row {i}" for i in range(500))
        ex = make_executor([ScenarioRule(command=r"^dump", output=long_output)])
        record = ex.execute_step(step("dump"), 1)
        assert record.truncated
        assert "[... 100 lines omitted ...]" in record.output


class TestDeterminism:
    def run_once(self):
        rules = [
            ScenarioRule(command=r"^nmap", output=NMAP_OUTPUT),
            ScenarioRule(command=r"^whatweb", output="Apache[2.4.41]"),
        ]
        ex = make_executor(rules, clock=lambda: 1000.0)
        records = [
            ex.execute_step(step("nmap -sS -sV 10.10.11.11"), 1),
            ex.execute_step(step("whatweb -a 3 http://10.10.11.11"), 2),
        ]
        return records, ex.poll_output("main")[0]

    def test_identical_runs_identical_records(self):
        first_records, first_stream = self.run_once()
        second_records, second_stream = self.run_once()
        assert first_records == second_records
        assert first_stream == second_stream


class TestRulesFromConfig:
    def test_round_trip(self):
        rules = rules_from_config(
            [
                {
                    "command": r"^nmap",
                    "output": "scan",
                    "exit": 0,
                },
                {
                    "session": "main",
                    "command": r"exploit",
                    "output": "sent",
                    "exit": 2,
                    "delay": 1.5,
                    "consume_once": True,
                    "side_effects": [{"session": "listener", "output": "shell"}],
                },
            ]
        )
        assert rules[0].session is None
        assert rules[1].exit_status == 2
        assert rules[1].delay == 1.5
        assert rules[1].consume_once
        assert rules[1].side_effects == [SideEffect(session="listener", output="shell")]

    def test_bad_regex_rejected(self):
        with pytest.raises(ConfigInvalid):
            rules_from_config([{"command": "("}])


class TestLiveGuard:
    def test_refuses_without_opt_in(self):
        with pytest.raises(ConfigInvalid):
            LiveExecutor(unsafe_live_execution=False, scope=["10.10.11.11"])

    def test_refuses_without_scope(self):
        with pytest.raises(ConfigInvalid):
            LiveExecutor(unsafe_live_execution=True, scope=[])
