"""Event log behavior: gapless persistence, permissions, catch-up replay."""

import json
import os
import stat

import pytest

from pentagent.errors import CorruptLog
from pentagent.events import (
    SIM_EPOCH,
    Event,
    EventLog,
    load_events,
    sim_timestamp,
)

PAYLOAD = {"scope": ["10.10.11.11"], "mode": "simulated"}


def test_sim_timestamp_counts_from_epoch():
    assert sim_timestamp(1) == SIM_EPOCH + 1
    assert sim_timestamp(10) - sim_timestamp(3) == 7


class TestEventSerialization:
    def test_round_trip(self):
        event = Event(seq=3, timestamp=SIM_EPOCH + 3, kind="warning", payload={"a": 1})
        assert Event.from_json(event.to_json()) == event

    def test_json_is_one_line_with_sorted_keys(self):
        event = Event(seq=1, timestamp=0.0, kind="warning", payload={"b": 2, "a": 1})
        line = event.to_json()
        assert "\n" not in line
        decoded = json.loads(line)
        assert list(decoded["payload"]) == ["a", "b"]

    def test_garbage_line_raises(self):
        with pytest.raises(CorruptLog):
            Event.from_json("{not json")

    def test_missing_field_raises(self):
        with pytest.raises(CorruptLog):
            Event.from_json('{"seq": 1, "kind": "warning"}')


class TestAppend:
    def test_seq_is_gapless_from_one(self):
        log = EventLog()
        first = log.append("engagement_started", PAYLOAD)
        second = log.append("warning", {"origin": "t", "message": "m"})
        assert (first.seq, second.seq) == (1, 2)
        assert log.last_seq == 2

    def test_timestamps_follow_seq(self):
        log = EventLog()
        event = log.append("engagement_started", PAYLOAD)
        assert event.timestamp == sim_timestamp(1)

    def test_unknown_kind_rejected(self):
        log = EventLog()
        with pytest.raises(ValueError):
            log.append("made_up_kind", {})

    def test_payload_canonicalized_to_json_shapes(self):
        # tuples become lists so a reloaded log compares equal to a live one
        log = EventLog()
        event = log.append("warning", {"flags": ("a", "b")})
        assert event.payload["flags"] == ["a", "b"]

    def test_events_since_cursor(self):
        log = EventLog()
        log.append("engagement_started", PAYLOAD)
        log.append("warning", {"origin": "t", "message": "one"})
        log.append("warning", {"origin": "t", "message": "two"})
        tail = log.events_since(1)
        assert [e.seq for e in tail] == [2, 3]
        assert log.events_since(99) == []

    def test_wait_for_returns_immediately_when_present(self):
        log = EventLog()
        log.append("engagement_started", PAYLOAD)
        assert [e.seq for e in log.wait_for(0, timeout=0.01)] == [1]

    def test_wait_for_times_out_empty(self):
        log = EventLog()
        assert log.wait_for(0, timeout=0.01) == []


class TestPersistence:
    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "events.jsonl"
        log = EventLog(path)
        log.append("engagement_started", PAYLOAD)
        log.append("engagement_stopped", {"status": "stopped", "cycles": 0})
        log.close()
        events = load_events(path)
        assert [e.kind for e in events] == [
            "engagement_started",
            "engagement_stopped",
        ]
        assert [e.seq for e in events] == [1, 2]

    def test_log_file_is_owner_read_only(self, tmp_path):
        path = tmp_path / "events.jsonl"
        log = EventLog(path)
        log.append("engagement_started", PAYLOAD)
        log.close()
        mode = stat.S_IMODE(os.stat(path).st_mode)
        assert mode == 0o600

    def test_missing_file_loads_empty(self, tmp_path):
        assert load_events(tmp_path / "absent.jsonl") == []

    def test_seq_gap_raises(self, tmp_path):
        path = tmp_path / "events.jsonl"
        lines = [
            Event(1, SIM_EPOCH + 1, "engagement_started", {}).to_json(),
            Event(3, SIM_EPOCH + 3, "warning", {"m": 1}).to_json(),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptLog):
            load_events(path)

    def test_blank_lines_tolerated(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text(
            Event(1, SIM_EPOCH + 1, "engagement_started", {}).to_json() + "\n\n"
        )
        assert len(load_events(path)) == 1


class TestCatchUp:
    def _recorded(self):
        return [
            Event(1, SIM_EPOCH + 1, "engagement_started", PAYLOAD),
            Event(2, SIM_EPOCH + 2, "warning", {"origin": "t", "message": "m"}),
            Event(3, SIM_EPOCH + 3, "engagement_stopped", {"status": "stopped"}),
        ]

    def test_matching_appends_return_recorded_events(self):
        log = EventLog(recorded=self._recorded())
        assert log.catching_up
        first = log.append("engagement_started", PAYLOAD)
        assert first.seq == 1 and first.timestamp == SIM_EPOCH + 1

    def test_stop_marker_is_skipped_then_new_events_append(self):
        log = EventLog(recorded=self._recorded())
        log.append("engagement_started", PAYLOAD)
        log.append("warning", {"origin": "t", "message": "m"})
        # the recorded stop marker stands between us and fresh history
        fresh = log.append("warning", {"origin": "t", "message": "new"})
        assert fresh.seq == 4
        assert not log.catching_up

    def test_divergence_raises(self):
        log = EventLog(recorded=self._recorded())
        with pytest.raises(CorruptLog):
            log.append("warning", {"origin": "t", "message": "different"})

    def test_stop_during_catchup_is_ephemeral(self):
        log = EventLog(recorded=self._recorded())
        log.append("engagement_started", PAYLOAD)
        stop = log.append("engagement_stopped", {"status": "stopped", "cycles": 1})
        assert stop.kind == "engagement_stopped"
        # nothing was persisted or matched past the first event
        assert log.last_seq == 3  # the recorded history, untouched
        assert log.events_since(1)[0].kind == "warning"

    def test_catchup_does_not_rewrite_file(self, tmp_path):
        path = tmp_path / "events.jsonl"
        live = EventLog(path)
        live.append("engagement_started", PAYLOAD)
        live.append("engagement_stopped", {"status": "stopped"})
        live.close()
        before = path.read_text()

        resumed = EventLog(path, recorded=load_events(path))
        resumed.append("engagement_started", PAYLOAD)
        resumed.append("warning", {"origin": "t", "message": "fresh"})
        resumed.close()
        after = path.read_text()
        assert after.startswith(before)
        assert len(after.splitlines()) == 3
