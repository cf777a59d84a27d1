"""Ticket lifecycle, risk classification, and the auto-approve gate."""

from __future__ import annotations

import threading

import pytest

from pentagent.approval import (
    APPROVED,
    APPROVED_WITH_EDIT,
    DENIED,
    PENDING,
    RECON_PRESET_PATTERNS,
    RISK_DESTRUCTIVE,
    RISK_PRIVILEGE,
    RISK_SCOPE,
    Policy,
    TicketStore,
    classify_risks,
)
from pentagent.errors import (
    AlreadyDecided,
    ConfigInvalid,
    MissingDenyReason,
    MissingEditedCommand,
    UnknownTicket,
)
from pentagent.execution import CommandStep

SCOPE = ["10.10.11.11", "board.htb"]


def step(command, session="main", purpose="because"):
    return CommandStep(session=session, command_line=command, purpose=purpose)


def recon_policy():
    return Policy(auto_approve_patterns=list(RECON_PRESET_PATTERNS), scope=list(SCOPE))


def bare_policy():
    return Policy(scope=list(SCOPE))


class TestRiskClassification:
    def test_recursive_force_delete_is_destructive(self):
        assert RISK_DESTRUCTIVE in classify_risks(step("rm -rf /"), bare_policy())
        assert RISK_DESTRUCTIVE in classify_risks(step("rm -fr /tmp/x"), bare_policy())

    def test_disk_overwrite_and_format(self):
        assert RISK_DESTRUCTIVE in classify_risks(
            step("dd if=/dev/zero of=/dev/sda"), bare_policy()
        )
        assert RISK_DESTRUCTIVE in classify_risks(
            step("mkfs.ext4 /dev/sdb1"), bare_policy()
        )

    def test_fork_bomb_and_firewall_flush(self):
        assert RISK_DESTRUCTIVE in classify_risks(
            step(":(){ :|:& };:"), bare_policy()
        )
        assert RISK_DESTRUCTIVE in classify_risks(
            step("iptables -t filter -F"), bare_policy()
        )

    def test_sudo_flags_privilege(self):
        assert RISK_PRIVILEGE in classify_risks(step("sudo cat /etc/shadow"), bare_policy())
        assert RISK_PRIVILEGE in classify_risks(step("echo x; su - root"), bare_policy())

    def test_plain_rm_is_not_destructive(self):
        assert classify_risks(step("rm notes.txt"), bare_policy()) == []

    def test_in_scope_targets_carry_no_scope_flag(self):
        assert classify_risks(step("nmap -sS -sV 10.10.11.11"), bare_policy()) == []
        assert classify_risks(step("curl -I http://board.htb"), bare_policy()) == []
        # subdomain matches by suffix
        assert classify_risks(step("whatweb -a 3 http://crm.board.htb"), bare_policy()) == []

    def test_out_of_scope_address_flags(self):
        assert RISK_SCOPE in classify_risks(step("nmap 192.168.7.7"), bare_policy())
        assert RISK_SCOPE in classify_risks(
            step("python3 exploit.py http://crm.board.htb admin admin 10.10.14.2 4444"),
            bare_policy(),
        )

    def test_file_names_are_not_scope_candidates(self):
        assert classify_risks(step("cat conf.php"), bare_policy()) == []
        assert classify_risks(step("python3 -m http.server"), bare_policy()) == []
        assert (
            classify_risks(
                step("gobuster dns -d board.htb -w bitquark-subdomains-top100000.txt"),
                bare_policy(),
            )
            == []
        )

    def test_exploit_naming_alone_is_unflagged(self):
        assert classify_risks(step("./exploit.sh"), bare_policy()) == []

    def test_empty_scope_disables_scope_checks(self):
        policy = Policy(scope=[])
        assert classify_risks(step("nmap 203.0.113.9"), policy) == []

    def test_bad_pattern_rejected_at_construction(self):
        with pytest.raises(ConfigInvalid):
            Policy(auto_approve_patterns=["( unclosed"])


class TestSubmit:
    def test_allowlisted_clean_command_auto_approves(self):
        store = TicketStore(recon_policy())
        ticket = store.submit(step("nmap -sS -sV 10.10.11.11"), "scan the target")
        assert ticket.state == APPROVED
        assert ticket.decided_by == "policy"
        assert ticket.decided_at is not None
        assert ticket.is_approved

    def test_unlisted_command_stays_pending(self):
        store = TicketStore(recon_policy())
        ticket = store.submit(step("./exploit.sh"), "run the privesc PoC")
        assert ticket.state == PENDING
        assert ticket.risk_flags == []
        assert ticket.decided_by is None

    def test_destructive_never_auto_approves(self):
        policy = Policy(
            auto_approve_patterns=[r"^rm\b"],  # even an explicit allowlist entry
            scope=list(SCOPE),
        )
        store = TicketStore(policy)
        ticket = store.submit(step("rm -rf /var/www"), "cleanup")
        assert ticket.state == PENDING
        assert RISK_DESTRUCTIVE in ticket.risk_flags

    def test_scope_flag_blocks_auto_approval(self):
        store = TicketStore(recon_policy())
        ticket = store.submit(step("nmap -sS 198.51.100.4"), "scan somewhere else")
        assert ticket.state == PENDING
        assert RISK_SCOPE in ticket.risk_flags

    def test_ticket_ids_are_sequential(self):
        store = TicketStore(recon_policy())
        first = store.submit(step("./a.sh"), "a")
        second = store.submit(step("./b.sh"), "b")
        assert (first.ticket_id, second.ticket_id) == (1, 2)


class TestDecide:
    def make_pending(self, store):
        return store.submit(step("./exploit.sh"), "PoC")

    def test_approve(self):
        store = TicketStore(bare_policy())
        ticket = self.make_pending(store)
        decided = store.decide(ticket.ticket_id, "approve", operator="op")
        assert decided.state == APPROVED
        assert decided.decided_by == "op"
        assert decided.effective_command == "./exploit.sh"

    def test_deny_requires_reason(self):
        store = TicketStore(bare_policy())
        ticket = self.make_pending(store)
        with pytest.raises(MissingDenyReason):
            store.decide(ticket.ticket_id, "deny", operator="op")
        decided = store.decide(
            ticket.ticket_id, "deny", operator="op", reason="wrong target IP"
        )
        assert decided.state == DENIED
        assert decided.reason == "wrong target IP"

    def test_edit_requires_command_and_substitutes(self):
        store = TicketStore(bare_policy())
        ticket = store.submit(
            step("python3 exploit.py http://crm.board.htb <USERNAME> <PASSWORD> 10.10.14.2 4444"),
            "exploit with placeholders",
        )
        with pytest.raises(MissingEditedCommand):
            store.decide(ticket.ticket_id, "approve_with_edit", operator="op")
        decided = store.decide(
            ticket.ticket_id,
            "approve_with_edit",
            operator="op",
            edited_command="python3 exploit.py http://crm.board.htb admin admin 10.10.14.2 4444",
        )
        assert decided.state == APPROVED_WITH_EDIT
        assert decided.effective_command.endswith("admin admin 10.10.14.2 4444")
        # the original survives on the ticket
        assert "<USERNAME>" in decided.step.command_line

    def test_second_decision_loses(self):
        store = TicketStore(bare_policy())
        ticket = self.make_pending(store)
        store.decide(ticket.ticket_id, "approve", operator="op1")
        with pytest.raises(AlreadyDecided):
            store.decide(ticket.ticket_id, "deny", operator="op2", reason="too late")

    def test_unknown_ticket(self):
        store = TicketStore(bare_policy())
        with pytest.raises(UnknownTicket):
            store.decide(99, "approve", operator="op")
        with pytest.raises(UnknownTicket):
            store.get(99)

    def test_unknown_decision_token(self):
        store = TicketStore(bare_policy())
        ticket = self.make_pending(store)
        with pytest.raises(ValueError):
            store.decide(ticket.ticket_id, "maybe", operator="op")

    def test_approve_with_stray_edit_rejected(self):
        store = TicketStore(bare_policy())
        ticket = self.make_pending(store)
        with pytest.raises(ValueError):
            store.decide(
                ticket.ticket_id, "approve", operator="op", edited_command="ls"
            )


class TestQueue:
    def test_empty(self):
        assert TicketStore(bare_policy()).pending() == []

    def test_submission_order_oldest_first(self):
        store = TicketStore(bare_policy())
        a = store.submit(step("./a.sh"), "a")
        b = store.submit(step("./b.sh"), "b")
        assert [t.ticket_id for t in store.pending()] == [a.ticket_id, b.ticket_id]

    def test_decided_tickets_leave_the_queue(self):
        store = TicketStore(bare_policy())
        a = store.submit(step("./a.sh"), "a")
        b = store.submit(step("./b.sh"), "b")
        store.decide(a.ticket_id, "approve", operator="op")
        assert [t.ticket_id for t in store.pending()] == [b.ticket_id]
        assert len(store.all_tickets()) == 2

    def test_wait_for_decision_blocks_until_decided(self):
        store = TicketStore(bare_policy())
        ticket = store.submit(step("./slow.sh"), "async decision")

        def decide_later():
            store.decide(ticket.ticket_id, "approve", operator="op")

        thread = threading.Timer(0.05, decide_later)
        thread.start()
        decided = store.wait_for_decision(ticket.ticket_id, timeout=5)
        thread.join()
        assert decided.state == APPROVED

    def test_wait_timeout_returns_pending(self):
        store = TicketStore(bare_policy())
        ticket = store.submit(step("./never.sh"), "nobody home")
        waited = store.wait_for_decision(ticket.ticket_id, timeout=0.01)
        assert waited.state == PENDING
