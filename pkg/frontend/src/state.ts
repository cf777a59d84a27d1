import { parseTree } from './ptt.js';
import {
  ConnectionState,
  EventFrame,
  Finding,
  Ticket,
  TreeNode,
} from './types.js';

// Single unidirectional store: every pane derives from the event stream,
// nothing is invented client-side. applyFrame is the only mutation path
// for engine state; reveal/connection flags are the only local extras.

export interface ViewModel {
  connection: ConnectionState;
  status: string;
  mode: string;
  scope: string[];
  cycle: number;
  usedTokens: number;
  maxCycles: number | null;
  maxTokens: number | null;
  treeRevision: number;
  tree: TreeNode[];
  currentTask: string | null;
  tickets: Ticket[];
  findings: Finding[];
  sessions: Record<string, string>;
  summaries: string[];
  warnings: string[];
  lastSeq: number;
}

export function initialView(): ViewModel {
  return {
    connection: 'connecting',
    status: 'unknown',
    mode: '',
    scope: [],
    cycle: 0,
    usedTokens: 0,
    maxCycles: null,
    maxTokens: null,
    treeRevision: 0,
    tree: [],
    currentTask: null,
    tickets: [],
    findings: [],
    sessions: {},
    summaries: [],
    warnings: [],
    lastSeq: 0,
  };
}

export class ConsoleStore {
  view: ViewModel = initialView();
  private revealed = new Map<string, string>();
  private listeners: Array<() => void> = [];

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  applyFrame(frame: EventFrame): void {
    const v = this.view;
    if (frame.seq <= v.lastSeq) return; // duplicate after a reconnect
    v.lastSeq = frame.seq;
    const p = frame.payload;

    switch (frame.kind) {
      case 'engagement_started':
        v.status = 'running';
        v.mode = p.mode ?? '';
        v.scope = p.scope ?? [];
        v.maxCycles = p.budgets?.max_cycles ?? null;
        v.maxTokens = p.budgets?.max_tokens ?? null;
        break;
      case 'plan_updated':
        v.treeRevision = p.revision ?? v.treeRevision;
        v.tree = parseTree(p.tree ?? '');
        break;
      case 'task_selected':
        v.currentTask = p.task_id ?? null;
        break;
      case 'ticket_submitted':
        v.tickets.push({
          ticket_id: p.ticket_id,
          state: 'pending',
          session: p.session ?? '',
          command_line: p.command_line ?? '',
          purpose: p.purpose ?? '',
          explanation: p.purpose ?? '',
          risk_flags: p.risk_flags ?? [],
          decided_by: null,
          decided_at: null,
          reason: null,
          edited_command: null,
        });
        break;
      case 'ticket_decided': {
        const ticket = v.tickets.find((t) => t.ticket_id === p.ticket_id);
        if (ticket) {
          ticket.state = p.decision;
          ticket.decided_by = p.decided_by ?? null;
          ticket.reason = p.reason ?? null;
          ticket.edited_command = p.edited_command ?? null;
        }
        break;
      }
      case 'step_executed': {
        const name = p.session ?? 'main';
        const prior = v.sessions[name] ?? '';
        const output = p.output ? `${p.output}\n` : '';
        v.sessions[name] = `${prior}$ ${p.command_line}\n${output}`;
        break;
      }
      case 'summary_created':
        v.summaries.push((p.text ?? []).join('\n'));
        break;
      case 'finding_extracted':
        v.findings.push({
          kind: p.kind,
          value: p.value,
          source_ref: p.source_ref ?? null,
        });
        break;
      case 'query_issued':
        break; // status bar noise, not rendered
      case 'warning':
        v.warnings.push(`${p.origin}: ${p.message}`);
        break;
      case 'engagement_stopped':
        v.status = p.status ?? 'stopped';
        v.cycle = p.cycles ?? v.cycle;
        v.usedTokens = p.used_tokens ?? v.usedTokens;
        break;
      default:
        break; // forward-compatible: unknown kinds are ignored
    }
    this.notify();
  }

  setConnection(state: ConnectionState): void {
    this.view.connection = state;
    this.notify();
  }

  // Queue ordering for the center pane: pending first, then newest decided.
  orderedTickets(): Ticket[] {
    const pending = this.view.tickets.filter((t) => t.state === 'pending');
    const decided = this.view.tickets.filter((t) => t.state !== 'pending');
    return [...pending, ...decided.reverse()];
  }

  pendingTickets(): Ticket[] {
    return this.view.tickets.filter((t) => t.state === 'pending');
  }

  // Replace local ticket knowledge from a /tickets snapshot (409 recovery).
  refreshTickets(tickets: Ticket[]): void {
    this.view.tickets = tickets;
    this.notify();
  }

  // Per-value reveal: raw values are fetched explicitly and cached by the
  // masked display value; nothing is revealed by default.
  recordReveals(masked: Finding[], raw: Finding[]): void {
    for (let i = 0; i < masked.length && i < raw.length; i++) {
      this.revealed.set(`${masked[i].kind}:${masked[i].value}`, raw[i].value);
    }
    this.notify();
  }

  revealedValue(finding: Finding): string | null {
    return this.revealed.get(`${finding.kind}:${finding.value}`) ?? null;
  }
}
