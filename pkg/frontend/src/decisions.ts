import { DecisionBody, Ticket } from './types.js';

// Client-side guards in front of POST /tickets/{id}/decision. The server
// enforces the same rules; checking here keeps bad requests off the wire
// and gives immediate feedback.

export interface DecisionInput {
  decision: 'approve' | 'deny' | 'approve_with_edit';
  reason?: string;
  editedCommand?: string;
  confirmation?: string; // typed phrase, required for destructive tickets
  operator?: string;
}

export type Guarded =
  | { ok: true; body: DecisionBody }
  | { ok: false; error: string };

export function confirmationPhrase(ticket: Ticket): string {
  return `run ticket ${ticket.ticket_id}`;
}

export function isDestructive(ticket: Ticket): boolean {
  return ticket.risk_flags.includes('destructive');
}

export function guardDecision(ticket: Ticket, input: DecisionInput): Guarded {
  if (ticket.state !== 'pending') {
    return { ok: false, error: `ticket ${ticket.ticket_id} is already ${ticket.state}` };
  }
  if (input.decision === 'deny' && !input.reason?.trim()) {
    return { ok: false, error: 'a denial needs a non-empty reason' };
  }
  if (input.decision === 'approve_with_edit') {
    const edited = input.editedCommand?.trim();
    if (!edited) return { ok: false, error: 'edit mode needs a replacement command' };
    if (edited === ticket.command_line.trim()) {
      return { ok: false, error: 'edited command is identical to the original' };
    }
  }
  const approving = input.decision !== 'deny';
  if (approving && isDestructive(ticket)) {
    if (input.confirmation !== confirmationPhrase(ticket)) {
      return {
        ok: false,
        error: `destructive step: type "${confirmationPhrase(ticket)}" to confirm`,
      };
    }
  }
  const body: DecisionBody = {
    decision: input.decision,
    operator: input.operator ?? 'console',
  };
  if (input.decision === 'deny') body.reason = input.reason!.trim();
  if (input.decision === 'approve_with_edit') body.edited_command = input.editedCommand!.trim();
  return { ok: true, body };
}

// Word-level diff of the original command against the operator's edit,
// shown before an approve_with_edit is submitted.
export interface DiffSpan {
  kind: 'same' | 'removed' | 'added';
  text: string;
}

export function diffCommand(original: string, edited: string): DiffSpan[] {
  const a = original.split(/\s+/).filter(Boolean);
  const b = edited.split(/\s+/).filter(Boolean);
  // longest common subsequence over words; commands are short
  const lcs: number[][] = Array.from({ length: a.length + 1 }, () =>
    new Array<number>(b.length + 1).fill(0),
  );
  for (let i = a.length - 1; i >= 0; i--) {
    for (let j = b.length - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j] ? lcs[i + 1][j + 1] + 1 : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  const spans: DiffSpan[] = [];
  let i = 0;
  let j = 0;
  const push = (kind: DiffSpan['kind'], text: string) => {
    const last = spans[spans.length - 1];
    if (last && last.kind === kind) last.text += ` ${text}`;
    else spans.push({ kind, text });
  };
  while (i < a.length && j < b.length) {
    if (a[i] === b[j]) {
      push('same', a[i]);
      i++;
      j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      push('removed', a[i]);
      i++;
    } else {
      push('added', b[j]);
      j++;
    }
  }
  while (i < a.length) push('removed', a[i++]);
  while (j < b.length) push('added', b[j++]);
  return spans;
}
