// Shapes of what the control plane serves. Payloads are already
// credential-masked server-side; raw values exist only behind reveal=1.

export interface EventFrame {
  seq: number;
  kind: string;
  payload: Record<string, any>;
}

export type TicketState = 'pending' | 'approved' | 'denied' | 'approved_with_edit';

export interface Ticket {
  ticket_id: number;
  state: TicketState;
  session: string;
  command_line: string;
  purpose: string;
  explanation: string;
  risk_flags: string[];
  decided_by: string | null;
  decided_at: number | null;
  reason: string | null;
  edited_command: string | null;
}

export interface Finding {
  kind: string;
  value: string;
  source_ref: number | null;
}

export type NodeStatus = 'to-do' | 'in-progress' | 'completed' | 'failed';

export interface TreeNode {
  id: string;
  title: string;
  status: NodeStatus;
  depth: number;
  resultLines: string[];
}

export interface EngagementSummary {
  status: string;
  cycle: number;
  mode: string;
  scope: string[];
  used_tokens: number;
  budgets: { max_cycles: number; max_tokens: number | null };
  last_seq: number;
}

export type Decision = 'approve' | 'deny' | 'approve_with_edit';

export interface DecisionBody {
  decision: Decision;
  operator: string;
  reason?: string;
  edited_command?: string;
}

export type ConnectionState = 'connecting' | 'live' | 'reconnecting' | 'closed' | 'auth-failed';
