import {
  DecisionBody,
  EngagementSummary,
  Finding,
  Ticket,
} from './types.js';

export class AuthFailure extends Error {
  constructor() {
    super('bad or missing API token');
  }
}

export type DecideResult =
  | { outcome: 'decided'; ticket: Ticket }
  | { outcome: 'conflict' } // someone else decided it first; refresh the queue
  | { outcome: 'rejected'; detail: string };

export class ConsoleClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { Authorization: `Bearer ${this.token}` },
    });
    if (resp.status === 401) throw new AuthFailure();
    if (!resp.ok) throw new Error(`GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  engagement(): Promise<EngagementSummary> {
    return this.get('/engagement');
  }

  tickets(state?: string): Promise<Ticket[]> {
    return this.get(state ? `/tickets?state=${state}` : '/tickets');
  }

  // Masked by default everywhere; this is the one explicit raw fetch,
  // mirroring the CLI's --reveal flag.
  findings(reveal = false): Promise<Finding[]> {
    return this.get(reveal ? '/findings?reveal=1' : '/findings');
  }

  sessionOutput(name: string, since = 0): Promise<{ output: string; cursor: number }> {
    return this.get(`/sessions/${encodeURIComponent(name)}/output?since=${since}`);
  }

  async decideTicket(ticketId: number, body: DecisionBody): Promise<DecideResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/tickets/${ticketId}/decision`, {
      method: 'POST',
      headers: {
        Authorization: `Bearer ${this.token}`,
        'Content-Type': 'application/json',
      },
      body: JSON.stringify(body),
    });
    if (resp.status === 401) throw new AuthFailure();
    if (resp.status === 409) return { outcome: 'conflict' };
    if (!resp.ok) {
      const detail = await resp.text();
      return { outcome: 'rejected', detail };
    }
    return { outcome: 'decided', ticket: (await resp.json()) as Ticket };
  }

  async stop(): Promise<void> {
    const resp = await this.fetchImpl(`${this.baseUrl}/engagement/stop`, {
      method: 'POST',
      headers: { Authorization: `Bearer ${this.token}` },
    });
    if (resp.status === 401) throw new AuthFailure();
    if (!resp.ok) throw new Error(`stop -> ${resp.status}`);
  }
}
