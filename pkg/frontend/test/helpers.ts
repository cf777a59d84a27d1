import { readFileSync } from 'node:fs';

import { parseChunk } from '../src/sse.js';
import { EventFrame, Ticket } from '../src/types.js';

export function loadFixture(name: string): string {
  return readFileSync(new URL(`./fixtures/${name}`, import.meta.url), 'utf8');
}

export function framesOf(text: string): EventFrame[] {
  const { frames, rest } = parseChunk(text);
  if (rest.trim()) throw new Error(`trailing partial frame: ${rest.slice(0, 80)}`);
  return frames;
}

export function pendingTicket(overrides: Partial<Ticket> = {}): Ticket {
  return {
    ticket_id: 1,
    state: 'pending',
    session: 'main',
    command_line: 'curl http://10.10.11.11/',
    purpose: 'fetch the landing page',
    explanation: 'fetch the landing page',
    risk_flags: [],
    decided_by: null,
    decided_at: null,
    reason: null,
    edited_command: null,
    ...overrides,
  };
}

// json Response helper for fetch mocks
export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}
