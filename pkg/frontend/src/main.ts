import { AuthFailure, ConsoleClient } from './api.js';
import { confirmationPhrase, guardDecision, isDestructive } from './decisions.js';
import { renderConsole } from './render.js';
import { ConsoleStore } from './state.js';
import { streamEvents } from './sse.js';
import { Ticket } from './types.js';

// Browser entry point. Everything testable lives in the imported modules;
// this file only wires DOM events to the store and client.

function tokenFromPage(): string {
  const params = new URLSearchParams(window.location.search);
  const given = params.get('token');
  if (given) {
    sessionStorage.setItem('api-token', given);
    return given;
  }
  return sessionStorage.getItem('api-token') ?? '';
}

function baseUrlFromPage(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get('api') ?? window.location.origin;
}

async function decideFromPrompt(
  store: ConsoleStore,
  client: ConsoleClient,
  ticketId: number,
  act: string,
): Promise<void> {
  const ticket = store.view.tickets.find((t) => t.ticket_id === ticketId);
  if (!ticket) return;
  const input: Parameters<typeof guardDecision>[1] = {
    decision: act === 'deny' ? 'deny' : act === 'edit' ? 'approve_with_edit' : 'approve',
  };
  if (input.decision === 'deny') {
    input.reason = window.prompt('Reason for denial (required):') ?? '';
  }
  if (input.decision === 'approve_with_edit') {
    input.editedCommand = window.prompt('Edited command:', ticket.command_line) ?? '';
  }
  if (input.decision !== 'deny' && isDestructive(ticket)) {
    input.confirmation =
      window.prompt(`Destructive step. Type "${confirmationPhrase(ticket)}" to proceed:`) ?? '';
  }
  const guarded = guardDecision(ticket, input);
  if (!guarded.ok) {
    window.alert(guarded.error);
    return;
  }
  const result = await client.decideTicket(ticketId, guarded.body);
  if (result.outcome === 'conflict') {
    store.refreshTickets(await client.tickets()); // decided elsewhere
  } else if (result.outcome === 'rejected') {
    window.alert(`rejected: ${result.detail}`);
  }
}

async function revealFinding(
  store: ConsoleStore,
  client: ConsoleClient,
): Promise<void> {
  const [masked, raw] = await Promise.all([client.findings(false), client.findings(true)]);
  store.recordReveals(masked, raw);
}

function wire(root: HTMLElement, store: ConsoleStore, client: ConsoleClient): void {
  root.addEventListener('click', (ev) => {
    const target = ev.target as HTMLElement;
    const act = target.dataset.act;
    if (!act) return;
    if (act === 'stop') {
      const phrase = 'stop engagement';
      if (window.prompt(`Type "${phrase}" to stop:`) === phrase) void client.stop();
    } else if (act === 'reveal') {
      void revealFinding(store, client);
    } else {
      void decideFromPrompt(store, client, Number(target.dataset.ticket), act);
    }
  });
}

export function boot(): void {
  const root = document.getElementById('console');
  if (!root) throw new Error('missing #console root element');
  const token = tokenFromPage();
  const base = baseUrlFromPage();
  const store = new ConsoleStore();
  const client = new ConsoleClient(base, token);
  store.subscribe(() => {
    root.innerHTML = renderConsole(store);
  });
  wire(root, store, client);

  void (async () => {
    try {
      const snapshot = await client.engagement();
      store.view.status = snapshot.status;
      store.view.cycle = snapshot.cycle;
      store.view.usedTokens = snapshot.used_tokens;
    } catch (err) {
      if (err instanceof AuthFailure) {
        store.setConnection('auth-failed');
        return;
      }
    }
    store.refreshTickets(await client.tickets().catch(() => [] as Ticket[]));
    streamEvents(base, token, 0, {
      onFrame: (frame) => store.applyFrame(frame),
      onState: (state) => store.setConnection(state),
    });
  })();
}

boot();
