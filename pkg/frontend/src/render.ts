import { ConsoleStore } from './state.js';
import { Finding, Ticket, TreeNode } from './types.js';

// Markup is built as strings from the store and swapped in wholesale; the
// store is small enough that diffing buys nothing. All engine text is
// escaped. data-* attributes carry the ids the event delegation needs.

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

function statusBadge(status: string): string {
  return `<span class="badge badge-${escapeHtml(status)}">${escapeHtml(status)}</span>`;
}

function renderNode(node: TreeNode, currentTask: string | null): string {
  const markers = [
    `<span class="node-id">${escapeHtml(node.id)}</span>`,
    escapeHtml(node.title),
    statusBadge(node.status),
    node.id === currentTask ? '<span class="badge badge-current">current</span>' : '',
  ];
  const bullets = node.resultLines
    .map((line) => `<li class="result">${escapeHtml(line)}</li>`)
    .join('');
  return (
    `<li class="node depth-${node.depth}" data-node="${escapeHtml(node.id)}">` +
    `${markers.join(' ')}${bullets ? `<ul>${bullets}</ul>` : ''}</li>`
  );
}

function renderTicket(ticket: Ticket): string {
  const flags = ticket.risk_flags.length
    ? ticket.risk_flags.map((f) => `<span class="flag">${escapeHtml(f)}</span>`).join(' ')
    : '';
  const decided =
    ticket.state === 'pending'
      ? `<span class="actions">
          <button data-act="approve" data-ticket="${ticket.ticket_id}">approve</button>
          <button data-act="deny" data-ticket="${ticket.ticket_id}">deny</button>
          <button data-act="edit" data-ticket="${ticket.ticket_id}">edit</button>
        </span>`
      : `<span class="decided">${escapeHtml(ticket.state)}${
          ticket.reason ? `: ${escapeHtml(ticket.reason)}` : ''
        }</span>`;
  return `<li class="ticket ticket-${escapeHtml(ticket.state)}" data-ticket="${ticket.ticket_id}">
    <div class="ticket-head">#${ticket.ticket_id} ${escapeHtml(ticket.session)} ${flags}</div>
    <code class="command">${escapeHtml(ticket.edited_command ?? ticket.command_line)}</code>
    <div class="purpose">${escapeHtml(ticket.purpose)}</div>
    ${decided}
  </li>`;
}

function renderFinding(finding: Finding, store: ConsoleStore): string {
  const raw = store.revealedValue(finding);
  const value = raw
    ? `<code class="revealed">${escapeHtml(raw)}</code>`
    : `<code>${escapeHtml(finding.value)}</code>
       <button data-act="reveal" data-kind="${escapeHtml(finding.kind)}" data-value="${escapeHtml(
         finding.value,
       )}">reveal</button>`;
  return `<tr><td>${escapeHtml(finding.kind)}</td><td>${value}</td></tr>`;
}

export function renderConsole(store: ConsoleStore): string {
  const v = store.view;
  const banner =
    v.connection === 'auth-failed'
      ? '<div class="banner banner-auth">Authentication failed: check the API token.</div>'
      : v.connection === 'reconnecting'
        ? '<div class="banner banner-reconnect">Connection lost, retrying…</div>'
        : '';
  if (v.connection === 'auth-failed') return banner; // no panes without auth

  const statusBar = `<header class="status-bar">
    ${statusBadge(v.status)}
    <span>cycle ${v.cycle}${v.maxCycles ? ` / ${v.maxCycles}` : ''}</span>
    <span>${v.usedTokens} tokens${v.maxTokens ? ` / ${v.maxTokens}` : ''}</span>
    <span>${escapeHtml(v.mode)} · scope: ${v.scope.map(escapeHtml).join(', ')}</span>
    <span class="conn conn-${v.connection}">${v.connection}</span>
    <button data-act="stop">stop engagement</button>
  </header>`;

  const tree = `<section class="pane pane-tree"><h2>Task tree</h2>
    <ul class="tree">${v.tree.map((n) => renderNode(n, v.currentTask)).join('')}</ul>
  </section>`;

  const tickets = `<section class="pane pane-tickets"><h2>Tickets</h2>
    <ul class="tickets">${store.orderedTickets().map(renderTicket).join('')}</ul>
  </section>`;

  const sessionTabs = Object.entries(v.sessions)
    .map(
      ([name, output]) => `<details class="session" data-session="${escapeHtml(name)}">
        <summary>${escapeHtml(name)}</summary><pre>${escapeHtml(output)}</pre>
      </details>`,
    )
    .join('');
  const findings = `<table class="findings"><tbody>
    ${v.findings.map((f) => renderFinding(f, store)).join('')}
  </tbody></table>`;
  const warnings = v.warnings.length
    ? `<ul class="warnings">${v.warnings
        .map((w) => `<li>${escapeHtml(w)}</li>`)
        .join('')}</ul>`
    : '';
  const right = `<section class="pane pane-output"><h2>Sessions</h2>${sessionTabs}
    <h2>Findings</h2>${findings}${warnings}</section>`;

  return `${banner}${statusBar}<main class="panes">${tree}${tickets}${right}</main>`;
}
