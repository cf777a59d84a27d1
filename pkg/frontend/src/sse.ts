import { EventFrame } from './types.js';

// The event stream is SSE-framed: "id: <seq>\ndata: <json>\n\n" per event.
// parseChunk is incremental so a frame split across network reads survives.

export interface ParseResult {
  frames: EventFrame[];
  rest: string;
}

export function parseChunk(buffered: string): ParseResult {
  const frames: EventFrame[] = [];
  let rest = buffered;
  for (;;) {
    const cut = rest.indexOf('\n\n');
    if (cut < 0) break;
    const block = rest.slice(0, cut);
    rest = rest.slice(cut + 2);
    const frame = parseBlock(block);
    if (frame) frames.push(frame);
  }
  return { frames, rest };
}

function parseBlock(block: string): EventFrame | null {
  let id = -1;
  let data = '';
  for (const line of block.split('\n')) {
    if (line.startsWith('id: ')) id = Number(line.slice(4));
    else if (line.startsWith('data: ')) data = line.slice(6);
  }
  if (!data) return null;
  const parsed = JSON.parse(data);
  return { seq: id >= 0 ? id : parsed.seq, kind: parsed.kind, payload: parsed.payload };
}

export interface StreamHandle {
  close(): void;
}

export interface StreamCallbacks {
  onFrame(frame: EventFrame): void;
  onState(state: 'live' | 'reconnecting' | 'closed' | 'auth-failed'): void;
}

const MAX_BACKOFF_MS = 30_000;

// Plain EventSource cannot send an Authorization header, so the stream is
// consumed with fetch + ReadableStream. Resumes from the last seen seq.
export function streamEvents(
  baseUrl: string,
  token: string,
  fromSeq: number,
  callbacks: StreamCallbacks,
  fetchImpl: typeof fetch = fetch,
): StreamHandle {
  let cursor = fromSeq;
  let closed = false;
  let backoff = 1000;
  const controller = { current: new AbortController() };

  const connect = async (): Promise<void> => {
    while (!closed) {
      controller.current = new AbortController();
      try {
        const resp = await fetchImpl(`${baseUrl}/events?cursor=${cursor}&follow=1`, {
          headers: { Authorization: `Bearer ${token}` },
          signal: controller.current.signal,
        });
        if (resp.status === 401) {
          callbacks.onState('auth-failed');
          return;
        }
        if (!resp.ok || !resp.body) throw new Error(`stream http ${resp.status}`);
        callbacks.onState('live');
        backoff = 1000;
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = '';
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          const { frames, rest } = parseChunk(buffer);
          buffer = rest;
          for (const frame of frames) {
            cursor = frame.seq;
            callbacks.onFrame(frame);
            if (frame.kind === 'engagement_stopped') {
              // the stop marker is always the engine's last event
              void reader.cancel().catch(() => undefined);
              callbacks.onState('closed');
              return;
            }
          }
        }
        // body ended without a stop marker: proxies close idle streams
        // cleanly, so treat it exactly like a drop and resume from cursor
      } catch (err) {
        if (closed) return;
      }
      if (closed) return;
      callbacks.onState('reconnecting');
      await sleep(backoff);
      backoff = Math.min(backoff * 2, MAX_BACKOFF_MS);
    }
  };

  void connect();
  return {
    close() {
      closed = true;
      controller.current.abort();
    },
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
