/** HTTP/SSE client for the session service.
 *
 * Reconnects by design: the SSE stream always opens with a fresh snapshot,
 * so a dropped connection costs nothing but the gap — the store reconciles
 * from the snapshot when the stream comes back.
 */

import { EventMessage, LaunchOutcome, StateDoc } from "./types.js";

export interface ClientHandlers {
  onMessage: (msg: EventMessage) => void;
  onConnection: (up: boolean) => void;
}

export class WallClient {
  private source: EventSource | null = null;
  private retryMs = 1000;
  private closed = false;

  constructor(private baseUrl: string) {}

  async fetchState(): Promise<StateDoc> {
    const res = await fetch(`${this.baseUrl}/state`);
    if (!res.ok) throw new Error(`GET /state -> ${res.status}`);
    return (await res.json()) as StateDoc;
  }

  async launch(station: number): Promise<LaunchOutcome> {
    const res = await fetch(`${this.baseUrl}/launch`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ station }),
    });
    if (!res.ok) throw new Error(`POST /launch -> ${res.status}`);
    return (await res.json()) as LaunchOutcome;
  }

  loopUrl(loopId: string): string {
    return `${this.baseUrl}/loops/${loopId}.wav`;
  }

  stream(handlers: ClientHandlers): void {
    this.closed = false;
    this.open(handlers);
  }

  private open(handlers: ClientHandlers): void {
    if (this.closed) return;
    const source = new EventSource(`${this.baseUrl}/events`);
    this.source = source;
    source.onopen = () => {
      this.retryMs = 1000;
      handlers.onConnection(true);
    };
    source.onmessage = (ev) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(ev.data);
      } catch {
        return; // counted as dropped by the store when shape checks fail
      }
      handlers.onMessage(parsed as EventMessage);
    };
    source.onerror = () => {
      handlers.onConnection(false);
      source.close();
      if (this.closed) return;
      setTimeout(() => this.open(handlers), this.retryMs);
      this.retryMs = Math.min(this.retryMs * 2, 15000);
    };
  }

  close(): void {
    this.closed = true;
    this.source?.close();
    this.source = null;
  }
}
