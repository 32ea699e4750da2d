/**
 * Websocket connection with handshake verification and auto-reconnect.
 *
 * Reconnects with exponential backoff capped at 10 s. A protocol version
 * mismatch stops the retry loop (status "incompatible"). One outgoing
 * query may be buffered while disconnected and is flushed on reconnect.
 */

import { ClientMessage, PROTOCOL_VERSION, parseFrame } from "./protocol.js";
import { ViewState } from "./viewstate.js";

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_CAP_MS = 10_000;

/** Deterministic backoff schedule: 0.5s, 1s, 2s, ... capped at 10s. */
export function backoffDelay(attempt: number): number {
  return Math.min(BACKOFF_INITIAL_MS * 2 ** attempt, BACKOFF_CAP_MS);
}

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const defaultFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike;

export class Connection {
  private socket: SocketLike | null = null;
  private attempt = 0;
  private stopped = false;
  private pendingQuery: ClientMessage | null = null; // depth 1 offline buffer
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    readonly view: ViewState,
    private readonly factory: SocketFactory = defaultFactory,
    private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  open(): void {
    if (this.stopped) {
      return;
    }
    this.view.connection = this.attempt === 0 ? "connecting" : "reconnecting";
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempt = 0;
      if (this.pendingQuery) {
        socket.send(JSON.stringify(this.pendingQuery));
        if (this.pendingQuery.type === "query") {
          this.view.markQuerySent();
        }
        this.pendingQuery = null;
      }
    };
    socket.onmessage = (event) => {
      if (typeof event.data !== "string") {
        return;
      }
      const frame = parseFrame(event.data);
      if (frame === null) {
        return;
      }
      if (frame.type === "hello" && frame.proto !== PROTOCOL_VERSION) {
        this.stopped = true; // no retry loop spin on incompatible servers
        this.view.markDisconnected(false);
        socket.close();
        return;
      }
      this.view.apply(frame);
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.stopped) {
        return;
      }
      this.view.markDisconnected(true);
      const delay = backoffDelay(this.attempt);
      this.attempt += 1;
      this.timer = this.schedule(() => this.open(), delay);
    };
    socket.onerror = () => {
      // close follows; reconnection is handled there
    };
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.socket?.close();
  }

  /** Send a message; queries buffer (depth 1) while disconnected. */
  send(message: ClientMessage): boolean {
    if (this.socket !== null && this.view.connection === "connected") {
      this.socket.send(JSON.stringify(message));
      if (message.type === "query") {
        this.view.markQuerySent();
      }
      return true;
    }
    if (message.type === "query") {
      this.pendingQuery = message; // newest wins
    }
    return false;
  }
}
