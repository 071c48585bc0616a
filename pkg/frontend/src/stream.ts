// Websocket client: parses DisplayEvents, enforces per-connection sequence
// order, and reconnects with exponential backoff. The socket constructor and
// timer functions are injectable so tests can drive it synchronously.

import { DisplayEvent, isDisplayEvent } from "./types.js";

export interface SocketLike {
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  close(): void;
}

export interface StreamHandlers {
  onEvent(event: DisplayEvent): void;
  onConnection(state: "connecting" | "live" | "standby"): void;
}

export interface StreamOptions {
  socketFactory?: (url: string) => SocketLike;
  setTimer?: (fn: () => void, ms: number) => unknown;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
}

export class EventStream {
  private url: string;
  private handlers: StreamHandlers;
  private factory: (url: string) => SocketLike;
  private setTimer: (fn: () => void, ms: number) => unknown;
  private backoffBase: number;
  private backoffMax: number;
  private attempts = 0;
  private lastSeq = 0;
  private socket: SocketLike | null = null;
  private closed = false;

  constructor(url: string, handlers: StreamHandlers, opts: StreamOptions = {}) {
    this.url = url;
    this.handlers = handlers;
    this.factory = opts.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoffBase = opts.backoffBaseMs ?? 500;
    this.backoffMax = opts.backoffMaxMs ?? 8000;
  }

  connect(): void {
    if (this.closed) return;
    this.handlers.onConnection("connecting");
    let socket: SocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.lastSeq = 0; // server sequences are per-connection
      this.handlers.onConnection("live");
    };
    socket.onmessage = (ev) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(ev.data);
      } catch {
        return; // garbage frame; ignore
      }
      if (!isDisplayEvent(parsed)) return;
      if (parsed.seq <= this.lastSeq) return; // out of order: drop
      this.lastSeq = parsed.seq;
      this.handlers.onEvent(parsed);
    };
    const lost = () => {
      if (this.socket !== socket) return;
      this.socket = null;
      this.handlers.onConnection("standby");
      this.scheduleReconnect();
    };
    socket.onclose = lost;
    socket.onerror = lost;
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    const delay = Math.min(this.backoffBase * 2 ** this.attempts, this.backoffMax);
    this.attempts += 1;
    this.setTimer(() => this.connect(), delay);
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }
}
