// Thin wiring between a websocket, the reducer, and the rate limiter. The
// socket and clock are injected so tests can drive the client directly.

import { decodeServerMessage, encodeClientMessage } from "./protocol.js";
import { Action, ConsoleState, initialState, reduce } from "./state.js";
import { TokenBucket } from "./rate.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

export type Listener = (state: ConsoleState) => void;

export class ConsoleClient {
  state: ConsoleState = initialState();
  sent: string[] = []; // transcript for tests
  private bucket: TokenBucket;
  private listeners: Listener[] = [];

  constructor(
    private socket: SocketLike,
    private role: "operator" | "observer" = "operator",
    private now: () => number = () => Date.now()
  ) {
    // rate 100/s with a small burst allowance; stale sends are dropped, not
    // queued, because a newer leader state supersedes an older one
    this.bucket = new TokenBucket(100, 5, this.now());
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  private transmit(data: string): void {
    this.socket.send(data);
    this.sent.push(data);
  }

  handleOpen(): void {
    this.apply({ kind: "socket", status: "open", at: this.now() });
    this.transmit(
      encodeClientMessage({ type: "hello", t: this.now() / 1000, role: this.role })
    );
  }

  handleClose(): void {
    this.apply({ kind: "socket", status: "closed", at: this.now() });
  }

  handleRaw(raw: string): void {
    let msg;
    try {
      msg = decodeServerMessage(raw);
    } catch (e) {
      this.state = { ...this.state, lastError: String(e) };
      this.emit();
      return;
    }
    this.apply({ kind: "server", msg, at: this.now() });
  }

  // every reducer output passes the token bucket: the console never exceeds
  // the negotiated command rate no matter how fast the inputs arrive
  apply(action: Action): void {
    const step = reduce(this.state, action);
    this.state = step.state;
    for (const msg of step.outbound) {
      if (this.bucket.tryTake(this.now())) {
        this.transmit(encodeClientMessage(msg));
      }
    }
    this.emit();
  }

  heartbeat(): void {
    if (this.bucket.tryTake(this.now())) {
      this.transmit(
        encodeClientMessage({ type: "heartbeat", t: this.now() / 1000 })
      );
    }
  }
}
