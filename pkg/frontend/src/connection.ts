// Session connection: hello handshake, ordered event intake, command
// emission with acks, and reconnect-with-catch-up. The transport is
// injected so tests drive the same code over a recorded session.

import {
  PROTOCOL_VERSION,
  WireFrame,
  commandFrame,
  eventPayload,
  parseFrame,
  serializeFrame,
} from "./protocol.js";
import type { EventPayload } from "./protocol.js";

export interface Transport {
  send(text: string): void;
  close(): void;
  onMessage(cb: (text: string) => void): void;
  onClose(cb: () => void): void;
}

export interface ConnectionHandlers {
  onRecord(record: EventPayload): void;
  onAck?(frame: WireFrame): void;
  onProtocolError?(frame: WireFrame): void;
}

interface PendingAck {
  resolve(frame: WireFrame): void;
  reject(err: Error): void;
}

export class Connection {
  private transport: Transport;
  private handlers: ConnectionHandlers;
  private nextSeq = 1;
  private pending = new Map<number, PendingAck>();
  session: string | null = null;
  helloDone = false;

  constructor(transport: Transport, handlers: ConnectionHandlers) {
    this.transport = transport;
    this.handlers = handlers;
    transport.onMessage((text) => this.receive(text));
  }

  /** Send the hello; the server acks then streams the full catch-up. */
  hello(): Promise<WireFrame> {
    return this.sendRaw(commandFrame(this.nextSeq++, this.session ?? "client", "hello"));
  }

  sendCommand(name: string, data: Record<string, unknown> = {}): Promise<WireFrame> {
    return this.sendRaw(commandFrame(this.nextSeq++, this.session ?? "client", name, data));
  }

  private sendRaw(frame: WireFrame): Promise<WireFrame> {
    const promise = new Promise<WireFrame>((resolve, reject) => {
      this.pending.set(frame.seq, { resolve, reject });
    });
    this.transport.send(serializeFrame(frame));
    return promise;
  }

  private receive(text: string): void {
    const frame = parseFrame(text);
    if (frame.type === "event") {
      if (this.session === null) this.session = frame.session;
      this.handlers.onRecord(eventPayload(frame));
      return;
    }
    if (frame.type === "ack") {
      this.session = frame.session;
      if (frame.payload.hello === true) this.helloDone = true;
      const waiter = this.pending.get(frame.seq);
      if (waiter !== undefined) {
        this.pending.delete(frame.seq);
        waiter.resolve(frame);
      }
      this.handlers.onAck?.(frame);
      return;
    }
    // error frames carry seq 0 when they answer malformed input
    this.handlers.onProtocolError?.(frame);
  }

  close(): void {
    this.transport.close();
  }
}

/** Browser transport over the native WebSocket. */
export class WsTransport implements Transport {
  private ws: WebSocket;
  private messageCb: ((text: string) => void) | null = null;
  private closeCb: (() => void) | null = null;

  constructor(url: string, onOpen: () => void) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => onOpen();
    this.ws.onmessage = (ev) => this.messageCb?.(String(ev.data));
    this.ws.onclose = () => this.closeCb?.();
  }

  send(text: string): void {
    this.ws.send(text);
  }

  close(): void {
    this.ws.close();
  }

  onMessage(cb: (text: string) => void): void {
    this.messageCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }
}

export { PROTOCOL_VERSION };
