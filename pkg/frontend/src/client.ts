/**
 * Session client: speaks the engine protocol over a pluggable byte
 * transport and dispatches decoded, in-order server messages.
 *
 * No engine logic lives here or anywhere else client-side: phase,
 * beats, and speed all come from the server; the client only renders
 * them.
 */

import {
  ClientMessage,
  ControlAction,
  FrameDecoder,
  PROTOCOL_VERSION,
  ServerMessage,
  encodeFrame,
} from "./protocol.js";

export interface Transport {
  send(data: Uint8Array): void;
  onData(handler: (chunk: Uint8Array) => void): void;
  close(): void;
}

/** WebSocket transport; expects a ws-to-tcp bridge in front of the server. */
export class WebSocketTransport implements Transport {
  private handlers: Array<(chunk: Uint8Array) => void> = [];

  constructor(private socket: WebSocket) {
    socket.binaryType = "arraybuffer";
    socket.onmessage = (event) => {
      const chunk = new Uint8Array(event.data as ArrayBuffer);
      for (const handler of this.handlers) handler(chunk);
    };
  }

  send(data: Uint8Array): void {
    this.socket.send(data);
  }

  onData(handler: (chunk: Uint8Array) => void): void {
    this.handlers.push(handler);
  }

  close(): void {
    this.socket.close();
  }
}

export interface SessionHandlers {
  onState?(message: Extract<ServerMessage, { type: "state" }>): void;
  onEndSummary?(message: Extract<ServerMessage, { type: "end_summary" }>): void;
  onError?(message: Extract<ServerMessage, { type: "error" }>): void;
  onHelloAck?(message: Extract<ServerMessage, { type: "hello_ack" }>): void;
}

type OutboundMessage<T> = T extends object ? Omit<T, "v" | "seq"> : never;

export class SessionClient {
  private seq = 0;
  private lastServerSeq = -1;
  private decoder = new FrameDecoder();
  /** count of stale/out-of-order messages dropped by sequence number */
  dropped = 0;

  constructor(private transport: Transport, private handlers: SessionHandlers) {
    transport.onData((chunk) => {
      for (const message of this.decoder.push(chunk)) this.dispatch(message);
    });
  }

  private dispatch(message: ServerMessage): void {
    if (message.seq <= this.lastServerSeq) {
      this.dropped += 1;
      return;
    }
    this.lastServerSeq = message.seq;
    switch (message.type) {
      case "state":
        this.handlers.onState?.(message);
        break;
      case "end_summary":
        this.handlers.onEndSummary?.(message);
        break;
      case "error":
        this.handlers.onError?.(message);
        break;
      case "hello_ack":
        this.handlers.onHelloAck?.(message);
        break;
    }
  }

  private send(message: OutboundMessage<ClientMessage>): void {
    const full = { v: PROTOCOL_VERSION, seq: this.seq++, ...message };
    this.transport.send(encodeFrame(full));
  }

  hello(keypoints: string[], rateHz: number): void {
    this.send({ type: "hello", keypoints, dims: 2, rate_hz: rateHz });
  }

  control(action: ControlAction, value?: boolean): void {
    this.send({ type: "control", action, ...(value === undefined ? {} : { value }) });
  }

  poseFrame(k: number, pos: number[][]): void {
    this.send({ type: "pose_frame", k, pos });
  }

  close(): void {
    this.transport.close();
  }
}
