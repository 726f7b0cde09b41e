/**
 * Wire protocol (v1) shared with the engine's session server.
 *
 * Transport frames are a 4-byte big-endian length followed by UTF-8
 * JSON. Every message carries a schema version `v` and a per-sender
 * monotone `seq`; receivers drop stale or out-of-order messages by
 * sequence number.
 */

export const PROTOCOL_VERSION = 1;

export interface HelloMessage {
  v: number;
  seq: number;
  type: "hello";
  keypoints: string[];
  dims: number;
  rate_hz: number;
}

export interface PoseFrameMessage {
  v: number;
  seq: number;
  type: "pose_frame";
  k: number;
  pos: number[][];
}

export type ControlAction = "start" | "stop" | "restart" | "record";

export interface ControlMessage {
  v: number;
  seq: number;
  type: "control";
  action: ControlAction;
  value?: boolean;
}

export interface StateMessage {
  v: number;
  seq: number;
  type: "state";
  k: number;
  phase: number;
  fsm: string;
  s: number;
  ps: number;
  playhead: number;
  bar: number;
  fermata: boolean;
  beat: string;
  halted: boolean;
  resume: boolean;
}

export interface EndSummaryMessage {
  v: number;
  seq: number;
  type: "end_summary";
  original_duration: number;
  conducted_duration: number | null;
  pct_difference: number | null;
  finished: boolean;
}

export interface ErrorMessage {
  v: number;
  seq: number;
  type: "error";
  code: string;
  text: string;
}

export interface HelloAckMessage {
  v: number;
  seq: number;
  type: "hello_ack";
  rate_hz: number;
  score_label: string;
}

export type ServerMessage =
  | StateMessage
  | EndSummaryMessage
  | ErrorMessage
  | HelloAckMessage;

export type ClientMessage = HelloMessage | PoseFrameMessage | ControlMessage;

const encoder = new TextEncoder();
const decoder = new TextDecoder();

/** Encode one message as a length-prefixed frame. */
export function encodeFrame(message: object): Uint8Array {
  const body = encoder.encode(JSON.stringify(message));
  const frame = new Uint8Array(4 + body.length);
  new DataView(frame.buffer).setUint32(0, body.length, false);
  frame.set(body, 4);
  return frame;
}

/**
 * Incremental frame decoder: feed arbitrary byte chunks, get parsed
 * messages out. The stream may split or merge frames at any boundary.
 */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): ServerMessage[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;

    const messages: ServerMessage[] = [];
    for (;;) {
      if (this.buffer.length < 4) break;
      const view = new DataView(this.buffer.buffer, this.buffer.byteOffset, 4);
      const length = view.getUint32(0, false);
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.subarray(4, 4 + length);
      messages.push(JSON.parse(decoder.decode(body)) as ServerMessage);
      this.buffer = this.buffer.slice(4 + length);
    }
    return messages;
  }
}
