// Wire protocol mirror: line-delimited JSON envelopes over one socket.
// See docs/wire_protocol.md in the repository root for the field reference.

export const PROTOCOL_VERSION = 1;

export type FrameType = "event" | "command" | "ack" | "error";

export interface WireFrame {
  type: FrameType;
  seq: number;
  session: string;
  version: number;
  payload: Record<string, unknown>;
}

export interface EventPayload {
  name: string;
  kind: "event" | "command";
  time: number;
  state: string;
  data: Record<string, unknown>;
  applied?: boolean;
}

export class WireFormatError extends Error {}

const FRAME_TYPES = new Set<FrameType>(["event", "command", "ack", "error"]);

export function parseFrame(text: string): WireFrame {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new WireFormatError(`frame is not valid JSON: ${String(err)}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new WireFormatError("frame must be a JSON object");
  }
  const obj = data as Record<string, unknown>;
  if (!FRAME_TYPES.has(obj.type as FrameType)) {
    throw new WireFormatError(`unknown frame type ${JSON.stringify(obj.type)}`);
  }
  for (const key of ["seq", "session", "version"]) {
    if (!(key in obj)) throw new WireFormatError(`frame missing '${key}'`);
  }
  if (typeof obj.seq !== "number" || !Number.isInteger(obj.seq)) {
    throw new WireFormatError("seq must be an integer");
  }
  const payload = obj.payload ?? {};
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new WireFormatError("payload must be an object");
  }
  return {
    type: obj.type as FrameType,
    seq: obj.seq,
    session: String(obj.session),
    version: Number(obj.version),
    payload: payload as Record<string, unknown>,
  };
}

export function serializeFrame(frame: WireFrame): string {
  return JSON.stringify({
    type: frame.type,
    seq: frame.seq,
    session: frame.session,
    version: frame.version,
    payload: frame.payload,
  });
}

export function commandFrame(
  seq: number,
  session: string,
  name: string,
  data: Record<string, unknown> = {},
): WireFrame {
  return {
    type: "command",
    seq,
    session,
    version: PROTOCOL_VERSION,
    payload: { name, data },
  };
}

export function eventPayload(frame: WireFrame): EventPayload {
  return frame.payload as unknown as EventPayload;
}
