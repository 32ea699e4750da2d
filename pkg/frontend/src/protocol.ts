/**
 * Session wire protocol (v1).
 *
 * JSON text frames over a websocket. The server opens with a hello frame
 * carrying the protocol version and static scenario geometry, then streams
 * state frames at the control rate and a spec frame whenever the active
 * cost function changes. Every frame has a per-connection sequence number.
 */

export const PROTOCOL_VERSION = 1;

export interface ScenarioInfo {
  name: string;
  bounds: { xmin: number; xmax: number; ymin: number; ymax: number };
  corridors: Array<{ normal: [number, number]; offset: number }>;
  goal: [number, number];
  reference: Array<[number, number]>;
  robot_radius: number;
}

export interface HelloFrame {
  type: "hello";
  seq: number;
  proto: number;
  scenario: ScenarioInfo;
}

export interface StateFrame {
  type: "state";
  seq: number;
  t: number;
  status: string;
  robot: { x: number; y: number; theta: number; v: number };
  humans: Array<{
    id: number;
    x: number;
    y: number;
    vx: number;
    vy: number;
    radius: number;
  }>;
  plan: { points: Array<[number, number]>; status: string };
  goal: [number, number];
  reference: Array<[number, number]>;
}

export interface SpecFrame {
  type: "spec";
  seq: number;
  digest: string;
  terms: Array<{ name: string; kind: string; source: string }>;
  weights: Record<string, number>;
  params: Record<string, { value: number; unit: string; tunable: boolean }>;
  provenance: string;
}

export interface EventFrame {
  type: "event";
  seq: number;
  stage: string;
  detail: string;
  elapsed: number;
}

export type ServerFrame = HelloFrame | StateFrame | SpecFrame | EventFrame;

export type ClientMessage =
  | { type: "query"; text: string }
  | { type: "scene"; text: string }
  | { type: "control"; action: "pause" | "resume" | "reset" | "load"; scenario?: string };

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null;
}

/** Parse one raw message; returns null for anything malformed. */
export function parseFrame(raw: string): ServerFrame | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!isRecord(doc) || typeof doc.type !== "string") {
    return null;
  }
  switch (doc.type) {
    case "hello":
      if (typeof doc.proto === "number" && isRecord(doc.scenario)) {
        return doc as unknown as HelloFrame;
      }
      return null;
    case "state":
      if (isRecord(doc.robot) && Array.isArray(doc.humans)) {
        return doc as unknown as StateFrame;
      }
      return null;
    case "spec":
      if (isRecord(doc.weights) && Array.isArray(doc.terms)) {
        return doc as unknown as SpecFrame;
      }
      return null;
    case "event":
      if (typeof doc.stage === "string" && typeof doc.detail === "string") {
        return doc as unknown as EventFrame;
      }
      return null;
    default:
      return null;
  }
}
