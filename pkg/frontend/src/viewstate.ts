/**
 * Client-side view model.
 *
 * Pure state container fed by protocol frames; rendering reads it and
 * never mutates protocol messages. State frames are last-write-wins, the
 * event log is a bounded ring, and the robot trail is bounded.
 */

import {
  EventFrame,
  HelloFrame,
  ScenarioInfo,
  ServerFrame,
  SpecFrame,
  StateFrame,
} from "./protocol.js";

export const EVENT_LOG_LIMIT = 200;
export const TRAIL_LIMIT = 600;

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "incompatible";

export class ViewState {
  connection: ConnectionStatus = "connecting";
  scenario: ScenarioInfo | null = null;
  state: StateFrame | null = null;
  spec: SpecFrame | null = null;
  events: EventFrame[] = [];
  trail: Array<[number, number]> = [];
  /** true while a query is in flight (input disabled until resolution) */
  pipelineBusy = false;

  apply(frame: ServerFrame): void {
    switch (frame.type) {
      case "hello":
        this.applyHello(frame);
        break;
      case "state":
        this.state = frame; // last-write-wins; dropped frames are harmless
        this.trail.push([frame.robot.x, frame.robot.y]);
        if (this.trail.length > TRAIL_LIMIT) {
          this.trail.splice(0, this.trail.length - TRAIL_LIMIT);
        }
        break;
      case "spec":
        this.spec = frame;
        break;
      case "event":
        this.applyEvent(frame);
        break;
    }
  }

  private applyHello(frame: HelloFrame): void {
    this.scenario = frame.scenario;
    this.connection = "connected";
  }

  private applyEvent(frame: EventFrame): void {
    this.events.push(frame);
    if (this.events.length > EVENT_LOG_LIMIT) {
      this.events.splice(0, this.events.length - EVENT_LOG_LIMIT);
    }
    if (frame.stage === "Applied" || frame.stage === "Rejected") {
      this.pipelineBusy = false;
    }
    if (frame.stage === "Control" && frame.detail === "reset") {
      this.trail = [];
    }
  }

  markQuerySent(): void {
    this.pipelineBusy = true;
  }

  markDisconnected(willRetry: boolean): void {
    this.connection = willRetry ? "reconnecting" : "incompatible";
  }
}
