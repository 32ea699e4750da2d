/**
 * Inspector panel view-models.
 *
 * Pure builders turning the latest spec/event state into display rows;
 * the DOM layer in main.ts renders them verbatim. Weights are shown
 * exactly as received, never renormalized client-side.
 */

import { EventFrame, SpecFrame } from "./protocol.js";

export interface WeightRow {
  name: string;
  kind: string;
  weight: string;
  source: string;
}

export interface ParamRow {
  name: string;
  value: string;
  unit: string;
  tunable: boolean;
}

export function weightRows(spec: SpecFrame | null): WeightRow[] {
  if (spec === null) {
    return [];
  }
  return spec.terms.map((term) => ({
    name: term.name,
    kind: term.kind,
    weight: formatNumber(spec.weights[term.name]),
    source: term.source,
  }));
}

export function paramRows(spec: SpecFrame | null): ParamRow[] {
  if (spec === null) {
    return [];
  }
  return Object.entries(spec.params)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([name, p]) => ({
      name,
      value: formatNumber(p.value),
      unit: p.unit,
      tunable: p.tunable,
    }));
}

export function eventLines(events: EventFrame[], limit = 12): string[] {
  return events
    .slice(-limit)
    .map((e) => `[${e.stage}] ${e.detail}`)
    .reverse();
}

/** Current pipeline stage for the progress indicator, if one is running. */
export function pipelineStage(
  events: EventFrame[],
  busy: boolean,
): string | null {
  if (!busy) {
    return null;
  }
  for (let i = events.length - 1; i >= 0; i -= 1) {
    const stage = events[i].stage;
    if (["Capability", "CostGen", "Camera", "WeightRet"].includes(stage)) {
      return stage;
    }
  }
  return "Capability";
}

export function formatNumber(x: number | undefined): string {
  if (x === undefined || Number.isNaN(x)) {
    return "-";
  }
  return Math.abs(x) >= 100 ? x.toFixed(0) : x.toPrecision(3);
}

/** Client-side query validation: non-empty after trimming. */
export function validQuery(text: string): boolean {
  return text.trim().length > 0;
}
