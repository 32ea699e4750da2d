import { describe, expect, it } from "vitest";

import {
  eventLines,
  paramRows,
  pipelineStage,
  validQuery,
  weightRows,
} from "../src/panel.js";
import { EventFrame, SpecFrame } from "../src/protocol.js";
import { renderFrame, toCanvas, worldTransform } from "../src/render.js";
import { ViewState } from "../src/viewstate.js";

const SPEC: SpecFrame = {
  type: "spec",
  seq: 1,
  digest: "abc123",
  terms: [
    { name: "contour", kind: "builtin", source: "contour" },
    { name: "velocity", kind: "builtin", source: "velocity" },
  ],
  weights: { contour: 1.3333333, velocity: 0.6666667 },
  params: {
    v_ref: { value: 2.25, unit: "m/s", tunable: true },
    goal_x: { value: 19, unit: "m", tunable: false },
  },
  provenance: "Be faster.",
};

describe("panel view-models", () => {
  it("weight rows show received weights exactly (no renormalization)", () => {
    const rows = weightRows(SPEC);
    expect(rows.map((r) => r.name)).toEqual(["contour", "velocity"]);
    expect(rows[0].weight).toBe("1.33");
    expect(rows[1].weight).toBe("0.667");
  });

  it("param rows are sorted and flag non-tunables", () => {
    const rows = paramRows(SPEC);
    expect(rows[0].name).toBe("goal_x");
    expect(rows[0].tunable).toBe(false);
    expect(rows[1].name).toBe("v_ref");
    expect(rows[1].value).toBe("2.25");
  });

  it("event lines are newest-first and bounded", () => {
    const events: EventFrame[] = Array.from({ length: 20 }, (_, i) => ({
      type: "event",
      seq: i,
      stage: "WeightRet",
      detail: `d${i}`,
      elapsed: 0,
    }));
    const lines = eventLines(events, 5);
    expect(lines.length).toBe(5);
    expect(lines[0]).toBe("[WeightRet] d19");
  });

  it("pipeline stage reflects the latest stage while busy", () => {
    const events: EventFrame[] = [
      { type: "event", seq: 0, stage: "Capability", detail: "", elapsed: 0 },
      { type: "event", seq: 1, stage: "CostGen", detail: "", elapsed: 0 },
    ];
    expect(pipelineStage(events, true)).toBe("CostGen");
    expect(pipelineStage(events, false)).toBeNull();
    expect(pipelineStage([], true)).toBe("Capability");
  });

  it("rejects empty queries client-side", () => {
    expect(validQuery("  ")).toBe(false);
    expect(validQuery("Be faster.")).toBe(true);
  });
});

describe("renderer geometry", () => {
  const scenario = {
    name: "corridor",
    bounds: { xmin: 0, xmax: 20, ymin: -2, ymax: 2 },
    corridors: [{ normal: [0, 1] as [number, number], offset: 2 }],
    goal: [19, 0] as [number, number],
    reference: [
      [0, 0],
      [20, 0],
    ] as Array<[number, number]>,
    robot_radius: 0.3,
  };

  it("uses one uniform meters-to-pixels scale", () => {
    const t = worldTransform(scenario, 1000, 300, 20);
    // limited by width: (1000 - 40) / 20 = 48 px/m vs (300-40)/4 = 65
    expect(t.scale).toBe(48);
    const [x0, y0] = toCanvas(t, 0, 2);
    expect(x0).toBeCloseTo(20);
    expect(y0).toBeCloseTo(20);
    const [x1, y1] = toCanvas(t, 20, -2);
    expect(x1).toBeCloseTo(980);
    expect(y1).toBeCloseTo(212);
  });

  it("renders a scaled robot disc and the plan polyline", () => {
    const calls: Array<[string, number[]]> = [];
    const ctx = {
      clearRect: (...a: number[]) => calls.push(["clearRect", a]),
      beginPath: () => calls.push(["beginPath", []]),
      moveTo: (...a: number[]) => calls.push(["moveTo", a]),
      lineTo: (...a: number[]) => calls.push(["lineTo", a]),
      arc: (...a: number[]) => calls.push(["arc", a]),
      stroke: () => calls.push(["stroke", []]),
      fill: () => calls.push(["fill", []]),
      setLineDash: () => calls.push(["setLineDash", []]),
      strokeStyle: "",
      fillStyle: "",
      lineWidth: 0,
    };
    const view = new ViewState();
    view.apply({
      type: "state",
      seq: 1,
      t: 0,
      status: "Running",
      robot: { x: 1, y: 0, theta: 0, v: 1 },
      humans: [{ id: 0, x: 8, y: 0.4, vx: -1, vy: 0, radius: 0.3 }],
      plan: {
        points: Array.from({ length: 31 }, (_, k) => [1 + 0.1 * k, 0]) as Array<
          [number, number]
        >,
        status: "Converged",
      },
      goal: [19, 0],
      reference: [
        [0, 0],
        [20, 0],
      ],
    });
    renderFrame(
      ctx,
      scenario,
      view.state!,
      view.trail,
      1000,
      300,
    );
    const t = worldTransform(scenario, 1000, 300);
    const arcs = calls.filter(([name]) => name === "arc");
    // one human + one robot disc, radius scaled by px/m
    expect(arcs.length).toBe(2);
    expect(arcs[1][1][2]).toBeCloseTo(0.3 * t.scale);
    // plan polyline emits one lineTo per remaining vertex
    const planLines = calls.filter(([name]) => name === "lineTo");
    expect(planLines.length).toBeGreaterThanOrEqual(30);
  });

  it("handles a state without humans", () => {
    const noopCtx = new Proxy(
      { strokeStyle: "", fillStyle: "", lineWidth: 0 },
      {
        get(target, prop) {
          if (prop in target) {
            return (target as Record<string | symbol, unknown>)[prop];
          }
          return () => undefined;
        },
        set(target, prop, value) {
          (target as Record<string | symbol, unknown>)[prop] = value;
          return true;
        },
      },
    );
    expect(() =>
      renderFrame(
        noopCtx as never,
        scenario,
        {
          type: "state",
          seq: 1,
          t: 0,
          status: "Running",
          robot: { x: 1, y: 0, theta: 0, v: 1 },
          humans: [],
          plan: { points: [], status: "-" },
          goal: [19, 0],
          reference: [
            [0, 0],
            [20, 0],
          ],
        },
        [],
        1000,
        300,
      ),
    ).not.toThrow();
  });
});
