/**
 * Canvas renderer for the 2-D world view.
 *
 * Meters map to pixels with one uniform scale derived from the scenario
 * bounds; the drawing covers corridor walls, the dashed reference path,
 * the goal, the robot disc with heading, humans, the planned trajectory
 * and the recent position trail.
 */

import { ScenarioInfo, StateFrame } from "./protocol.js";

export interface Transform {
  scale: number; // px per meter
  offsetX: number;
  offsetY: number;
}

export function worldTransform(
  scenario: ScenarioInfo,
  width: number,
  height: number,
  margin = 20,
): Transform {
  const { xmin, xmax, ymin, ymax } = scenario.bounds;
  const scale = Math.min(
    (width - 2 * margin) / (xmax - xmin),
    (height - 2 * margin) / (ymax - ymin),
  );
  return {
    scale,
    offsetX: margin - xmin * scale,
    offsetY: margin + ymax * scale, // canvas y grows downward
  };
}

export function toCanvas(t: Transform, x: number, y: number): [number, number] {
  return [t.offsetX + x * t.scale, t.offsetY - y * t.scale];
}

/** Minimal 2-D context surface used by the renderer (test-friendly). */
export interface Canvas2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  setLineDash(segments: number[]): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
}

function polyline(
  ctx: Canvas2D,
  t: Transform,
  points: Array<[number, number]>,
): void {
  if (points.length === 0) {
    return;
  }
  ctx.beginPath();
  const [x0, y0] = toCanvas(t, points[0][0], points[0][1]);
  ctx.moveTo(x0, y0);
  for (const [x, y] of points.slice(1)) {
    const [cx, cy] = toCanvas(t, x, y);
    ctx.lineTo(cx, cy);
  }
  ctx.stroke();
}

function disc(
  ctx: Canvas2D,
  t: Transform,
  x: number,
  y: number,
  radius: number,
  color: string,
): void {
  const [cx, cy] = toCanvas(t, x, y);
  ctx.beginPath();
  ctx.fillStyle = color;
  ctx.arc(cx, cy, radius * t.scale, 0, 2 * Math.PI);
  ctx.fill();
}

export function renderFrame(
  ctx: Canvas2D,
  scenario: ScenarioInfo,
  state: StateFrame,
  trail: Array<[number, number]>,
  width: number,
  height: number,
): void {
  const t = worldTransform(scenario, width, height);
  ctx.clearRect(0, 0, width, height);
  ctx.setLineDash([]);

  // corridor walls: draw the boundary line of each half-space
  ctx.strokeStyle = "#222";
  ctx.lineWidth = 3;
  for (const wall of scenario.corridors) {
    const [nx, ny] = wall.normal;
    const b = wall.offset;
    // boundary: n.p = b; draw the segment within a wide parameter range
    const px = nx * b;
    const py = ny * b;
    const dirx = -ny;
    const diry = nx;
    const span = 100;
    polyline(ctx, t, [
      [px - dirx * span, py - diry * span],
      [px + dirx * span, py + diry * span],
    ]);
  }

  // reference path (dashed)
  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1;
  ctx.setLineDash([6, 6]);
  polyline(ctx, t, state.reference);
  ctx.setLineDash([]);

  // trail
  ctx.strokeStyle = "#9ecbff";
  ctx.lineWidth = 2;
  polyline(ctx, t, trail);

  // planned trajectory
  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 2;
  polyline(ctx, t, state.plan.points);

  // goal
  const [gx, gy] = toCanvas(t, state.goal[0], state.goal[1]);
  ctx.strokeStyle = "#2e7d32";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(gx - 6, gy - 6);
  ctx.lineTo(gx + 6, gy + 6);
  ctx.moveTo(gx - 6, gy + 6);
  ctx.lineTo(gx + 6, gy - 6);
  ctx.stroke();

  // humans
  for (const human of state.humans) {
    disc(ctx, t, human.x, human.y, human.radius, "#e57373");
  }

  // robot disc + heading tick
  disc(ctx, t, state.robot.x, state.robot.y, scenario.robot_radius, "#1e88e5");
  const hx = state.robot.x + Math.cos(state.robot.theta) * scenario.robot_radius * 1.8;
  const hy = state.robot.y + Math.sin(state.robot.theta) * scenario.robot_radius * 1.8;
  ctx.strokeStyle = "#0d47a1";
  ctx.lineWidth = 2;
  polyline(ctx, t, [
    [state.robot.x, state.robot.y],
    [hx, hy],
  ]);
}
