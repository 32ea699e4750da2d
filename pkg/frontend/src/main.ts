/**
 * Operator console entry point: wires the connection, view state, canvas
 * renderer and inspector panel together. Rendering happens on animation
 * ticks; socket callbacks only mutate the view state.
 */

import { Connection } from "./connection.js";
import {
  eventLines,
  paramRows,
  pipelineStage,
  validQuery,
  weightRows,
} from "./panel.js";
import { Canvas2D, renderFrame } from "./render.js";
import { ViewState } from "./viewstate.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("ws") ?? `ws://${window.location.hostname || "127.0.0.1"}:8765`;

  const view = new ViewState();
  const connection = new Connection(url, view);
  connection.open();

  const canvas = byId<HTMLCanvasElement>("world");
  const ctx = canvas.getContext("2d") as unknown as Canvas2D;
  const statusEl = byId<HTMLElement>("status");
  const queryInput = byId<HTMLInputElement>("query");
  const queryButton = byId<HTMLButtonElement>("send-query");
  const sceneInput = byId<HTMLInputElement>("scene");
  const sceneButton = byId<HTMLButtonElement>("send-scene");
  const weightsBody = byId<HTMLElement>("weights");
  const paramsBody = byId<HTMLElement>("params");
  const eventsEl = byId<HTMLElement>("events");
  const provenanceEl = byId<HTMLElement>("provenance");
  const stageEl = byId<HTMLElement>("stage");

  byId<HTMLButtonElement>("pause").onclick = () =>
    connection.send({ type: "control", action: "pause" });
  byId<HTMLButtonElement>("resume").onclick = () =>
    connection.send({ type: "control", action: "resume" });
  byId<HTMLButtonElement>("reset").onclick = () =>
    connection.send({ type: "control", action: "reset" });

  function sendQuery(): void {
    const text = queryInput.value;
    if (!validQuery(text) || view.pipelineBusy) {
      return;
    }
    connection.send({ type: "query", text: text.trim() });
    queryInput.value = "";
  }
  queryButton.onclick = sendQuery;
  queryInput.onkeydown = (e) => {
    if (e.key === "Enter") {
      sendQuery();
    }
  };
  sceneButton.onclick = () => {
    const text = sceneInput.value;
    if (!validQuery(text)) {
      return;
    }
    connection.send({ type: "scene", text: text.trim() });
  };

  function redraw(): void {
    statusEl.textContent = view.connection;
    statusEl.className = `status-${view.connection}`;
    const busyStage = pipelineStage(view.events, view.pipelineBusy);
    queryInput.disabled = view.pipelineBusy;
    queryButton.disabled = view.pipelineBusy;
    stageEl.textContent = busyStage === null ? "" : `pipeline: ${busyStage}…`;

    if (view.scenario !== null && view.state !== null) {
      renderFrame(ctx, view.scenario, view.state, view.trail, canvas.width,
        canvas.height);
    }
    weightsBody.innerHTML = weightRows(view.spec)
      .map(
        (row) =>
          `<tr><td>${row.name}</td><td class="num">${row.weight}</td>` +
          `<td class="src">${row.source}</td></tr>`,
      )
      .join("");
    paramsBody.innerHTML = paramRows(view.spec)
      .map(
        (row) =>
          `<tr><td>${row.name}${row.tunable ? "" : " *"}</td>` +
          `<td class="num">${row.value}</td><td>${row.unit}</td></tr>`,
      )
      .join("");
    provenanceEl.textContent = view.spec?.provenance ?? "";
    eventsEl.textContent = eventLines(view.events).join("\n");
    requestAnimationFrame(redraw);
  }
  requestAnimationFrame(redraw);
}

window.addEventListener("load", main);
