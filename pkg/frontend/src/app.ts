// Operator console wiring: pick a case, click holes to steer and fire, watch
// the live plane and needle map, review service-computed metrics at the end.

import { ServiceClient } from "./client.js";
import { StepReply } from "./protocol.js";
import {
  SessionView, applyLog, applyStep, clickToAction, downloadContent,
  initialView,
} from "./session.js";
import { drawGrid, drawPlane, gridHitTest } from "./render.js";

const client = new ServiceClient("");
let view: SessionView | null = null;
let socket: WebSocket | null = null;

const el = (id: string) => document.getElementById(id)!;
const planeCanvas = () => el("plane") as HTMLCanvasElement;
const gridCanvas = () => el("grid") as HTMLCanvasElement;

function render() {
  if (!view) return;
  drawPlane(planeCanvas(), view.obs);
  drawGrid(gridCanvas(), view.grid, view.needles, view.inputDisabled);
  el("status").textContent =
    `hole (${view.grid[0]}, ${view.grid[1]})  ·  needles ${view.steps}/${view.maxSteps}` +
    `  ·  hits ${view.hits}/${view.hitQuota}` +
    (view.lastReward === null ? "" : `  ·  last reward ${view.lastReward}`);
  el("banner").textContent = view.terminated
    ? `episode over (${view.terminationReason ?? "terminated"})`
    : "";
  const m = view.metrics;
  el("summary").textContent = m
    ? `HR ${m.hr_pct.toFixed(1)}%  ·  CCL ${m.ccl_mm.toFixed(2)}mm` +
      ` (max ${m.ccl_max_mm.toFixed(2)}${m.significant ? ", ≥6mm" : ""})` +
      `  ·  NA ${m.na_mm2.toFixed(2)}mm²  ·  ${m.needles_fired} needles`
    : "";
  (el("download") as HTMLButtonElement).disabled = !view.logJsonl;
}

async function finishEpisode() {
  if (!view) return;
  const { log, jsonl } = await client.log(view.id);
  view = applyLog(view, log, jsonl);
  render();
}

function onStream(reply: StepReply) {
  // the stream is the sole mutation source once a session is live
  if (!view || reply.t < view.steps) return;
  view = applyStep(view, reply);
  render();
  if (view.terminated) void finishEpisode();
}

async function startSession() {
  try {
    const caseId = (el("case") as HTMLSelectElement).value;
    const seedText = (el("seed") as HTMLInputElement).value;
    const created = await client.createSession(
      caseId, seedText ? Number(seedText) : undefined);
    view = initialView(created);
    socket?.close();
    socket = client.stream(created.id, onStream);
    el("error").textContent = "";
    render();
  } catch (e) {
    el("error").textContent = `service error: ${e}. retry when it is back.`;
  }
}

async function onGridClick(ev: MouseEvent) {
  if (!view || view.inputDisabled) return;
  const hole = gridHitTest(gridCanvas(), ev);
  if (!hole) return;
  const { di, dj } = clickToAction(view, hole[0], hole[1]);
  try {
    await client.step(view.id, di, dj);   // result arrives via the stream
  } catch (e) {
    el("error").textContent = String(e);
  }
}

function onDownload() {
  if (!view?.logJsonl) return;
  const blob = new Blob([downloadContent(view)], { type: "application/jsonl" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${view.caseId}_${view.id}.jsonl`;
  a.click();
  URL.revokeObjectURL(a.href);
}

async function init() {
  const select = el("case") as HTMLSelectElement;
  try {
    for (const c of await client.listCases()) {
      const opt = document.createElement("option");
      opt.value = c;
      opt.textContent = c;
      select.appendChild(opt);
    }
  } catch (e) {
    el("error").textContent = `service unreachable: ${e}`;
  }
  el("start").addEventListener("click", () => void startSession());
  gridCanvas().addEventListener("click", (ev) => void onGridClick(ev));
  el("download").addEventListener("click", onDownload);
}

document.addEventListener("DOMContentLoaded", () => void init());
