// Canvas rendering: the observed plane (gland outline + lesion fill) and the
// 13x13 template grid with fired-needle markers.

import { WireObservation, decodePlanes, planePixel } from "./protocol.js";
import { NeedleWire } from "./protocol.js";

const GRID_N = 13;

export function drawPlane(canvas: HTMLCanvasElement, obs: WireObservation) {
  const ctx = canvas.getContext("2d")!;
  const [, nu, nv] = obs.shape;
  const planes = decodePlanes(obs);
  const px = Math.floor(Math.min(canvas.width / nu, canvas.height / nv));
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  // prostate channel as outline: boundary pixels only
  for (let u = 0; u < nu; u++) {
    for (let v = 0; v < nv; v++) {
      if (!planePixel(planes, obs.shape, 0, u, v)) continue;
      const edge =
        u === 0 || v === 0 || u === nu - 1 || v === nv - 1 ||
        !planePixel(planes, obs.shape, 0, u - 1, v) ||
        !planePixel(planes, obs.shape, 0, u + 1, v) ||
        !planePixel(planes, obs.shape, 0, u, v - 1) ||
        !planePixel(planes, obs.shape, 0, u, v + 1);
      if (edge) {
        ctx.fillStyle = "#3f7f4f";
        // u = depth (x axis of the canvas), v = height (drawn upward)
        ctx.fillRect(u * px, canvas.height - (v + 1) * px, px, px);
      }
    }
  }
  // lesion channel as filled overlay
  ctx.fillStyle = "#d8453c";
  for (let u = 0; u < nu; u++) {
    for (let v = 0; v < nv; v++) {
      if (planePixel(planes, obs.shape, 1, u, v)) {
        ctx.fillRect(u * px, canvas.height - (v + 1) * px, px, px);
      }
    }
  }
}

export interface GridCallbacks {
  onHole: (i: number, j: number) => void;
}

export function drawGrid(canvas: HTMLCanvasElement, current: [number, number],
                         needles: NeedleWire[], disabled: boolean) {
  const ctx = canvas.getContext("2d")!;
  const cell = Math.floor(Math.min(canvas.width, canvas.height) / (GRID_N + 1));
  const pad = cell;
  ctx.fillStyle = disabled ? "#1b1f26" : "#141920";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  for (let i = 0; i < GRID_N; i++) {
    for (let j = 0; j < GRID_N; j++) {
      const { x, y } = holeCenter(i, j, cell, pad, canvas.height);
      ctx.beginPath();
      ctx.arc(x, y, Math.max(2, cell * 0.14), 0, 2 * Math.PI);
      ctx.fillStyle = "#39414d";
      ctx.fill();
    }
  }
  // fired needles, fading from old to new; red = hit, grey = miss
  needles.forEach((n, k) => {
    const { x, y } = holeCenter(n.i, n.j, cell, pad, canvas.height);
    const alpha = 0.45 + (0.55 * (k + 1)) / needles.length;
    ctx.beginPath();
    ctx.arc(x, y, cell * 0.32, 0, 2 * Math.PI);
    ctx.fillStyle = n.hit ? `rgba(216,69,60,${alpha})` : `rgba(150,150,150,${alpha})`;
    ctx.fill();
  });
  const { x, y } = holeCenter(current[0], current[1], cell, pad, canvas.height);
  ctx.beginPath();
  ctx.arc(x, y, cell * 0.42, 0, 2 * Math.PI);
  ctx.strokeStyle = "#e8c547";
  ctx.lineWidth = 2;
  ctx.stroke();
}

function holeCenter(i: number, j: number, cell: number, pad: number,
                    height: number) {
  // column i left-to-right, row j drawn bottom-up like world y
  return { x: pad + i * cell, y: height - (pad + j * cell) };
}

export function gridHitTest(canvas: HTMLCanvasElement, ev: MouseEvent):
    [number, number] | null {
  const rect = canvas.getBoundingClientRect();
  const cx = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const cy = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  const cell = Math.floor(Math.min(canvas.width, canvas.height) / (GRID_N + 1));
  const pad = cell;
  const i = Math.round((cx - pad) / cell);
  const j = Math.round((canvas.height - cy - pad) / cell);
  if (i < 0 || i >= GRID_N || j < 0 || j >= GRID_N) return null;
  return [i, j];
}
