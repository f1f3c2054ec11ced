// Wire types for the bioptx session service. The client renders what the
// service sends and never recomputes hits, core lengths, or rewards.

export interface WireObservation {
  shape: [number, number, number];   // [2, rows(depth), cols(height)]
  plane_b64: string;                 // bit-packed planes, row-major
  grid: [number, number];
  grid_norm: [number, number];
}

export interface NeedleWire {
  i: number;
  j: number;
  x_mm: number;
  y_mm: number;
  depth_mm: number;
  length_mm: number;
  hit: boolean;
  ccl_mm: number;
  step: number;
}

export interface StepInfo {
  hit: boolean;
  outside_prostate: boolean;
  ccl_mm: number;
  dist_mm: number;
  termination_reason: string | null;
  needle: NeedleWire;
}

export interface StepReply {
  t: number;
  obs: WireObservation;
  reward: number;
  terminated: boolean;
  info: StepInfo;
  steps: number;
  hits: number;
}

export interface SessionCreateReply {
  id: string;
  case: string;
  role: string;
  obs: WireObservation;
  grid: [number, number];
  steps: number;
  hits: number;
  max_steps: number;
  hit_quota: number;
  terminated: boolean;
}

export interface ServiceMetrics {
  hr_pct: number;
  ccl_mm: number;
  ccl_max_mm: number;
  significant: boolean;
  na_mm2: number;
  needles_fired: number;
}

export interface SessionLogReply {
  case: string;
  role: string;
  seed: number | null;
  start: [number, number];
  noise_offset_mm: [number, number, number];
  records: Record<string, unknown>[];
  total_reward: number;
  terminated: boolean;
  metrics: ServiceMetrics | null;
}

/** Unpack the base64 bit-planes into a flat 0/1 array of length 2*rows*cols. */
export function decodePlanes(obs: WireObservation): Uint8Array {
  const raw = atob(obs.plane_b64);
  const n = obs.shape[0] * obs.shape[1] * obs.shape[2];
  const out = new Uint8Array(n);
  for (let bit = 0; bit < n; bit++) {
    const byte = raw.charCodeAt(bit >> 3);
    out[bit] = (byte >> (7 - (bit & 7))) & 1;
  }
  return out;
}

/** Pixel lookup in a decoded plane stack: channel 0 prostate, 1 lesion. */
export function planePixel(planes: Uint8Array, shape: [number, number, number],
                           channel: number, u: number, v: number): number {
  return planes[(channel * shape[1] + u) * shape[2] + v];
}
