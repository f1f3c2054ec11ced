// Session view state: a pure reducer over service replies. Every number on
// screen is echoed from the service; the only client-side arithmetic is the
// absolute-click -> relative-delta conversion the action space requires.

import {
  NeedleWire, SessionCreateReply, SessionLogReply, StepReply, WireObservation,
} from "./protocol.js";

export interface SessionView {
  id: string;
  caseId: string;
  grid: [number, number];
  obs: WireObservation;
  needles: NeedleWire[];
  steps: number;
  hits: number;
  maxSteps: number;
  hitQuota: number;
  terminated: boolean;
  terminationReason: string | null;
  lastReward: number | null;
  totalReward: number;
  inputDisabled: boolean;
  metrics: SessionLogReply["metrics"];
  logJsonl: string | null;      // canonical JSONL; downloads byte-for-byte
}

export function initialView(reply: SessionCreateReply): SessionView {
  return {
    id: reply.id,
    caseId: reply.case,
    grid: reply.grid,
    obs: reply.obs,
    needles: [],
    steps: reply.steps,
    hits: reply.hits,
    maxSteps: reply.max_steps,
    hitQuota: reply.hit_quota,
    terminated: reply.terminated,
    terminationReason: null,
    lastReward: null,
    totalReward: 0,
    inputDisabled: reply.terminated,
    metrics: null,
    logJsonl: null,
  };
}

export function applyStep(view: SessionView, reply: StepReply): SessionView {
  return {
    ...view,
    grid: reply.obs.grid,
    obs: reply.obs,
    needles: [...view.needles, reply.info.needle],
    steps: reply.steps,
    hits: reply.hits,
    terminated: reply.terminated,
    terminationReason: reply.info.termination_reason,
    lastReward: reply.reward,
    totalReward: view.totalReward + reply.reward,
    inputDisabled: reply.terminated,
  };
}

export function applyLog(view: SessionView, log: SessionLogReply,
                         jsonl: string): SessionView {
  return { ...view, metrics: log.metrics, logJsonl: jsonl };
}

/** Absolute hole click -> the relative action the MDP speaks. */
export function clickToAction(view: SessionView, i: number, j: number) {
  return { di: i - view.grid[0], dj: j - view.grid[1] };
}

/** The downloadable episode log: the service JSONL body, untouched. */
export function downloadContent(view: SessionView): string {
  if (view.logJsonl === null) {
    throw new Error("episode log not fetched yet");
  }
  return view.logJsonl;
}
