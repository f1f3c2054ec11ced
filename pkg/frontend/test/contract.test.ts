// Contract tests against fixtures recorded from the live service: the view
// layer must echo service numbers exactly, disable input at termination, and
// download the service log byte-for-byte.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { decodePlanes } from "../src/protocol.js";
import {
  applyLog, applyStep, clickToAction, downloadContent, initialView,
} from "../src/session.js";

const here = dirname(fileURLToPath(import.meta.url));

function fixture(name: string) {
  return JSON.parse(
    readFileSync(join(here, "..", "fixtures", `${name}.json`), "utf-8"));
}

const quota = fixture("session_quota");
const cap = fixture("session_cap");

describe("plane decoding", () => {
  it("matches the recorder's per-channel pixel counts", () => {
    for (const f of [quota, cap]) {
      const planes = decodePlanes(f.create.obs);
      const half = 64 * 64;
      const counts = [0, 0];
      planes.forEach((bit, k) => { counts[k < half ? 0 : 1] += bit; });
      expect(counts).toEqual(f.create_plane_counts);
    }
  });
});

describe("scripted quota session", () => {
  it("replays clicks as the exact deltas the service saw", () => {
    let view = initialView(quota.create);
    quota.steps.forEach((reply: any, k: number) => {
      const click = quota.clicks[k];
      clickToAction(view, click[0], click[1]);  // must not throw while active
      view = applyStep(view, reply);
      // a legal absolute click lands exactly on the clicked hole
      expect(view.grid).toEqual(click);
    });
  });

  it("disables input exactly at the fifth hit", () => {
    let view = initialView(quota.create);
    expect(view.inputDisabled).toBe(false);
    quota.steps.forEach((reply: any, k: number) => {
      view = applyStep(view, reply);
      const last = k === quota.steps.length - 1;
      expect(view.inputDisabled).toBe(last);
      expect(view.hits).toBe(reply.hits);
      expect(view.steps).toBe(reply.steps);
    });
    expect(view.hits).toBe(view.hitQuota);
    expect(view.terminationReason).toBe("hit_quota");
    expect(view.needles.length).toBe(view.steps);
  });

  it("shows service metrics equal to the compare-CLI recomputation", () => {
    let view = initialView(quota.create);
    for (const reply of quota.steps) view = applyStep(view, reply);
    view = applyLog(view, JSON.parse(quota.log_raw), quota.log_jsonl);
    expect(view.metrics).not.toBeNull();
    expect(view.metrics!.hr_pct).toBe(quota.recomputed.hr_pct);
    expect(view.metrics!.ccl_mm).toBe(quota.recomputed.ccl_mm);
    expect(view.metrics!.ccl_max_mm).toBe(quota.recomputed.ccl_max_mm);
    expect(view.metrics!.na_mm2).toBe(quota.recomputed.na_mm2);
    expect(view.metrics!.needles_fired).toBe(quota.recomputed.needles_fired);
  });

  it("downloads the service-side JSONL log byte-for-byte", () => {
    let view = initialView(quota.create);
    for (const reply of quota.steps) view = applyStep(view, reply);
    view = applyLog(view, JSON.parse(quota.log_raw), quota.log_jsonl);
    expect(downloadContent(view)).toBe(quota.log_jsonl);
    // one JSON record per fired needle, same shape as agent logs
    const lines = quota.log_jsonl.trim().split("\n").map((l: string) => JSON.parse(l));
    expect(lines.length).toBe(view.steps);
  });
});

describe("scripted cap session", () => {
  it("disables input exactly at the fifteenth step", () => {
    let view = initialView(cap.create);
    cap.steps.forEach((reply: any, k: number) => {
      expect(view.inputDisabled).toBe(false);
      view = applyStep(view, reply);
      expect(view.inputDisabled).toBe(k === cap.steps.length - 1);
    });
    expect(view.steps).toBe(view.maxSteps);
    expect(view.hits).toBe(0);
    expect(view.terminationReason).toBe("max_steps");
  });

  it("keeps the log schema identical to agent logs", () => {
    const schema = JSON.parse(readFileSync(
      join(here, "..", "..", "src", "bioptx", "schemas",
           "episode_record.json"), "utf-8"));
    const required: string[] = schema.required;
    const allowed = new Set(Object.keys(schema.properties));
    for (const f of [cap, quota]) {
      for (const line of f.log_jsonl.trim().split("\n")) {
        const record = JSON.parse(line);
        for (const key of required) expect(record).toHaveProperty(key);
        for (const key of Object.keys(record)) {
          expect(allowed.has(key)).toBe(true);
        }
      }
    }
    expect(JSON.parse(cap.log_raw).records.length).toBe(15);
  });
});
