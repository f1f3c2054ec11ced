"""Record service fixtures for the operator-UI contract tests.

Each fixture drives a real service session with a fixed case, seed, and
absolute-hole click sequence (converted to relative deltas exactly like the
UI does), then stores every reply, the raw /log body, and the metrics
recomputed from the downloaded records through the cohort-ingestion path —
the same recomputation `bioptx compare` consumes.

Run from the repository root:  python3 frontend/fixtures/generate.py
"""

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from bioptx.anatomy import AnatomySpec, generate_synthetic
from bioptx.env import EnvConfig
from bioptx.harness.cohort import metrics_from_records
from bioptx.harness.service import create_app

HERE = Path(__file__).parent


def record(client, case, seed, clicks, name):
    created = client.post("/sessions",
                          json={"case": case, "seed": seed, "role": "human"})
    body = created.json()
    sid = body["id"]
    grid = tuple(body["grid"])
    steps = []
    for hole in clicks:
        di, dj = hole[0] - grid[0], hole[1] - grid[1]   # absolute click -> delta
        r = client.post(f"/sessions/{sid}/step", json={"di": di, "dj": dj})
        if r.status_code == 409:
            steps.append({"status": 409})
            break
        reply = r.json()
        steps.append(reply)
        grid = tuple(reply["obs"]["grid"])
        if reply["terminated"]:
            break
    log_response = client.get(f"/sessions/{sid}/log")
    raw_log = log_response.text
    log = log_response.json()
    log_jsonl = client.get(f"/sessions/{sid}/log.jsonl").text
    recomputed = metrics_from_records(log["records"])
    # decoded pixel counts pin the bit-packing across languages
    packed = np.frombuffer(
        __import__("base64").b64decode(body["obs"]["plane_b64"]), dtype=np.uint8)
    planes = np.unpackbits(packed)[:2 * 64 * 64].reshape(2, 64, 64)
    fixture = {
        "case": case,
        "seed": seed,
        "clicks": clicks,
        "create": body,
        "create_plane_counts": [int(planes[0].sum()), int(planes[1].sum())],
        "steps": steps,
        "log_raw": raw_log,
        "log_jsonl": log_jsonl,
        "recomputed": {
            "hr_pct": recomputed.hr_pct,
            "ccl_mm": recomputed.ccl_mm,
            "ccl_max_mm": recomputed.ccl_max_mm,
            "na_mm2": recomputed.na_mm2,
            "needles_fired": recomputed.needles_fired,
        },
    }
    out = HERE / f"{name}.json"
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True))
    print(f"wrote {out} ({len(steps)} steps, "
          f"terminated={log['terminated']}, HR={recomputed.hr_pct:.1f}%)")


def main():
    cases = {
        # big central target: sitting on the center hole hits every time
        "easy": generate_synthetic(AnatomySpec(
            lesion_semiaxes_mm=(18.0, 14.0, 16.0),
            lesion_center_mm=(0.0, 25.0, 45.0))),
        # small off-hole target: a corner-camping operator never hits
        "hard": generate_synthetic(AnatomySpec(
            lesion_volume_cc=0.2, lesion_center_mm=(6.5, 27.5, 45.0))),
    }
    client = TestClient(create_app(cases, EnvConfig(noise_sd_mm=0.0,
                                                    depth_noise_sd_mm=0.0)))
    # five hits end the episode early (click once per hole around the center)
    record(client, "easy", 41,
           [[6, 5], [7, 5], [6, 6], [5, 5], [6, 4], [6, 5], [6, 5]],
           "session_quota")
    # fifteen misses exhaust the step cap; extra clicks must meet a 409
    record(client, "hard", 42, [[0, 12], [12, 12]] * 9, "session_cap")


if __name__ == "__main__":
    main()
