"""Drive the environment over the newline-delimited JSON protocol, exactly as
an external trainer would (here in-process, over string pipes)."""

import json

from bioptx import AnatomySpec, generate_synthetic
from bioptx.env import EnvConfig
from bioptx.harness.bridge import PROTOCOL, run_bridge


class Pipe:
    def __init__(self):
        self.lines = []

    def write(self, text):
        self.lines.append(text)

    def flush(self):
        pass


spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
vol = generate_synthetic(spec)

requests = [
    {"cmd": "handshake", "protocol": PROTOCOL},
    {"cmd": "reset", "seed": 7},
    {"cmd": "step", "di": 1.0, "dj": -2.0},
    {"cmd": "step", "di": 0.0, "dj": 0.0},
    {"cmd": "log"},
    {"cmd": "close"},
]
out = Pipe()
run_bridge(vol, EnvConfig(seed=0), "demo",
           iter(json.dumps(r) + "\n" for r in requests), out)

for req, raw in zip(requests, out.lines):
    reply = json.loads(raw)
    reply.pop("obs", None)                 # planes are long; elide for print
    if "info" in reply:
        reply["info"] = {k: reply["info"][k] for k in ("hit", "ccl_mm", "dist_mm")}
    print(f"-> {json.dumps(req)}")
    print(f"<- {json.dumps(reply, sort_keys=True)[:120]}")
