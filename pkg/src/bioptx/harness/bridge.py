"""Newline-delimited JSON bridge: drives one environment over any line
transport (stdio by default) so external trainers can speak reset/step with
semantics identical to the in-process API.
"""

from __future__ import annotations

import json

from ..anatomy import LabelVolume
from ..env import BiopsyEnv, EnvConfig
from .service import encode_observation, step_payload

PROTOCOL = "bioptx/1"


def _reply(writer, payload: dict):
    writer.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
    writer.flush()


def run_bridge(vol: LabelVolume, cfg: EnvConfig, case_id: str, reader, writer):
    """Serve requests until EOF or a close command. Malformed messages get an
    error reply and the session is preserved."""
    env = BiopsyEnv(vol, cfg, case_id)
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            cmd = msg["cmd"]
        except (ValueError, KeyError, TypeError):
            _reply(writer, {"ok": False, "error": "malformed message"})
            continue
        try:
            if cmd == "handshake":
                proto = msg.get("protocol", PROTOCOL)
                if proto != PROTOCOL:
                    _reply(writer, {"ok": False,
                                    "error": f"unsupported protocol {proto!r}",
                                    "protocol": PROTOCOL})
                else:
                    _reply(writer, {"ok": True, "protocol": PROTOCOL,
                                    "case": case_id})
            elif cmd == "reset":
                obs = env.reset(seed=msg.get("seed"))
                _reply(writer, {"ok": True, "obs": encode_observation(obs),
                                "grid": [obs.grid[0], obs.grid[1]]})
            elif cmd == "step":
                result = env.step((float(msg["di"]), float(msg["dj"])))
                payload = step_payload(env.steps_taken - 1, result)
                _reply(writer, {"ok": True, **payload})
            elif cmd == "log":
                _reply(writer, {"ok": True, "records": env.log.records()})
            elif cmd == "close":
                _reply(writer, {"ok": True})
                return
            else:
                _reply(writer, {"ok": False, "error": f"unknown cmd {cmd!r}"})
        except RuntimeError as e:          # e.g. step after termination
            _reply(writer, {"ok": False, "error": str(e)})
        except (KeyError, TypeError, ValueError) as e:
            _reply(writer, {"ok": False, "error": f"bad request: {e}"})
