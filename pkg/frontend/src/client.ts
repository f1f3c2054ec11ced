// HTTP/WebSocket client for the session service.

import { SessionCreateReply, SessionLogReply, StepReply } from "./protocol.js";

export class ServiceClient {
  constructor(private base: string = "") {}

  async listCases(): Promise<string[]> {
    const r = await fetch(`${this.base}/cases`);
    if (!r.ok) throw new Error(`GET /cases -> ${r.status}`);
    return (await r.json()).cases;
  }

  async createSession(caseId: string, seed?: number,
                      role = "human"): Promise<SessionCreateReply> {
    const r = await fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ case: caseId, seed: seed ?? null, role }),
    });
    if (!r.ok) throw new Error(`POST /sessions -> ${r.status}`);
    return r.json();
  }

  async step(sessionId: string, di: number, dj: number): Promise<StepReply> {
    const r = await fetch(`${this.base}/sessions/${sessionId}/step`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ di, dj }),
    });
    if (r.status === 409) throw new Error("episode finished");
    if (!r.ok) throw new Error(`POST step -> ${r.status}`);
    return r.json();
  }

  /** The parsed log plus the canonical JSONL body (the download payload,
   * byte-identical to the service side and to agent logs). */
  async log(sessionId: string): Promise<{ log: SessionLogReply; jsonl: string }> {
    const r = await fetch(`${this.base}/sessions/${sessionId}/log`);
    if (!r.ok) throw new Error(`GET log -> ${r.status}`);
    const log = await r.json();
    const rl = await fetch(`${this.base}/sessions/${sessionId}/log.jsonl`);
    if (!rl.ok) throw new Error(`GET log.jsonl -> ${rl.status}`);
    return { log, jsonl: await rl.text() };
  }

  stream(sessionId: string, onStep: (reply: StepReply) => void): WebSocket {
    const url = this.base.replace(/^http/, "ws") || `ws://${location.host}`;
    const ws = new WebSocket(`${url}/sessions/${sessionId}/stream`);
    ws.onmessage = (ev) => {
      try {
        onStep(JSON.parse(ev.data));
      } catch (e) {
        console.error("bad stream payload", e);
      }
    };
    return ws;
  }
}
