// Gateway HTTP client: JSON endpoints plus the server-sent event stream.
// The stream is parsed from a plain fetch body so the same code runs in the
// kiosk browser and under node for tests.

import type {
  GatewayEvent,
  ReferenceCurve,
  StatePayload,
} from "./types.js";

export class BusyError extends Error {
  constructor() {
    super("gateway busy");
  }
}

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new Error(`${path} -> HTTP ${resp.status}`);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (resp.status === 409) throw new BusyError();
    if (!resp.ok) throw new Error(`${path} -> HTTP ${resp.status}`);
    return (await resp.json()) as T;
  }

  state(): Promise<StatePayload> {
    return this.getJson<StatePayload>("/state");
  }

  referenceCurve(): Promise<ReferenceCurve> {
    return this.getJson<ReferenceCurve>("/reference");
  }

  setWheel(angleDeg: number): Promise<{ wheel_angle_deg: number }> {
    return this.postJson("/wheel", { angle_deg: angleDeg });
  }

  /** Ask for one run; resolves on acceptance, rejects with BusyError on 409. */
  run(a: number, aPrime: number, integrationS?: number): Promise<{ accepted: boolean }> {
    const body: Record<string, number> = { a, a_prime: aPrime };
    if (integrationS !== undefined) body.integration_s = integrationS;
    return this.postJson("/run", body);
  }

  calibrate(action: "reset" | "done"): Promise<Record<string, unknown>> {
    return this.postJson("/calibrate", { action });
  }

  /**
   * Open the event stream.  Returns a closer; the stream stops on close or
   * network failure, after which onDown fires once.
   */
  openEvents(
    onEvent: (event: GatewayEvent) => void,
    onDown: (reason: string) => void,
  ): () => void {
    const controller = new AbortController();
    let closed = false;
    const finish = (reason: string) => {
      if (!closed) {
        closed = true;
        onDown(reason);
      }
    };
    (async () => {
      try {
        const resp = await this.fetchImpl(`${this.baseUrl}/events`, {
          signal: controller.signal,
          headers: { Accept: "text/event-stream" },
        });
        if (!resp.ok || resp.body === null) {
          finish(`HTTP ${resp.status}`);
          return;
        }
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { value, done } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let split;
          while ((split = buffer.indexOf("\n\n")) >= 0) {
            const block = buffer.slice(0, split);
            buffer = buffer.slice(split + 2);
            for (const line of block.split("\n")) {
              if (line.startsWith("data: ")) {
                try {
                  onEvent(JSON.parse(line.slice(6)) as GatewayEvent);
                } catch {
                  // tolerate malformed keep-alives
                }
              }
            }
          }
        }
        finish("stream ended");
      } catch (err) {
        finish(String(err));
      }
    })();
    return () => {
      closed = true;
      controller.abort();
    };
  }
}
