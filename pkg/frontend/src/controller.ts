// Glue between the gateway client and the view state: one event queue, no
// physics, no DOM.  The page layer subscribes to state changes and renders.

import { BusyError, GatewayClient } from "./gateway.js";
import {
  canRun,
  initialState,
  reduce,
  type KioskAction,
  type KioskState,
} from "./state.js";
import type { GatewayEvent } from "./types.js";

export class KioskController {
  state: KioskState = initialState();
  private listeners: ((state: KioskState) => void)[] = [];
  private closeEvents: (() => void) | null = null;
  runsRequested = 0;

  constructor(
    private client: GatewayClient,
    private now: () => number = () => Date.now(),
  ) {}

  onChange(listener: (state: KioskState) => void): void {
    this.listeners.push(listener);
  }

  dispatch(action: KioskAction): void {
    this.state = reduce(this.state, action);
    for (const listener of this.listeners) listener(this.state);
  }

  connect(): void {
    this.closeEvents = this.client.openEvents(
      (event) => this.onGatewayEvent(event),
      () => this.dispatch({ kind: "submitFailed", reason: "network" }),
    );
  }

  disconnect(): void {
    if (this.closeEvents) this.closeEvents();
    this.closeEvents = null;
  }

  onGatewayEvent(event: GatewayEvent): void {
    switch (event.type) {
      case "FRAME":
        this.dispatch({
          kind: "frame",
          reading: event.reading ?? null,
          calibration: event.calibration,
          at: this.now(),
        });
        break;
      case "PROGRESS":
        this.dispatch({ kind: "progress", step: event.step, of: event.of });
        break;
      case "CHSH_RESULT":
        this.dispatch({ kind: "result", result: event.result });
        break;
      case "ERROR":
        this.dispatch({ kind: "error", code: event.code, detail: event.detail });
        break;
      case "CALIBRATE":
        this.dispatch({
          kind: "calibration",
          status: {
            complete: event.complete,
            calibrating: event.calibrating,
            coverage_deg: event.coverage_deg,
          },
        });
        break;
    }
  }

  tick(): void {
    this.dispatch({ kind: "tick", at: this.now() });
  }

  stageCurrentAngle(): void {
    this.dispatch({ kind: "stage" });
  }

  clearStaged(): void {
    this.dispatch({ kind: "clearStaged" });
  }

  /** Submit the staged pair; exactly one run request per invocation. */
  async submitRun(): Promise<void> {
    if (!canRun(this.state)) return;
    const a = this.state.stagedA!;
    const aPrime = this.state.stagedAPrime!;
    this.dispatch({ kind: "submitted" });
    this.runsRequested += 1;
    try {
      await this.client.run(a, aPrime);
    } catch (err) {
      this.dispatch({
        kind: "submitFailed",
        reason: err instanceof BusyError ? "busy" : "network",
      });
    }
  }

  async startCalibration(): Promise<void> {
    await this.client.calibrate("reset");
  }

  /** Finish the sweep; resolves false when coverage is still insufficient. */
  async finishCalibration(): Promise<boolean> {
    try {
      await this.client.calibrate("done");
      return true;
    } catch (err) {
      if (err instanceof BusyError) return false; // 409: keep rotating
      throw err;
    }
  }
}
