// Kiosk view state: a pure reducer over gateway events and user actions.
// Every number on screen originates from gateway payloads; this module only
// routes them.  All events funnel through one queue (see controller), so
// there is no concurrent mutation to reason about.

import { isStale } from "./spots.js";
import type { CalibrationStatus, Reading, ResultPayload } from "./types.js";

export type Phase = "idle" | "running" | "result" | "fallback";

export interface KioskState {
  reading: Reading | null;
  lastFrameAt: number | null;
  stale: boolean;
  stagedA: number | null;
  stagedAPrime: number | null;
  phase: Phase;
  progressStep: number;
  progressOf: number;
  lastResult: ResultPayload | null;
  calibration: CalibrationStatus | null;
  completedRuns: number;
  notice: string | null;
}

export type KioskAction =
  | { kind: "frame"; reading: Reading | null; calibration?: CalibrationStatus; at: number }
  | { kind: "tick"; at: number }
  | { kind: "stage" }
  | { kind: "clearStaged" }
  | { kind: "submitted" }
  | { kind: "submitFailed"; reason: "busy" | "network" }
  | { kind: "progress"; step: number; of: number }
  | { kind: "result"; result: ResultPayload }
  | { kind: "error"; code: string; detail?: string }
  | { kind: "calibration"; status: CalibrationStatus };

export function initialState(): KioskState {
  return {
    reading: null,
    lastFrameAt: null,
    stale: true,
    stagedA: null,
    stagedAPrime: null,
    phase: "idle",
    progressStep: 0,
    progressOf: 16,
    lastResult: null,
    calibration: null,
    completedRuns: 0,
    notice: null,
  };
}

/** The run action is enabled only with both angles staged in a quiet phase. */
export function canRun(state: KioskState): boolean {
  return (
    state.stagedA !== null &&
    state.stagedAPrime !== null &&
    state.phase === "idle"
  );
}

/** Angle-difference hint, shown while staging. */
export function stagedDelta(state: KioskState): number | null {
  if (state.stagedA === null || state.stagedAPrime === null) return null;
  let d = (state.stagedAPrime - state.stagedA) % 180;
  if (d > 90) d -= 180;
  if (d <= -90) d += 180;
  return d;
}

/** The reference curve is revealed only after the first completed run. */
export function showReferenceCurve(state: KioskState): boolean {
  return state.completedRuns > 0;
}

export function reduce(state: KioskState, action: KioskAction): KioskState {
  switch (action.kind) {
    case "frame": {
      const next: KioskState = {
        ...state,
        reading: action.reading ?? state.reading,
        lastFrameAt: action.at,
        stale: false,
      };
      if (action.calibration) next.calibration = action.calibration;
      return next;
    }
    case "tick":
      return { ...state, stale: isStale(state.lastFrameAt, action.at) };
    case "stage": {
      if (state.phase === "running") return state; // actions locked mid-run
      if (state.reading === null) return { ...state, notice: "no live angle yet" };
      const angle = state.reading.angle_deg;
      const next: KioskState = { ...state, notice: null };
      if (state.phase === "result" || state.phase === "fallback") {
        next.phase = "idle";
      }
      if (next.stagedA === null) next.stagedA = angle;
      else if (next.stagedAPrime === null) next.stagedAPrime = angle;
      else next.stagedAPrime = angle; // keep refining the second choice
      return next;
    }
    case "clearStaged":
      if (state.phase === "running") return state;
      return { ...state, stagedA: null, stagedAPrime: null, notice: null };
    case "submitted":
      return { ...state, phase: "running", progressStep: 0, notice: null };
    case "submitFailed":
      if (action.reason === "busy") {
        return {
          ...state,
          phase: "idle",
          notice: "another run is in progress, try again in a moment",
        };
      }
      return {
        ...state,
        phase: "fallback",
        notice: "live network unreachable, showing stored results when available",
      };
    case "progress":
      return {
        ...state,
        phase: "running",
        progressStep: action.step,
        progressOf: action.of,
      };
    case "result":
      return {
        ...state,
        phase: "result",
        lastResult: action.result,
        progressStep: action.result.live ? state.progressOf : state.progressStep,
        completedRuns: state.completedRuns + 1,
        stagedA: null,
        stagedAPrime: null,
      };
    case "error":
      return {
        ...state,
        phase: "idle",
        notice:
          action.code === "BUSY"
            ? "another run is in progress, try again in a moment"
            : `run failed (${action.code}), please try again`,
      };
    case "calibration":
      return { ...state, calibration: action.status };
    default:
      return state;
  }
}

export interface ResultBadge {
  label: "live measurement" | "replayed result";
  live: boolean;
}

export function resultBadge(result: ResultPayload): ResultBadge {
  return result.live
    ? { label: "live measurement", live: true }
    : { label: "replayed result", live: false };
}

/** Banner text for a finished run: violation or a try-again hint. */
export function resultBanner(result: ResultPayload): string {
  if (result.s_value > 2) {
    return "entanglement verified: the classical limit of 2 is beaten";
  }
  return "no violation this time, try a different angle difference";
}
