// The four-spot intensity display: what the mesh screen shows, derived only
// from the gateway's normalized photoresistor values.

import type { Reading } from "./types.js";

export const DARK_THRESHOLD = 0.02;
export const STALE_AFTER_MS = 2000;

export type SpotLabel = "H" | "V" | "D" | "A";

export interface SpotView {
  label: SpotLabel;
  intensity: number; // [0, 1], proportional to the normalized reading
  dark: boolean;
}

export function renderSpots(reading: Reading): SpotView[] {
  const values: [SpotLabel, number][] = [
    ["H", reading.p_h],
    ["V", reading.p_v],
    ["D", reading.p_d],
    ["A", reading.p_a],
  ];
  return values.map(([label, p]) => {
    const clamped = Math.min(Math.max(p, 0), 1);
    return { label, intensity: clamped, dark: clamped < DARK_THRESHOLD };
  });
}

/** True when no frame has arrived for longer than the staleness window. */
export function isStale(
  lastFrameAt: number | null,
  now: number,
  timeoutMs: number = STALE_AFTER_MS,
): boolean {
  if (lastFrameAt === null) return true;
  return now - lastFrameAt > timeoutMs;
}
