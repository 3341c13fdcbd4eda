import { describe, expect, it } from "vitest";

import { DARK_THRESHOLD, isStale, renderSpots } from "../src/spots.js";
import type { Reading } from "../src/types.js";

// Oracle: what the normalized channels read for a clean wheel angle.
// Malus's law per channel axis (H=0, V=90, D=45, A=-45), as the station
// normalizes them; the test derives these independently of the app code.
function cleanReading(thetaDeg: number): Reading {
  const sq = (axis: number) => {
    const c = Math.cos(((thetaDeg - axis) * Math.PI) / 180);
    return c * c;
  };
  return {
    p_h: sq(0),
    p_v: sq(90),
    p_d: sq(45),
    p_a: sq(-45),
    angle_deg: thetaDeg,
  };
}

describe("renderSpots", () => {
  it.each([
    [0, "V"],
    [45, "A"],
    [90, "H"],
    [-45, "D"],
  ])("darkens exactly the orthogonal spot at %d degrees", (theta, darkLabel) => {
    const spots = renderSpots(cleanReading(theta as number));
    const dark = spots.filter((s) => s.dark);
    expect(dark).toHaveLength(1);
    expect(dark[0].label).toBe(darkLabel);
  });

  it("keeps intensities proportional to the normalized values", () => {
    const spots = renderSpots(cleanReading(30));
    const byLabel = Object.fromEntries(spots.map((s) => [s.label, s.intensity]));
    expect(byLabel.H).toBeCloseTo(0.75, 10);
    expect(byLabel.V).toBeCloseTo(0.25, 10);
    expect(byLabel.D).toBeGreaterThan(byLabel.A);
  });

  it("clamps out-of-range values instead of propagating them", () => {
    const spots = renderSpots({
      p_h: -0.2, p_v: 1.4, p_d: 0.5, p_a: 0.5, angle_deg: 0,
    });
    expect(spots[0].intensity).toBe(0);
    expect(spots[0].dark).toBe(true);
    expect(spots[1].intensity).toBe(1);
  });

  it("uses the documented darkness threshold", () => {
    const base = cleanReading(10);
    const spots = renderSpots({ ...base, p_v: DARK_THRESHOLD - 1e-6 });
    expect(spots.find((s) => s.label === "V")!.dark).toBe(true);
    const bright = renderSpots({ ...base, p_v: DARK_THRESHOLD + 1e-6 });
    expect(bright.find((s) => s.label === "V")!.dark).toBe(false);
  });
});

describe("isStale", () => {
  it("marks a never-seen stream stale and trips after two seconds", () => {
    expect(isStale(null, 1000)).toBe(true);
    expect(isStale(1000, 2999)).toBe(false);
    expect(isStale(1000, 3001)).toBe(true);
  });
});
