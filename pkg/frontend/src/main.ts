// Kiosk page wiring: renders the controller state and forwards touches.

import { GatewayClient } from "./gateway.js";
import { KioskController } from "./controller.js";
import { canRun, resultBadge, resultBanner, showReferenceCurve, stagedDelta } from "./state.js";
import { renderSpots } from "./spots.js";
import type { KioskState } from "./state.js";

const gateway = new GatewayClient("");
const controller = new KioskController(gateway);

const el = (id: string) => document.getElementById(id)!;

function fmtAngle(angle: number | null): string {
  return angle === null ? "--" : `${angle.toFixed(1)} deg`;
}

function buildProgressTicks(): void {
  const bar = el("progress");
  bar.innerHTML = "";
  for (let i = 0; i < 16; i++) {
    const tick = document.createElement("div");
    tick.className = "tick";
    bar.appendChild(tick);
  }
}

async function drawReferenceCurve(): Promise<void> {
  const svg = el("curve");
  const { rows } = await gateway.referenceCurve();
  const positive = rows.filter(([delta]) => delta >= 0);
  const points = positive
    .map(([delta, s]) => `${(delta / 90) * 300},${120 - (s / 3) * 110}`)
    .join(" ");
  svg.innerHTML =
    `<polyline points="${points}" fill="none" stroke="#7fd4ff" stroke-width="2"/>` +
    `<line x1="0" y1="${120 - (2 / 3) * 110}" x2="300" y2="${120 - (2 / 3) * 110}"` +
    ` stroke="#f2b84b" stroke-dasharray="6 4"/>`;
}

let curveDrawn = false;

function render(state: KioskState): void {
  el("wheel-angle").textContent = state.reading
    ? fmtAngle(state.reading.angle_deg)
    : "--";
  el("stale").hidden = !state.stale;

  if (state.reading) {
    for (const spot of renderSpots(state.reading)) {
      const node = el(`spot-${spot.label.toLowerCase()}`);
      node.style.opacity = String(0.15 + 0.85 * spot.intensity);
      node.classList.toggle("dark", spot.dark);
    }
  }

  el("staged-a").textContent = fmtAngle(state.stagedA);
  el("staged-a-prime").textContent = fmtAngle(state.stagedAPrime);
  const delta = stagedDelta(state);
  el("delta-hint").textContent = delta === null ? "" : `angle difference ${delta.toFixed(1)} deg`;
  (el("run") as HTMLButtonElement).disabled = !canRun(state);
  (el("stage") as HTMLButtonElement).disabled = state.phase === "running";

  const ticks = el("progress").children;
  for (let i = 0; i < ticks.length; i++) {
    ticks[i].classList.toggle("done", i < state.progressStep);
  }
  el("phase").textContent =
    state.phase === "running"
      ? `measuring ${state.progressStep}/${state.progressOf}`
      : state.phase;

  const resultBox = el("result");
  if (state.lastResult) {
    const r = state.lastResult;
    const badge = resultBadge(r);
    resultBox.hidden = false;
    el("result-value").textContent =
      `|S| = ${r.s_value.toFixed(2)} ± ${r.sigma_s.toFixed(2)}`;
    const badgeNode = el("result-badge");
    badgeNode.textContent = badge.label;
    badgeNode.classList.toggle("live", badge.live);
    badgeNode.classList.toggle("replayed", !badge.live);
    el("result-banner").textContent = resultBanner(r);
  } else {
    resultBox.hidden = true;
  }

  el("notice").textContent = state.notice ?? "";

  const cal = state.calibration;
  el("cal-status").textContent = cal
    ? cal.calibrating
      ? `calibrating, coverage ${cal.coverage_deg.toFixed(0)} deg (need 160)`
      : cal.complete
        ? "calibration fresh"
        : "calibration required"
    : "";

  if (showReferenceCurve(state) && !curveDrawn) {
    curveDrawn = true;
    el("curve-box").hidden = false;
    drawReferenceCurve().catch(() => {
      curveDrawn = false;
    });
  }
}

function wire(): void {
  buildProgressTicks();
  controller.onChange(render);
  controller.connect();
  setInterval(() => controller.tick(), 500);

  const wheel = el("wheel") as HTMLInputElement;
  wheel.addEventListener("input", () => {
    gateway.setWheel(Number(wheel.value)).catch(() => undefined);
  });
  el("stage").addEventListener("click", () => controller.stageCurrentAngle());
  el("clear").addEventListener("click", () => controller.clearStaged());
  el("run").addEventListener("click", () => void controller.submitRun());
  el("cal-start").addEventListener("click", () => void controller.startCalibration());
  el("cal-done").addEventListener("click", () => void controller.finishCalibration());
}

if (typeof document !== "undefined") {
  wire();
}
