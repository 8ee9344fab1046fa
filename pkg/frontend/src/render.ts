// Canvas drawing. Takes a structural surface type instead of the real
// CanvasRenderingContext2D so the frame contents are testable off-browser.

import { angleToCanvas, toCanvas } from "./geometry.js";
import { allowedArc } from "./state.js";
import type { ClientGameState } from "./types.js";

export interface DrawSurface {
  width: number;
  height: number;
  lineWidth: number;
  strokeStyle: string;
  fillStyle: string;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, start: number, end: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Layout {
  centerX: number;
  centerY: number;
  radius: number;
}

export const HUMAN_MARKER_RADIUS = 9;
export const AGENT_MARKER_RADIUS = 7;

export function layout(surface: { width: number; height: number }): Layout {
  return {
    centerX: surface.width / 2,
    centerY: surface.height / 2,
    radius: 0.4 * Math.min(surface.width, surface.height),
  };
}

function dot(surface: DrawSurface, x: number, y: number, r: number, color: string) {
  surface.beginPath();
  surface.fillStyle = color;
  surface.arc(x, y, r, 0, 2 * Math.PI);
  surface.fill();
}

export function render(state: ClientGameState, surface: DrawSurface): void {
  const { centerX, centerY, radius } = layout(surface);
  surface.clearRect(0, 0, surface.width, surface.height);

  surface.beginPath();
  surface.lineWidth = 2;
  surface.strokeStyle = "#445";
  surface.arc(centerX, centerY, radius, 0, 2 * Math.PI);
  surface.stroke();

  // the reachable arc; arena angles are y-up, canvas angles y-down
  const arc = allowedArc(state);
  surface.beginPath();
  surface.lineWidth = 6;
  surface.strokeStyle = state.pending ? "#8883" : "#2a24";
  surface.arc(centerX, centerY, radius, -arc.to, -arc.from);
  surface.stroke();

  const [humanX, humanY] = angleToCanvas(state.myAngle, centerX, centerY, radius);
  dot(surface, humanX, humanY, HUMAN_MARKER_RADIUS, "#27f");

  if (state.agentFinalPosition !== null) {
    const [agentX, agentY] = toCanvas(
      state.agentFinalPosition[0],
      state.agentFinalPosition[1],
      centerX,
      centerY,
      radius,
    );
    dot(surface, agentX, agentY, AGENT_MARKER_RADIUS, "#e43");
    if (state.caughtFlag) {
      surface.beginPath();
      surface.lineWidth = 3;
      surface.strokeStyle = "#e43";
      surface.arc(humanX, humanY, HUMAN_MARKER_RADIUS + 6, 0, 2 * Math.PI);
      surface.stroke();
    }
  }

  surface.fillStyle = "#ddd";
  surface.font = "16px sans-serif";
  surface.fillText(
    `caught ${state.timesCaught} / ${state.interactionIndex}`,
    12,
    24,
  );
  if (state.lastDistance !== null) {
    surface.fillText(`distance ${state.lastDistance.toFixed(3)}`, 12, 46);
  }
  if (state.caughtFlag) {
    surface.fillStyle = "#e43";
    surface.font = "bold 24px sans-serif";
    surface.fillText("CAUGHT!", centerX - 48, 34);
  }
  surface.fillStyle = "#aaa";
  surface.font = "14px sans-serif";
  surface.fillText(
    state.pending ? "waiting for the agent..." : "your move: click the circle",
    12,
    surface.height - 30,
  );
  if (state.message !== null) {
    surface.fillStyle = "#fa3";
    surface.fillText(state.message, 12, surface.height - 10);
  }
}
