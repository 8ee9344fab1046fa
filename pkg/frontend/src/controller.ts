// Click handling and the single-session game flow.

import { ApiRequestError } from "./api.js";
import { projectToAngle, withinStep } from "./geometry.js";
import { applyMove, initialState, withMessage, withPending } from "./state.js";
import type { ClientGameState, MoveResponse, SessionInfo } from "./types.js";

export const OUT_OF_REACH = "Too far: pick a point inside the highlighted arc.";

export interface MoveSubmitter {
  move(sessionId: string, targetAngle: number): Promise<MoveResponse>;
}

export class GameController {
  state: ClientGameState;
  private readonly api: MoveSubmitter;
  private readonly listeners: Array<(state: ClientGameState) => void> = [];

  constructor(api: MoveSubmitter, session: SessionInfo) {
    this.api = api;
    this.state = initialState(session);
  }

  onChange(listener: (state: ClientGameState) => void): void {
    this.listeners.push(listener);
  }

  private set(next: ClientGameState): void {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }

  /**
   * Project a canvas click onto the circle and submit it as a move.
   * Out-of-arc clicks are rejected locally without touching the network,
   * and only one move may be in flight at a time.
   */
  async click(
    x: number,
    y: number,
    centerX: number,
    centerY: number,
  ): Promise<void> {
    if (this.state.pending) return;
    const target = projectToAngle(x, y, centerX, centerY);
    if (!withinStep(this.state.myAngle, target, this.state.maxStep)) {
      this.set(withMessage(this.state, OUT_OF_REACH));
      return;
    }
    this.set(withPending(this.state));
    try {
      const response = await this.api.move(this.state.sessionId, target);
      this.set(applyMove(this.state, response));
    } catch (error) {
      const message =
        error instanceof ApiRequestError
          ? error.message
          : "The server did not answer; try again.";
      this.set(withMessage(this.state, message));
    }
  }
}
