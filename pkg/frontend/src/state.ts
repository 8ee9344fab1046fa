// Pure state transitions; the controller and renderer both work off these.

import type {
  AllowedArc,
  ClientGameState,
  MoveResponse,
  SessionInfo,
} from "./types.js";

export function initialState(session: SessionInfo): ClientGameState {
  return {
    sessionId: session.session_id,
    myAngle: session.human_angle,
    maxStep: session.max_step,
    agentFinalPosition: null,
    lastDistance: null,
    caughtFlag: false,
    timesCaught: 0,
    interactionIndex: session.interaction_count,
    pending: false,
    message: null,
  };
}

export function allowedArc(state: ClientGameState): AllowedArc {
  return { from: state.myAngle - state.maxStep, to: state.myAngle + state.maxStep };
}

export function applyMove(
  state: ClientGameState,
  response: MoveResponse,
): ClientGameState {
  return {
    ...state,
    myAngle: response.human_angle,
    agentFinalPosition: response.agent_final_position,
    lastDistance: response.distance,
    caughtFlag: response.caught,
    timesCaught: response.times_caught,
    interactionIndex: response.interaction_count,
    pending: false,
    message: null,
  };
}

export function withPending(state: ClientGameState): ClientGameState {
  return { ...state, pending: true, message: null };
}

export function withMessage(
  state: ClientGameState,
  message: string,
): ClientGameState {
  return { ...state, pending: false, message };
}
