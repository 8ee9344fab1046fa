// Shapes shared between the API layer and the game state.

export interface SessionInfo {
  session_id: string;
  agent_kind: string;
  learning_enabled: boolean;
  interaction_count: number;
  human_angle: number;
  max_step: number;
}

export interface MoveResponse {
  session_id: string;
  human_angle: number;
  interaction_count: number;
  agent_final_position: [number, number];
  distance: number;
  caught: boolean;
  interaction_index: number;
  times_caught: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

/** Everything the renderer needs for one frame. */
export interface ClientGameState {
  sessionId: string;
  myAngle: number;
  maxStep: number;
  agentFinalPosition: [number, number] | null;
  lastDistance: number | null;
  caughtFlag: boolean;
  timesCaught: number;
  interactionIndex: number;
  pending: boolean;
  message: string | null;
}

/** The reachable arc around the human's current angle, in radians. */
export interface AllowedArc {
  from: number;
  to: number;
}
