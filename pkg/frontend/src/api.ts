// Thin wrapper over the tag service's JSON API.

import type { ApiErrorBody, MoveResponse, SessionInfo } from "./types.js";

export class ApiRequestError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
  }
}

type FetchLike = typeof fetch;

export class TagApi {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiRequestError(response.status, body as ApiErrorBody);
    }
    return body as T;
  }

  createSession(agentKind?: string): Promise<SessionInfo> {
    return this.request<SessionInfo>("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(agentKind ? { agent_kind: agentKind } : {}),
    });
  }

  move(sessionId: string, targetAngle: number): Promise<MoveResponse> {
    return this.request<MoveResponse>(`/sessions/${sessionId}/move`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ target_angle: targetAngle }),
    });
  }

  metrics(sessionId: string): Promise<{ upper_half_fraction: number }> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }
}
