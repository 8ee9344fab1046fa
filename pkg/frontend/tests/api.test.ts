import { describe, expect, it, vi } from "vitest";

import { ApiRequestError, TagApi } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("TagApi", () => {
  it("creates sessions against the configured base url", async () => {
    const fetchImpl = vi.fn().mockResolvedValue(
      jsonResponse(201, { session_id: "abc", human_angle: 1.0 }),
    );
    const api = new TagApi("http://game.test/", fetchImpl);
    const info = await api.createSession("rili");
    expect(info.session_id).toBe("abc");
    const [url, init] = fetchImpl.mock.calls[0];
    expect(url).toBe("http://game.test/sessions");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body)).toEqual({ agent_kind: "rili" });
  });

  it("lets the server pick the agent when no kind is given", async () => {
    const fetchImpl = vi.fn().mockResolvedValue(jsonResponse(201, {}));
    await new TagApi("http://game.test", fetchImpl).createSession();
    expect(JSON.parse(fetchImpl.mock.calls[0][1].body)).toEqual({});
  });

  it("posts moves as target_angle radians", async () => {
    const fetchImpl = vi.fn().mockResolvedValue(jsonResponse(200, { caught: false }));
    const api = new TagApi("http://game.test", fetchImpl);
    await api.move("abc", 2.25);
    const [url, init] = fetchImpl.mock.calls[0];
    expect(url).toBe("http://game.test/sessions/abc/move");
    expect(JSON.parse(init.body)).toEqual({ target_angle: 2.25 });
  });

  it("turns error envelopes into typed errors", async () => {
    const fetchImpl = vi.fn().mockResolvedValue(
      jsonResponse(400, { code: "step_too_large", message: "step of 2 rad..." }),
    );
    const api = new TagApi("http://game.test", fetchImpl);
    const failure = await api.move("abc", 9.0).catch((error) => error);
    expect(failure).toBeInstanceOf(ApiRequestError);
    expect(failure.code).toBe("step_too_large");
    expect(failure.status).toBe(400);
    expect(failure.message).toMatch(/step of 2/);
  });
});
