// Entry point: wires the session, canvas clicks, and rendering together.
// The server base URL defaults to the page origin and can be overridden
// with ?server=http://host:port for development against a separate port.

import { TagApi } from "./api.js";
import { GameController } from "./controller.js";
import { layout, render } from "./render.js";

const canvas = document.getElementById("arena") as HTMLCanvasElement;
const statusLine = document.getElementById("status") as HTMLParagraphElement;

function baseUrl(): string {
  const override = new URLSearchParams(window.location.search).get("server");
  return override ?? window.location.origin;
}

async function start() {
  const api = new TagApi(baseUrl());
  let session;
  try {
    session = await api.createSession();
  } catch (error) {
    statusLine.textContent =
      "Could not reach the tag server. Start it with: coadapt serve";
    throw error;
  }
  statusLine.textContent =
    `session ${session.session_id} vs a ${session.agent_kind} agent`;

  const controller = new GameController(api, session);
  const context = canvas.getContext("2d")!;
  controller.onChange((state) => render(state, context));
  render(controller.state, context);

  canvas.addEventListener("click", (event) => {
    const rect = canvas.getBoundingClientRect();
    const x = ((event.clientX - rect.left) / rect.width) * canvas.width;
    const y = ((event.clientY - rect.top) / rect.height) * canvas.height;
    const { centerX, centerY } = layout(canvas);
    void controller.click(x, y, centerX, centerY);
  });
}

void start();
