// Browser entry point: one websocket, one reducer-backed client, DOM
// listeners dispatching actions, and a render loop.

import { ConsoleClient } from "./client.js";
import { render } from "./view.js";

const JOG_STEP = 0.05; // rad per keypress or button click

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/ws`;
}

function mount(root: HTMLElement): void {
  let retryMs = 500;

  const connect = () => {
    const socket = new WebSocket(wsUrl());
    const client = new ConsoleClient(socket, "operator");
    const redraw = () => {
      root.innerHTML = render(client.state, Date.now());
    };
    client.onChange(redraw);

    socket.onopen = () => {
      retryMs = 500;
      client.handleOpen();
    };
    socket.onmessage = (ev) => client.handleRaw(String(ev.data));
    socket.onclose = () => {
      client.handleClose();
      clearInterval(beat);
      clearInterval(paint);
      setTimeout(connect, retryMs);
      retryMs = Math.min(retryMs * 2, 10000);
    };

    const beat = setInterval(() => client.heartbeat(), 1000);
    const paint = setInterval(redraw, 200); // staleness dimming needs a clock

    document.onkeydown = (ev) => {
      const at = Date.now();
      const digit = Number(ev.key);
      if (!Number.isNaN(digit) && digit >= 1 && digit <= client.state.n) {
        const delta = ev.shiftKey ? -JOG_STEP : JOG_STEP;
        client.apply({ kind: "jog", joint: digit - 1, delta, at });
      } else if (ev.key === "g") {
        client.apply({ kind: "trigger", value: 1.0, at });
      } else if (ev.key === "r") {
        client.apply({ kind: "trigger", value: 0.0, at });
      } else if (ev.key === "Enter") {
        client.apply({ kind: "confirm", at });
      }
    };
  };

  connect();
}

const root = document.getElementById("app");
if (root) {
  mount(root);
}
