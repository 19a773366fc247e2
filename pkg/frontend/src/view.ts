// Pure HTML rendering of the console state; main.ts mounts the result and
// wires input handlers. Keeping render() a string function makes it
// testable without a browser.

import {
  ConsoleState,
  STAGE_BREADCRUMB,
  locked,
  stale,
} from "./state.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

function fmt(value: number | null | undefined, digits = 4): string {
  return value === null || value === undefined ? "--" : value.toFixed(digits);
}

export function renderBreadcrumb(mode: string): string {
  const items = STAGE_BREADCRUMB.map((step) => {
    const cls = step === mode ? "crumb active" : "crumb";
    return `<span class="${cls}">${step}</span>`;
  });
  return `<nav class="breadcrumb">${items.join(" &rsaquo; ")}</nav>`;
}

export function renderJointBars(state: ConsoleState): string {
  if (!state.snapshot) {
    return `<p class="empty">waiting for first snapshot</p>`;
  }
  const rows = state.snapshot.q.map((q, i) => {
    const lo = state.qMin[i] ?? -Math.PI;
    const hi = state.qMax[i] ?? Math.PI;
    const pct = ((q - lo) / (hi - lo)) * 100;
    const jog = state.jog[i] ?? q;
    return (
      `<tr><td>j${i}</td>` +
      `<td><div class="bar"><div class="fill" style="width:${pct.toFixed(1)}%"></div></div></td>` +
      `<td>${q.toFixed(3)}</td><td>${jog.toFixed(3)}</td>` +
      `<td class="lim">${lo.toFixed(2)}..${hi.toFixed(2)}</td></tr>`
    );
  });
  return (
    `<table class="joints"><tr><th></th><th>position</th><th>q</th><th>target</th><th>limits</th></tr>` +
    rows.join("") +
    `</table>`
  );
}

export function renderErrors(state: ConsoleState): string {
  const snap = state.snapshot;
  return (
    `<div class="errors">` +
    `<span>e_p ${fmt(snap?.e_p ?? null)} m</span>` +
    `<span>e_R ${fmt(snap?.e_r ?? null)} rad</span>` +
    `<span>collisions ${snap?.collisions ?? 0}</span>` +
    `</div>`
  );
}

export function renderFeed(state: ConsoleState): string {
  const items = state.feed
    .slice(-10)
    .map((entry) => `<li>${esc(entry.text)}</li>`);
  return `<ul class="feed">${items.join("")}</ul>`;
}

export function render(state: ConsoleState, now: number): string {
  const classes = ["console"];
  if (locked(state)) classes.push("locked");
  if (stale(state, now)) classes.push("stale");
  if (now - state.collisionFlashAt < 500) classes.push("flash");
  const roleBanner =
    state.role === "observer"
      ? `<div class="banner">read-only: observer mode</div>`
      : "";
  const lockBadge = locked(state)
    ? `<span class="badge">controls locked</span>`
    : "";
  const error = state.lastError
    ? `<div class="error-line">${esc(state.lastError)}</div>`
    : "";
  return (
    `<div class="${classes.join(" ")}">` +
    `<header>link: ${state.status} ${lockBadge}</header>` +
    roleBanner +
    renderBreadcrumb(state.mode) +
    renderJointBars(state) +
    renderErrors(state) +
    `<div class="gripper">gripper: ${state.snapshot?.gripper ?? "?"}` +
    ` trigger: ${state.trigger.toFixed(2)}</div>` +
    error +
    renderFeed(state) +
    `</div>`
  );
}
