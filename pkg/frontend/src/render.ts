// HTML-string renderers for every phase. Pure functions of the state, so
// the blinding snapshot test can scan exactly what the browser would show.

import { RUBRIC } from "./rubric.js";
import { confirmedCount, currentTask } from "./state.js";
import type { AppState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

// directions stay visible but neutral: "ce-ru" -> "ce → ru"
export function directionLabel(direction: string): string {
  return direction.split("-").join(" → ");
}

function banner(state: AppState): string {
  if (state.banner === null) return "";
  return (
    `<div class="banner" role="alert">${escapeHtml(state.banner)} ` +
    `<button data-action="retry">Retry</button></div>`
  );
}

function toast(state: AppState): string {
  if (state.toast === null) return "";
  return `<div class="toast" role="alert">${escapeHtml(state.toast)}</div>`;
}

function scoreButtons(): string {
  const buttons = [...RUBRIC]
    .sort((a, b) => a.score - b.score)
    .map(
      (entry) =>
        `<button class="score" data-score="${entry.score}" ` +
        `title="${escapeHtml(entry.description)}">${escapeHtml(entry.label)}</button>`,
    );
  return `<div class="scores">${buttons.join("")}</div>`;
}

function renderLogin(state: AppState): string {
  return `
    ${toast(state)}
    <form class="login" data-action="login">
      <h1>Translation rating</h1>
      <label>Annotator id <input name="annotator" autocomplete="username" required></label>
      <label>Access token <input name="token" type="password" required></label>
      <button type="submit">Start rating</button>
    </form>`;
}

function renderLoading(state: AppState): string {
  return `${banner(state)}<p class="status">Loading the session…</p>`;
}

function renderWaiting(state: AppState): string {
  return `${banner(state)}<p class="status">Sending queued ratings…</p>`;
}

function renderTask(state: AppState): string {
  const task = currentTask(state);
  if (task === null) {
    return renderWaiting(state);
  }
  return `
    ${banner(state)}
    ${toast(state)}
    <header class="progress">${confirmedCount(state)} / ${state.tasks.length}</header>
    <article class="task" data-task-id="${escapeHtml(task.taskId)}">
      <p class="direction">${escapeHtml(directionLabel(task.direction))}</p>
      <section class="text source">
        <h2>Source</h2>
        <p>${escapeHtml(task.sourceText)}</p>
      </section>
      <section class="text hypothesis">
        <h2>Translation</h2>
        <p>${escapeHtml(task.hypothesisText)}</p>
      </section>
      ${scoreButtons()}
      <p class="hint">Keys 1–5 rate and advance.</p>
    </article>`;
}

function renderDone(state: AppState): string {
  return `
    <div class="complete">
      <h1>All done</h1>
      <p>Every task is rated: ${confirmedCount(state)} / ${state.tasks.length}. Thank you.</p>
    </div>`;
}

export function render(state: AppState): string {
  switch (state.phase) {
    case "login":
      return renderLogin(state);
    case "loading":
      return renderLoading(state);
    case "rating":
      return renderTask(state);
    case "done":
      return renderDone(state);
  }
}
