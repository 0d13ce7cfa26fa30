// Pure session state machine. Every transition returns a fresh state, so
// the renderers and tests never see partial mutation. The local queue is
// the only client-side state the app keeps (all truth lives server-side).

import type { Score, SessionPayload } from "./types.js";

export type Phase = "login" | "loading" | "rating" | "done";

export interface QueueTask {
  taskId: string;
  direction: string;
  sourceText: string;
  hypothesisText: string;
  confirmed: boolean;
}

export interface OutboxEntry {
  taskId: string;
  score: Score;
}

export interface AppState {
  phase: Phase;
  annotatorId: string;
  tasks: QueueTask[];
  currentIndex: number; // -1 when nothing is ratable (all submitted or done)
  outbox: OutboxEntry[]; // optimistic submissions not yet acknowledged
  banner: string | null; // persistent connectivity banner with a retry action
  toast: string | null; // transient server-rejection message
}

export function initialState(): AppState {
  return {
    phase: "login",
    annotatorId: "",
    tasks: [],
    currentIndex: -1,
    outbox: [],
    banner: null,
    toast: null,
  };
}

export function confirmedCount(state: AppState): number {
  return state.tasks.filter((t) => t.confirmed).length;
}

export function currentTask(state: AppState): QueueTask | null {
  return state.currentIndex >= 0 ? (state.tasks[state.currentIndex] ?? null) : null;
}

function inOutbox(state: AppState, taskId: string): boolean {
  return state.outbox.some((e) => e.taskId === taskId);
}

// first task in server order that is neither confirmed nor awaiting an ack
function nextRatableIndex(state: AppState): number {
  return state.tasks.findIndex((t) => !t.confirmed && !inOutbox(state, t.taskId));
}

function withPhase(state: AppState): AppState {
  if (state.tasks.length > 0 && confirmedCount(state) === state.tasks.length) {
    return { ...state, phase: "done", currentIndex: -1 };
  }
  return state;
}

export function sessionRequested(state: AppState, annotatorId: string): AppState {
  return { ...initialState(), phase: "loading", annotatorId };
}

export function sessionLoaded(state: AppState, payload: SessionPayload): AppState {
  const tasks: QueueTask[] = payload.tasks.map((t) => ({
    taskId: t.task_id,
    direction: t.direction,
    sourceText: t.source_text,
    hypothesisText: t.hypothesis_text,
    confirmed: t.status === "rated",
  }));
  const loaded: AppState = {
    ...state,
    phase: "rating",
    annotatorId: payload.annotator_id,
    tasks,
    outbox: [],
    banner: null,
    toast: null,
    currentIndex: tasks.findIndex((t) => !t.confirmed),
  };
  return withPhase(loaded);
}

export function sessionUnauthorized(state: AppState): AppState {
  return { ...initialState(), toast: "The token was not accepted. Sign in again." };
}

export function sessionUnreachable(state: AppState): AppState {
  return { ...state, banner: "The server could not be reached. Nothing was lost." };
}

export function sessionMissing(state: AppState, annotatorId: string): AppState {
  return {
    ...initialState(),
    toast: `No session exists for "${annotatorId}". Check the annotator id.`,
  };
}

export function scoreChosen(state: AppState, score: Score): AppState {
  const task = currentTask(state);
  if (state.phase !== "rating" || task === null) {
    return state;
  }
  // re-rating a task replaces its queued submission: one final rating per task
  const outbox = state.outbox
    .filter((e) => e.taskId !== task.taskId)
    .concat({ taskId: task.taskId, score });
  const advanced: AppState = { ...state, outbox, toast: null };
  return { ...advanced, currentIndex: nextRatableIndex(advanced) };
}

export function submitConfirmed(state: AppState, taskId: string): AppState {
  const confirmed: AppState = {
    ...state,
    tasks: state.tasks.map((t) => (t.taskId === taskId ? { ...t, confirmed: true } : t)),
    outbox: state.outbox.filter((e) => e.taskId !== taskId),
    banner: null,
  };
  if (confirmed.currentIndex < 0) {
    return withPhase({ ...confirmed, currentIndex: nextRatableIndex(confirmed) });
  }
  return withPhase(confirmed);
}

export function submitRejected(state: AppState, taskId: string, message: string): AppState {
  const index = state.tasks.findIndex((t) => t.taskId === taskId);
  return {
    ...state,
    outbox: state.outbox.filter((e) => e.taskId !== taskId),
    currentIndex: index >= 0 ? index : state.currentIndex,
    toast: message,
  };
}

export function submitUnreachable(state: AppState): AppState {
  // the outbox is kept whole; a reconnect (or the banner button) flushes it
  return {
    ...state,
    banner: "Offline: ratings are queued locally and sent when the connection returns.",
  };
}

export function bannerCleared(state: AppState): AppState {
  return { ...state, banner: null };
}
