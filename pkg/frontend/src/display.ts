// Display model: a pure function of the event stream plus the clock.
// applyEvent folds gateway events into state; view() derives what to paint
// at a given instant (fade choreography included). Keeping this free of DOM
// and timers makes the whole display snapshot-testable.

import { asPoem, DisplayEvent, Phase, Poem } from "./types.js";

export const FADE_MS = 1500;

export type Connection = "connecting" | "live" | "standby";

export interface DisplayModel {
  connection: Connection;
  phase: Phase | null;
  poem: Poem | null;
  shownAt: number | null; // fade-in start
  clearedAt: number | null; // fade-out start
  lastSeq: number;
}

export function initialModel(): DisplayModel {
  return {
    connection: "connecting",
    phase: null,
    poem: null,
    shownAt: null,
    clearedAt: null,
    lastSeq: 0,
  };
}

export function connectionChanged(model: DisplayModel, connection: Connection): DisplayModel {
  // a reconnect starts a fresh per-connection sequence
  return { ...model, connection, lastSeq: connection === "live" ? 0 : model.lastSeq };
}

export function applyEvent(model: DisplayModel, event: DisplayEvent, now: number): DisplayModel {
  if (event.seq <= model.lastSeq) return model; // stale or replayed
  const next = { ...model, lastSeq: event.seq };
  switch (event.kind) {
    case "poem": {
      const poem = asPoem(event.payload);
      if (poem) {
        if (next.poem?.id !== poem.id) {
          next.poem = poem;
          next.shownAt = now;
          next.clearedAt = null;
        }
      } else if (next.poem && next.clearedAt === null) {
        next.clearedAt = now; // ClearDisplay: begin fade-out
      }
      return next;
    }
    case "state": {
      const payload = event.payload as { phase?: Phase } | null;
      if (payload && payload.phase) {
        next.phase = payload.phase;
        if (
          (payload.phase === "COOLDOWN" || payload.phase === "IDLE") &&
          next.poem &&
          next.clearedAt === null
        ) {
          next.clearedAt = now;
        }
      }
      return next;
    }
    default:
      return next; // presence and heartbeat do not affect rendering
  }
}

export interface DisplayView {
  standby: boolean;
  lines: string[];
  opacity: number; // 0..1 for the poem overlay
  fontScale: number; // 1 = base typography, < 1 when the poem is long
}

function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

export function view(model: DisplayModel, now: number): DisplayView {
  if (model.connection !== "live") {
    return { standby: true, lines: [], opacity: 0, fontScale: 1 };
  }
  if (!model.poem || model.shownAt === null) {
    return { standby: false, lines: [], opacity: 0, fontScale: 1 };
  }
  let opacity: number;
  if (model.clearedAt !== null) {
    opacity = 1 - clamp01((now - model.clearedAt) / FADE_MS);
  } else {
    opacity = clamp01((now - model.shownAt) / FADE_MS);
  }
  const lines = model.poem.text.split("\n");
  const longest = lines.reduce((n, l) => Math.max(n, l.length), 0);
  // scale down rather than clip: 8 comfortable lines, ~36 chars per line
  const fontScale = Math.min(1, 8 / Math.max(8, lines.length), 36 / Math.max(36, longest));
  return { standby: false, lines, opacity, fontScale };
}

export function faded(model: DisplayModel, now: number): boolean {
  // true once a fade-out has fully completed (overlay can be removed)
  return model.clearedAt !== null && now - model.clearedAt >= FADE_MS;
}
