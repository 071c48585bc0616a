// Wire types for the gateway's websocket and HTTP surfaces
// (see docs/wire_schema.md in the repository root).

export type Phase = "IDLE" | "ENGAGED" | "GENERATING" | "PRESENTING" | "COOLDOWN";

export interface Poem {
  id: string;
  text: string;
  emotion: string;
  seed_word: string;
  created_at: number;
  backend: "transformer" | "template";
}

export type DisplayEventKind = "state" | "poem" | "presence" | "heartbeat";

export interface DisplayEvent {
  kind: DisplayEventKind;
  payload: unknown;
  ts: number;
  seq: number;
}

export interface StatusBody {
  phase: Phase;
  phase_since: number;
  face_present: boolean;
  uptime_ms: number;
  poems_generated: number;
  engine: Record<string, number | boolean>;
  sampling: Record<string, number>;
  backend: string;
  active_poem: Poem | null;
}

export interface ArchiveEntry {
  sequence: number;
  id: string;
  created_at: number;
}

export function isDisplayEvent(value: unknown): value is DisplayEvent {
  if (typeof value !== "object" || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    (v.kind === "state" || v.kind === "poem" || v.kind === "presence" || v.kind === "heartbeat") &&
    typeof v.ts === "number" &&
    typeof v.seq === "number"
  );
}

export function asPoem(payload: unknown): Poem | null {
  if (typeof payload !== "object" || payload === null) return null;
  const p = payload as Record<string, unknown>;
  if (typeof p.id === "string" && typeof p.text === "string" && p.text.length > 0) {
    return payload as Poem;
  }
  return null;
}

// The same bounds POST /config enforces server-side; the console checks them
// before sending so typos surface instantly.
export interface FieldBound {
  min?: number;
  minExclusive?: boolean;
  max?: number;
  integer?: boolean;
}

export const CONFIG_BOUNDS: Record<string, FieldBound> = {
  engage_after_ms: { min: 0, minExclusive: true, integer: true },
  presence_grace_ms: { min: 0, minExclusive: true, integer: true },
  present_for_ms: { min: 0, minExclusive: true, integer: true },
  cooldown_ms: { min: 0, minExclusive: true, integer: true },
  label_dwell_ms: { min: 0, minExclusive: true, integer: true },
  ema_alpha: { min: 0, max: 1 },
  label_margin: { min: 0 },
  intensity_threshold: { min: 0, max: 1 },
  temperature: { min: 0 },
  top_k: { min: 0, integer: true },
  top_p: { min: 0, minExclusive: true, max: 1 },
  max_tokens: { min: 1, integer: true },
};

export function validateField(name: string, value: number): string | null {
  const bound = CONFIG_BOUNDS[name];
  if (!bound) return `unknown setting ${name}`;
  if (Number.isNaN(value)) return "not a number";
  if (bound.integer && !Number.isInteger(value)) return "must be an integer";
  if (bound.min !== undefined) {
    if (bound.minExclusive ? value <= bound.min : value < bound.min) {
      return bound.minExclusive ? `must be > ${bound.min}` : `must be >= ${bound.min}`;
    }
  }
  if (bound.max !== undefined && value > bound.max) return `must be <= ${bound.max}`;
  return null;
}
