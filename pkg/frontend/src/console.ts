// Operator console model: load status, edit the hot-tunable settings with
// client-side validation mirroring the gateway's bounds, POST them, browse
// the archive. fetch is injected for testability.

import { ArchiveEntry, Poem, StatusBody, validateField } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export interface ConsoleModel {
  base: string;
  status: StatusBody | null;
  edits: Record<string, string>; // raw field text, keyed by setting name
  fieldErrors: Record<string, string>;
  lastError: string | null;
  saving: boolean;
  archive: ArchiveEntry[];
}

export function initialConsole(base: string): ConsoleModel {
  return {
    base,
    status: null,
    edits: {},
    fieldErrors: {},
    lastError: null,
    saving: false,
    archive: [],
  };
}

export async function refreshStatus(model: ConsoleModel, fetchLike: FetchLike): Promise<ConsoleModel> {
  try {
    const resp = await fetchLike(`${model.base}/status`);
    if (!resp.ok) return { ...model, lastError: `status ${resp.status}` };
    const status = (await resp.json()) as StatusBody;
    return { ...model, status, lastError: null };
  } catch (e) {
    return { ...model, lastError: `gateway unreachable: ${String(e)}` };
  }
}

export function setEdit(model: ConsoleModel, field: string, raw: string): ConsoleModel {
  const edits = { ...model.edits, [field]: raw };
  const fieldErrors = { ...model.fieldErrors };
  delete fieldErrors[field];
  if (raw.trim() !== "") {
    const err = validateField(field, Number(raw));
    if (err) fieldErrors[field] = err;
  }
  return { ...model, edits, fieldErrors };
}

export function pendingChanges(model: ConsoleModel): Record<string, number> {
  const out: Record<string, number> = {};
  for (const [field, raw] of Object.entries(model.edits)) {
    if (raw.trim() === "" || model.fieldErrors[field]) continue;
    out[field] = Number(raw);
  }
  return out;
}

interface ValidationDetail {
  loc?: unknown[];
  msg?: string;
}

export async function applyConfig(
  model: ConsoleModel,
  fetchLike: FetchLike,
  extra: Record<string, unknown> = {},
): Promise<ConsoleModel> {
  const body = { ...pendingChanges(model), ...extra };
  if (Object.keys(body).length === 0) {
    return { ...model, lastError: "nothing to apply" };
  }
  let resp;
  try {
    resp = await fetchLike(`${model.base}/config`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  } catch (e) {
    return { ...model, saving: false, lastError: `apply failed: ${String(e)}` };
  }
  if (resp.status === 422) {
    // surface the gateway's field-level detail inline
    const fieldErrors: Record<string, string> = { ...model.fieldErrors };
    try {
      const payload = (await resp.json()) as { detail?: ValidationDetail[] };
      for (const item of payload.detail ?? []) {
        const loc = item.loc ?? [];
        const field = String(loc[loc.length - 1] ?? "");
        if (field) fieldErrors[field] = item.msg ?? "rejected by gateway";
      }
    } catch {
      /* body unreadable; keep generic error */
    }
    return { ...model, saving: false, fieldErrors, lastError: "gateway rejected some values" };
  }
  if (!resp.ok) {
    return { ...model, saving: false, lastError: `apply failed: status ${resp.status}` };
  }
  const status = (await resp.json()) as StatusBody;
  return { ...model, saving: false, status, edits: {}, fieldErrors: {}, lastError: null };
}

export async function reloadLexicon(model: ConsoleModel, fetchLike: FetchLike): Promise<ConsoleModel> {
  return applyConfig({ ...model, edits: {} }, fetchLike, { reload_lexicon: true });
}

export async function loadArchive(model: ConsoleModel, fetchLike: FetchLike): Promise<ConsoleModel> {
  try {
    const resp = await fetchLike(`${model.base}/archive`);
    if (!resp.ok) return { ...model, lastError: `archive: status ${resp.status}` };
    const body = (await resp.json()) as { poems: ArchiveEntry[] };
    return { ...model, archive: body.poems, lastError: null };
  } catch (e) {
    return { ...model, lastError: `archive unreachable: ${String(e)}` };
  }
}

export async function fetchPoem(
  model: ConsoleModel,
  fetchLike: FetchLike,
  id: string,
): Promise<Poem | null> {
  const resp = await fetchLike(`${model.base}/archive/${id}`);
  if (!resp.ok) return null;
  return (await resp.json()) as Poem;
}
