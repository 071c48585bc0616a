// Operator console page wiring: renders status, editable settings with
// inline errors, and the archive list.

import {
  applyConfig,
  ConsoleModel,
  fetchPoem,
  initialConsole,
  loadArchive,
  refreshStatus,
  reloadLexicon,
  setEdit,
} from "./console.js";
import { CONFIG_BOUNDS } from "./types.js";

const EDITABLE = Object.keys(CONFIG_BOUNDS);

export class ConsoleApp {
  model: ConsoleModel;
  private fetchLike: typeof fetch;
  private root: Document;

  constructor(base: string, root: Document = document, fetchLike: typeof fetch = fetch) {
    this.model = initialConsole(base);
    this.root = root;
    this.fetchLike = fetchLike.bind(globalThis) as typeof fetch;
  }

  async boot(): Promise<void> {
    this.buildForm();
    this.model = await refreshStatus(this.model, this.fetchLike);
    this.model = await loadArchive(this.model, this.fetchLike);
    this.render();
    this.root.getElementById("apply")!.addEventListener("click", () => void this.apply());
    this.root.getElementById("reload-lexicon")!.addEventListener("click", () => void this.lexicon());
    setInterval(() => void this.poll(), 2000);
  }

  private async poll(): Promise<void> {
    this.model = await refreshStatus(this.model, this.fetchLike);
    this.model = await loadArchive(this.model, this.fetchLike);
    this.render();
  }

  async apply(): Promise<void> {
    this.model = await applyConfig(this.model, this.fetchLike);
    this.render();
  }

  async lexicon(): Promise<void> {
    this.model = await reloadLexicon(this.model, this.fetchLike);
    this.render();
  }

  private buildForm(): void {
    const form = this.root.getElementById("settings")!;
    for (const field of EDITABLE) {
      const row = this.root.createElement("div");
      row.className = "setting";
      const label = this.root.createElement("label");
      label.textContent = field;
      const input = this.root.createElement("input");
      input.id = `edit-${field}`;
      input.addEventListener("input", () => {
        this.model = setEdit(this.model, field, input.value);
        this.renderErrors();
      });
      const err = this.root.createElement("span");
      err.className = "error";
      err.id = `err-${field}`;
      row.append(label, input, err);
      form.append(row);
    }
  }

  private renderErrors(): void {
    for (const field of EDITABLE) {
      const el = this.root.getElementById(`err-${field}`);
      if (el) el.textContent = this.model.fieldErrors[field] ?? "";
    }
    const banner = this.root.getElementById("banner");
    if (banner) banner.textContent = this.model.lastError ?? "";
  }

  render(): void {
    const s = this.model.status;
    const phase = this.root.getElementById("phase");
    if (phase) phase.textContent = s ? `${s.phase} (${s.backend})` : "…";
    const stats = this.root.getElementById("stats");
    if (stats && s) {
      stats.textContent =
        `poems ${s.poems_generated} · face ${s.face_present ? "present" : "absent"}` +
        ` · up ${(s.uptime_ms / 1000).toFixed(0)}s`;
    }
    for (const field of EDITABLE) {
      const input = this.root.getElementById(`edit-${field}`) as HTMLInputElement | null;
      if (input && s && !(field in this.model.edits)) {
        const current = (s.engine as Record<string, unknown>)[field] ?? s.sampling[field];
        input.placeholder = current === undefined ? "" : String(current);
      }
    }
    const list = this.root.getElementById("archive");
    if (list) {
      list.replaceChildren(
        ...this.model.archive.map((entry) => {
          const li = this.root.createElement("li");
          li.textContent = `#${entry.sequence} ${entry.id}`;
          li.addEventListener("click", () => void this.showPoem(entry.id));
          return li;
        }),
      );
    }
    this.renderErrors();
  }

  private async showPoem(id: string): Promise<void> {
    const poem = await fetchPoem(this.model, this.fetchLike, id);
    const pane = this.root.getElementById("poem-pane");
    if (pane) pane.textContent = poem ? poem.text : "(unavailable)";
  }
}

export function startConsole(root: Document = document): void {
  const params = new URLSearchParams(root.defaultView!.location.search);
  const base = params.get("url") ?? "";
  void new ConsoleApp(base, root).boot();
}
