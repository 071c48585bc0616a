// Kiosk renderer: paints the DisplayModel into the page on an animation
// loop. Dark background suits the two-way glass; the standby glyph shows
// whenever the gateway link is down.

import { applyEvent, connectionChanged, DisplayModel, faded, initialModel, view } from "./display.js";
import { EventStream } from "./stream.js";

export interface DisplayElements {
  overlay: HTMLElement; // poem container
  standby: HTMLElement; // shown when not live
}

export class DisplayApp {
  model: DisplayModel = initialModel();
  private els: DisplayElements;
  private now: () => number;

  constructor(els: DisplayElements, now: () => number = () => performance.now()) {
    this.els = els;
    this.now = now;
  }

  handleEvent(event: Parameters<typeof applyEvent>[1]): void {
    this.model = applyEvent(this.model, event, this.now());
    this.render();
  }

  handleConnection(state: "connecting" | "live" | "standby"): void {
    this.model = connectionChanged(this.model, state);
    this.render();
  }

  render(): void {
    const t = this.now();
    const v = view(this.model, t);
    this.els.standby.style.display = v.standby ? "block" : "none";
    if (v.lines.length === 0 || (this.model.clearedAt !== null && faded(this.model, t))) {
      this.els.overlay.style.opacity = "0";
      this.els.overlay.replaceChildren();
      return;
    }
    this.els.overlay.style.opacity = v.opacity.toFixed(3);
    this.els.overlay.style.fontSize = `${(4 * v.fontScale).toFixed(2)}vh`;
    this.els.overlay.replaceChildren(
      ...v.lines.map((line) => {
        const el = document.createElement("div");
        el.className = "poem-line";
        el.textContent = line || " ";
        return el;
      }),
    );
  }
}

export function startDisplay(root: Document = document): void {
  const overlay = root.getElementById("poem")!;
  const standby = root.getElementById("standby")!;
  const app = new DisplayApp({ overlay, standby });
  const params = new URLSearchParams(root.defaultView!.location.search);
  const base = params.get("url") ?? `ws://${root.defaultView!.location.host}`;
  const wsUrl = base.replace(/^http/, "ws").replace(/\/$/, "") + "/events";
  const stream = new EventStream(wsUrl, {
    onEvent: (e) => app.handleEvent(e),
    onConnection: (s) => app.handleConnection(s),
  });
  stream.connect();
  const tick = () => {
    app.render(); // fades advance with the clock, not just with events
    root.defaultView!.requestAnimationFrame(tick);
  };
  root.defaultView!.requestAnimationFrame(tick);
}
