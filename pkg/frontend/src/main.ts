/**
 * Browser entry point: binds the explorer controller to a container.
 *
 * Rendering stays a pure function of the view state; this file only
 * pushes the rendered HTML into the container and maps DOM events back
 * to controller calls via data-action attributes.
 */

import { Client } from "./api.js";
import { Explorer } from "./controller.js";
import { render } from "./render.js";
import type { Loss } from "./schemas.js";

const DEFAULT_BASE = "http://127.0.0.1:8000";

function lossFromDataset(el: HTMLElement): Loss {
  const kind = el.dataset.loss;
  switch (kind) {
    case "kfwer":
      return { kind, k: Number(el.dataset.k ?? 1) };
    case "fdx":
      return { kind, gamma: Number(el.dataset.gamma ?? 0.1) };
    case "pfer":
    case "aer":
    case "fdp":
      return { kind };
    default:
      throw new Error(`unknown loss tab ${kind}`);
  }
}

export function boot(container: HTMLElement): void {
  let explorer = new Explorer(new Client(DEFAULT_BASE), (state) => {
    container.innerHTML = render(state);
  });
  container.innerHTML = render(explorer.getState());

  const restart = (base: string): Explorer => {
    explorer = new Explorer(new Client(base), (state) => {
      container.innerHTML = render(state);
    });
    return explorer;
  };

  container.addEventListener("submit", (event) => {
    const form = event.target;
    if (!(form instanceof HTMLFormElement)) return;
    event.preventDefault();
    const data = new FormData(form);
    const base = String(data.get("base") ?? "").trim() || DEFAULT_BASE;
    if (form.dataset.form === "create") {
      const values = String(data.get("values") ?? "")
        .split(",")
        .map((t) => t.trim())
        .filter((t) => t.length > 0)
        .map(Number);
      const lambdaRaw = String(data.get("lambda") ?? "").trim();
      void restart(base).create({
        method: String(data.get("method") ?? "closed-ebh"),
        values,
        alpha: Number(data.get("alpha") ?? 0.05),
        ...(lambdaRaw ? { lambda: Number(lambdaRaw) } : {}),
      });
    } else if (form.dataset.form === "open") {
      void restart(base).load(String(data.get("session") ?? "").trim());
    }
  });

  container.addEventListener("click", (event) => {
    if (!(event.target instanceof HTMLElement)) return;
    const el = event.target.closest<HTMLElement>("[data-action]");
    if (el === null) return;
    switch (el.dataset.action) {
      case "loss-tab":
        void explorer.setLossTab(lossFromDataset(el));
        break;
      case "adopt-suggestion":
        void explorer.adoptSuggestion();
        break;
      case "finalize":
        void explorer.finalize();
        break;
    }
  });

  container.addEventListener("change", (event) => {
    const el = event.target;
    if (!(el instanceof HTMLInputElement)) return;
    if (el.dataset.action === "toggle") {
      void explorer.toggle(Number(el.dataset.index));
    } else if (el.dataset.action === "alpha") {
      void explorer.slideAlpha(Number(el.value));
    }
  });
}

const app = typeof document !== "undefined" ? document.getElementById("app") : null;
if (app !== null) {
  boot(app);
}
