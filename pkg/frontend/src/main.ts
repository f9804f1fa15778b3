/** Bootstrap: wire the controller, renderer and keyboard handling. */

import { ApiClient } from "./api.js";
import { TriageController } from "./state.js";
import { render } from "./ui.js";

export function bootstrap(root: HTMLElement, api: ApiClient): TriageController {
  const controller = new TriageController(api, {
    onChange: (view) => render(view, root),
  });

  window.addEventListener("keydown", (event: KeyboardEvent) => {
    const target = event.target;
    if (
      target instanceof HTMLInputElement ||
      target instanceof HTMLTextAreaElement ||
      target instanceof HTMLSelectElement
    ) {
      return;
    }
    if (event.ctrlKey || event.metaKey || event.altKey) {
      return;
    }
    if (["a", "r", "u", "h", "l", "n", "p", "arrowleft", "arrowright"].includes(
      event.key.toLowerCase(),
    )) {
      event.preventDefault();
      void controller.handleKey(event.key);
    }
  });

  root.addEventListener("click", (event) => {
    const card = (event.target as HTMLElement).closest<HTMLElement>(".card");
    if (card?.dataset.index) {
      void controller.moveCursorTo(Number(card.dataset.index));
    }
  });

  void controller.load();
  return controller;
}

declare global {
  interface Window {
    synthsetReview?: TriageController;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    window.synthsetReview = bootstrap(root, new ApiClient(""));
  }
}
