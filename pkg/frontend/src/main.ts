// DOM bootstrap: wires the controller to the page and the keyboard.
// Everything testable lives in the modules this file glues together.

import { httpClient } from "./api.js";
import { Controller } from "./controller.js";
import { render } from "./render.js";
import type { Score } from "./types.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
const mount = root;

let controller = new Controller(
  { loadSession: () => Promise.reject(new Error("not signed in")), submitRating: () => Promise.reject(new Error("not signed in")) },
  (state) => {
    mount.innerHTML = render(state);
  },
);
mount.innerHTML = render(controller.getState());

function signIn(annotator: string, token: string): void {
  // the API lives at the origin root; the bundle is served under /ui
  controller = new Controller(httpClient("", token), (state) => {
    mount.innerHTML = render(state);
  });
  void controller.start(annotator);
}

mount.addEventListener("submit", (event) => {
  const form = event.target;
  if (!(form instanceof HTMLFormElement) || form.dataset.action !== "login") return;
  event.preventDefault();
  const data = new FormData(form);
  signIn(String(data.get("annotator") ?? ""), String(data.get("token") ?? ""));
});

mount.addEventListener("click", (event) => {
  const target = event.target;
  if (!(target instanceof HTMLElement)) return;
  if (target.dataset.action === "retry") {
    void controller.retry();
    return;
  }
  const score = target.dataset.score;
  if (score !== undefined) {
    void controller.rate(Number(score) as Score);
  }
});

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (["1", "2", "3", "4", "5"].includes(event.key)) {
    void controller.rate(Number(event.key) as Score);
  }
});

window.addEventListener("online", () => {
  void controller.retry();
});
