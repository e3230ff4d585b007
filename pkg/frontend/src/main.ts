/** Bootstrap: annotator prompt, keyboard bindings (a / n / u), stats polling. */

import { ReviewApi } from "./api.js";
import { ReviewSession } from "./state.js";
import { renderSession, renderStats } from "./view.js";

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  let annotator = params.get("annotator") ?? "";
  while (!annotator) {
    annotator = window.prompt("Annotator id:")?.trim() ?? "";
  }

  const api = new ReviewApi("");
  const session = new ReviewSession(api, annotator);
  let showJudge = false;

  const refreshStats = async () => {
    try {
      renderStats(await api.stats(), annotator);
    } catch {
      // the stats badge is best-effort; submitting keeps working without it
    }
  };

  const paint = () => renderSession(session.view(), showJudge);

  const act = async (action: () => Promise<unknown>) => {
    await action();
    paint();
    void refreshStats();
  };

  document.getElementById("aligned-button")?.addEventListener("click", () => {
    void act(() => session.submit(true));
  });
  document.getElementById("not-aligned-button")?.addEventListener("click", () => {
    void act(() => session.submit(false));
  });
  document.getElementById("undo-button")?.addEventListener("click", () => {
    void act(() => session.undo());
  });
  document.getElementById("judge-toggle")?.addEventListener("change", (event) => {
    showJudge = (event.target as HTMLInputElement).checked;
    paint();
  });

  window.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) {
      return;
    }
    if (event.key === "a") {
      void act(() => session.submit(true));
    } else if (event.key === "n") {
      void act(() => session.submit(false));
    } else if (event.key === "u") {
      void act(() => session.undo());
    }
  });

  await act(() => session.loadNext());
  setInterval(() => void refreshStats(), 5000);
}

void start();
