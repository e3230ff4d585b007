/** Thin DOM layer: renders a SessionView and the stats badges into the page. */

import type { StatsResponse } from "./api.js";
import { edgeLines, kappaBadge, nodeRows, pairFor, progressLabel } from "./format.js";
import type { SessionView } from "./state.js";

function el(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found;
}

export function renderSession(view: SessionView, showJudge: boolean): void {
  const banner = el("error-banner");
  banner.textContent = view.lastError ?? "";
  banner.hidden = view.lastError === null;

  const panel = el("triple-panel");
  const doneNote = el("done-note");
  if (view.phase === "done" || !view.current) {
    panel.hidden = true;
    doneNote.hidden = view.phase !== "done";
    if (view.progress) {
      el("progress").textContent = progressLabel(view.progress.done, view.progress.total);
    }
    return;
  }
  panel.hidden = false;
  doneNote.hidden = true;
  const triple = view.current;

  el("triple-key").textContent = triple.key;
  el("subject").textContent = triple.subject ?? "";
  (el("scene-image") as HTMLImageElement).src = triple.image_url;

  const tbody = el("nodes-body");
  tbody.replaceChildren(
    ...nodeRows(triple.scene_graph).map((row) => {
      const tr = document.createElement("tr");
      for (const cell of [row.name, row.state, row.hazard]) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      return tr;
    }),
  );
  el("edges-list").replaceChildren(
    ...edgeLines(triple.scene_graph).map((line) => {
      const li = document.createElement("li");
      li.textContent = line;
      return li;
    }),
  );

  const gt = triple.ground_truth;
  el("gt-label").textContent = gt.classification;
  el("gt-label").className = `badge ${gt.classification === "hazardous" ? "bad" : "good"}`;
  el("gt-count").textContent = String(gt.hazards_count);
  el("gt-chips").replaceChildren(
    ...gt.existing_hazards.map((name) => {
      const chip = document.createElement("span");
      chip.className = "chip";
      chip.textContent = name;
      return chip;
    }),
  );

  const judge = el("judge-verdict");
  judge.textContent = showJudge ? triple.judge_verdict : "hidden";
  judge.parentElement!.hidden = false;

  if (view.progress) {
    el("progress").textContent = progressLabel(view.progress.done, view.progress.total);
  }
  (el("undo-button") as HTMLButtonElement).disabled = !view.canUndo;
}

export function renderStats(stats: StatsResponse, annotator: string): void {
  el("kappa-badge").textContent = kappaBadge(pairFor(stats, annotator));
}
