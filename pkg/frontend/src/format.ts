/** Pure render-model helpers: tables and badges as data, no DOM. */

import type { PairStats, SceneGraph, StatsResponse } from "./api.js";

export interface NodeRow {
  name: string;
  state: string;
  hazard: string;
}

/** Rows for the nodes table; a missing Hazard column renders as an em space. */
export function nodeRows(graph: SceneGraph): NodeRow[] {
  return graph.nodes.map((node) => ({
    name: node.object_name,
    state: node.attributes["State"] ?? "",
    hazard: node.attributes["Hazard"] ?? "—",
  }));
}

/** Relationship triples as "subject --predicate--> object" lines. */
export function edgeLines(graph: SceneGraph): string[] {
  return graph.relationships.map(
    (edge) => `${edge.subject} —${edge.predicate}→ ${edge.object}`,
  );
}

export function kappaBadge(pair: PairStats | undefined): string {
  if (!pair || pair.kappa === null || pair.shared_items === 0) {
    return "κ n/a";
  }
  return `κ ${pair.kappa.toFixed(2)} (${pair.shared_items} shared)`;
}

export function progressLabel(done: number, total: number): string {
  return total === 0 ? "nothing to review" : `${done} / ${total} reviewed`;
}

/** First pair involving the given annotator, for the live badge. */
export function pairFor(stats: StatsResponse, annotator: string): PairStats | undefined {
  return stats.pairs.find((pair) => pair.annotators.includes(annotator));
}
