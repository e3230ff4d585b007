import { describe, expect, it } from "vitest";

import { edgeLines, kappaBadge, nodeRows, pairFor, progressLabel } from "../src/format.js";

const GRAPH = {
  nodes: [
    { object_name: "dewar", attributes: { State: "sealed", Hazard: "pressure" } },
    { object_name: "rack", attributes: { State: "upright" } },
  ],
  relationships: [{ subject: "dewar", predicate: "near", object: "rack" }],
};

describe("render models", () => {
  it("builds node rows with a placeholder for missing Hazard", () => {
    const rows = nodeRows(GRAPH);
    expect(rows[0]).toEqual({ name: "dewar", state: "sealed", hazard: "pressure" });
    expect(rows[1]!.hazard).toBe("—");
  });

  it("formats relationship triples as arrows", () => {
    expect(edgeLines(GRAPH)).toEqual(["dewar —near→ rack"]);
  });

  it("kappa badge handles unavailable and available cases", () => {
    expect(kappaBadge(undefined)).toBe("κ n/a");
    expect(kappaBadge({ annotators: ["a", "b"], shared_items: 0, kappa: null })).toBe("κ n/a");
    expect(kappaBadge({ annotators: ["a", "b"], shared_items: 6, kappa: 1 })).toBe(
      "κ 1.00 (6 shared)",
    );
  });

  it("progress label covers the empty store", () => {
    expect(progressLabel(0, 0)).toBe("nothing to review");
    expect(progressLabel(2, 5)).toBe("2 / 5 reviewed");
  });

  it("finds the pair involving the session annotator", () => {
    const stats = {
      total: 5,
      annotators: { a: { completed: 1 }, b: { completed: 1 } },
      pairs: [{ annotators: ["a", "b"], shared_items: 1, kappa: 1 }],
    };
    expect(pairFor(stats, "b")?.annotators).toEqual(["a", "b"]);
    expect(pairFor(stats, "c")).toBeUndefined();
  });
});
