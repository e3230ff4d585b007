import { describe, expect, it } from "vitest";

import type { QueueResponse, ReviewApi, SubmitResult, TripleBundle } from "../src/api.js";
import { ReviewSession } from "../src/state.js";
import { FakeReviewServer } from "./fake_server.js";

function apiOver(server: FakeReviewServer): ReviewApi {
  return {
    queue: async (annotator: string) => server.queue(annotator),
    triple: async (key: string) => server.triple(key),
    submit: async (annotator: string, key: string, aligned: boolean, reason?: string) =>
      server.submit(annotator, key, aligned, reason),
    stats: async () => server.stats(),
  } as unknown as ReviewApi;
}

describe("ReviewSession", () => {
  it("serves the queue in stable order and advances on submit", async () => {
    const server = new FakeReviewServer(3);
    const session = new ReviewSession(apiOver(server), "alice");
    let view = await session.loadNext();
    expect(view.phase).toBe("reviewing");
    expect(view.current?.key).toBe(server.keys[0]);
    view = await session.submit(true);
    expect(view.current?.key).toBe(server.keys[1]);
    expect(view.progress).toEqual({ done: 1, total: 3 });
  });

  it("reaches the done phase when every triple is labeled", async () => {
    const server = new FakeReviewServer(2);
    const session = new ReviewSession(apiOver(server), "alice");
    await session.loadNext();
    await session.submit(true);
    const view = await session.submit(false);
    expect(view.phase).toBe("done");
    expect(view.current).toBeNull();
    expect(view.progress).toEqual({ done: 2, total: 2 });
  });

  it("undo re-serves the prior triple and a resubmission overwrites", async () => {
    const server = new FakeReviewServer(2);
    const session = new ReviewSession(apiOver(server), "alice");
    await session.loadNext();
    const firstKey = session.view().current!.key;
    await session.submit(true);
    expect(session.view().canUndo).toBe(true);
    const view = await session.undo();
    expect(view.current?.key).toBe(firstKey);
    const result = await apiOver(server).submit("alice", firstKey, false);
    expect(result.history_length).toBe(2);
  });

  it("undo on an empty stack is a no-op", async () => {
    const server = new FakeReviewServer(1);
    const session = new ReviewSession(apiOver(server), "alice");
    await session.loadNext();
    const before = session.view();
    const after = await session.undo();
    expect(after.current?.key).toBe(before.current?.key);
    expect(after.canUndo).toBe(false);
  });

  it("a failed submit surfaces a banner error and does not advance", async () => {
    const server = new FakeReviewServer(2);
    const flaky = {
      queue: async (annotator: string): Promise<QueueResponse> => server.queue(annotator),
      triple: async (key: string): Promise<TripleBundle> => server.triple(key),
      submit: async (): Promise<SubmitResult> => {
        throw new Error("network down");
      },
      stats: async () => server.stats(),
    } as unknown as ReviewApi;
    const session = new ReviewSession(flaky, "alice");
    await session.loadNext();
    const firstKey = session.view().current!.key;
    const view = await session.submit(true);
    expect(view.lastError).toContain("network down");
    expect(view.current?.key).toBe(firstKey);
    expect(view.canUndo).toBe(false);
  });
});
