import { describe, expect, it } from "vitest";
import { ApiClient, Region, Verdict } from "./api.js";
import { GalleryState, nextVerdict } from "./state.js";

function region(rank: number, verdict: Verdict = "unlabeled"): Region {
  return { rank, score: 1 - rank / 100, box: [0, 0, 48, 48], image_id: "im", verdict };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function clientWith(
  regions: Region[],
  labelStatus = 200,
): { api: ApiClient; posts: Array<{ rank: number; verdict: Verdict }> } {
  const posts: Array<{ rank: number; verdict: Verdict }> = [];
  const api = new ApiClient("", async (url, init) => {
    if (url.startsWith("/regions")) {
      return jsonResponse({ run: "r", mode: "missing", regions });
    }
    if (url.startsWith("/labels")) {
      const body = JSON.parse(String(init?.body));
      posts.push(body);
      return labelStatus === 200
        ? jsonResponse({ run: "r", ...body })
        : jsonResponse({ detail: "bad" }, labelStatus);
    }
    throw new Error(`unexpected ${url}`);
  });
  return { api, posts };
}

describe("nextVerdict", () => {
  it("cycles unlabeled -> true -> false -> unlabeled", () => {
    expect(nextVerdict("unlabeled")).toBe("true");
    expect(nextVerdict("true")).toBe("false");
    expect(nextVerdict("false")).toBe("unlabeled");
  });

  it("three applications return to the start", () => {
    const start: Verdict = "unlabeled";
    expect(nextVerdict(nextVerdict(nextVerdict(start)))).toBe(start);
  });
});

describe("GalleryState.loadRun", () => {
  it("orders regions by server rank even if the payload is shuffled", async () => {
    const { api } = clientWith([region(3), region(1), region(2)]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    expect(state.regions.map((r) => r.rank)).toEqual([1, 2, 3]);
    expect(state.cursor).toBe(0);
  });

  it("empty run leaves cursor unset", async () => {
    const { api } = clientWith([]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    expect(state.regions).toEqual([]);
    expect(state.cursor).toBe(-1);
  });

  it("reload keeps server-side verdicts", async () => {
    const { api } = clientWith([region(1, "true"), region(2, "false")]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    expect(state.regionAt(1)?.verdict).toBe("true");
    expect(state.regionAt(2)?.verdict).toBe("false");
  });
});

describe("GalleryState.toggle", () => {
  it("posts the cycled verdict and keeps it on success", async () => {
    const { api, posts } = clientWith([region(1)]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    await state.toggle(1);
    expect(posts).toEqual([{ rank: 1, verdict: "true" }]);
    expect(state.regionAt(1)?.verdict).toBe("true");
  });

  it("reverts the optimistic update when the POST is rejected", async () => {
    const { api } = clientWith([region(1, "true")], 400);
    const seen: Array<[number, Verdict]> = [];
    const errors: string[] = [];
    const state = new GalleryState(api, {
      onVerdictChanged: (rank, v) => seen.push([rank, v]),
      onError: (m) => errors.push(m),
    });
    await state.loadRun("r");
    await state.toggle(1);
    expect(state.regionAt(1)?.verdict).toBe("true");
    expect(seen).toEqual([
      [1, "false"],
      [1, "true"],
    ]);
    expect(errors).toHaveLength(1);
  });

  it("unknown rank is a no-op", async () => {
    const { api, posts } = clientWith([region(1)]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    await state.toggle(99);
    expect(posts).toEqual([]);
  });
});

describe("GalleryState cursor", () => {
  it("moves within bounds and toggles at the cursor", async () => {
    const { api, posts } = clientWith([region(1), region(2), region(3)]);
    const state = new GalleryState(api);
    await state.loadRun("r");
    state.moveCursor(1);
    state.moveCursor(10); // clamped to the last region
    expect(state.cursor).toBe(2);
    state.moveCursor(-10);
    expect(state.cursor).toBe(0);
    await state.toggleAtCursor();
    expect(posts).toEqual([{ rank: 1, verdict: "true" }]);
  });
});
