import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import {
  clampSlider,
  flaggedItems,
  flaggedSatisfyThreshold,
  initialSearchState,
  openExplanation,
  runSearch,
  setSlider,
} from "../src/search";
import { MockService, unreachableFetch } from "./mock_service";

function anonClient(mock: MockService): ApiClient {
  return new ApiClient({ baseUrl: "http://mock", moderatorToken: null }, mock.fetch);
}

function modClient(mock: MockService): ApiClient {
  return new ApiClient({ baseUrl: "http://mock", moderatorToken: "mod-a" }, mock.fetch);
}

describe("threshold slider", () => {
  it("clamps to the allowed band", () => {
    expect(clampSlider(0.0)).toBe(0.05);
    expect(clampSlider(1.0)).toBe(0.95);
    expect(clampSlider(0.5)).toBe(0.5);
    expect(clampSlider(Number.NaN)).toBe(0.05);
  });

  it("slider change re-fetches examples and results at the new cutoff", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await setSlider(state, anonClient(mock), 0.7);
    const exampleCalls = mock.requests.filter((r) => r.path === "/examples");
    const searchCalls = mock.requests.filter((r) => r.path === "/search");
    expect(exampleCalls).toHaveLength(1);
    expect(searchCalls).toHaveLength(1);
    expect(exampleCalls[0].query.get("threshold")).toBe("0.7");
    expect(searchCalls[0].query.get("threshold")).toBe("0.7");
    expect(state.examples?.threshold).toBe(0.7);
  });

  it("every rendered flagged item satisfies p >= theta per payload", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    for (const theta of [0.05, 0.5, 0.61, 0.9]) {
      await setSlider(state, anonClient(mock), theta);
      expect(flaggedSatisfyThreshold(state)).toBe(true);
      for (const item of flaggedItems(state)) {
        for (const cat of item.flags) {
          expect(item.probabilities[cat]).toBeGreaterThanOrEqual(theta);
        }
      }
    }
  });

  it("raising the cutoff shrinks the example strip (subset of payloads)", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await setSlider(state, anonClient(mock), 0.5);
    const wide = new Set(state.examples!.examples.map((e) => e.thing_id));
    await setSlider(state, anonClient(mock), 0.9);
    const narrow = state.examples!.examples.map((e) => e.thing_id);
    expect(narrow.length).toBeLessThanOrEqual(wide.size);
    for (const id of narrow) {
      expect(wide.has(id)).toBe(true);
    }
  });
});

describe("explanation popover", () => {
  it("passes attributions and moderator rationales through verbatim", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await openExplanation(state, anonClient(mock), "sim-p0000");
    const payload = state.popover!.payload;
    expect(payload.prediction.attributions.sexual_suggestive).toEqual([
      ["text:lingerie", 1.9312],
      ["img:hist:302", 1.2048],
      ["text:figurine", -0.3355],
    ]);
    expect(payload.annotations[0].rationale).toBe("visible nipple outline on the torso");
  });
});

describe("consent gate visibility", () => {
  it("blocked items are absent for end users", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await runSearch(state, anonClient(mock));
    const ids = state.results!.items.map((i) => i.thing_id);
    expect(ids).not.toContain("scan-block");
  });

  it("moderators see the blocked item with its reason", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await runSearch(state, modClient(mock));
    const blocked = state.results!.items.find((i) => i.thing_id === "scan-block");
    expect(blocked).toBeDefined();
    expect(blocked!.gate.status).toBe("blocked");
    expect(blocked!.gate.reason).toBe("CONSENT_MISSING");
    expect(blocked!.gate.explanation.length).toBeGreaterThan(0);
  });
});

describe("failure handling", () => {
  it("network failures keep what is already on screen", async () => {
    const mock = new MockService();
    const state = initialSearchState();
    await setSlider(state, anonClient(mock), 0.5);
    const hadResults = state.results;
    const hadExamples = state.examples;
    expect(hadResults).not.toBeNull();

    const offline = new ApiClient({ baseUrl: "http://mock", moderatorToken: null }, unreachableFetch);
    await setSlider(state, offline, 0.8);
    expect(state.error).toContain("network_error");
    expect(state.results).toBe(hadResults);
    expect(state.examples).toBe(hadExamples);
    // the slider itself still moved; recovery re-fetches at the new value
    expect(state.slider).toBe(0.8);
  });
});
