import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ScenarioHistory, diffResponses } from "../src/state";
import type { ScenarioRequestBody, ScenarioResponse } from "../src/types";

const payload: ScenarioResponse = JSON.parse(
  readFileSync(new URL("./fixtures/scenario_response.json", import.meta.url), "utf-8"),
);
const request: ScenarioRequestBody = JSON.parse(
  readFileSync(new URL("./fixtures/scenario_request.json", import.meta.url), "utf-8"),
);

describe("scenario history", () => {
  it("rerun with the same seed produces an empty diff", () => {
    const history = new ScenarioHistory();
    const first = history.add(request, payload);
    expect(first.rerun).toBe(false);

    const second = history.add(request, structuredClone(payload));
    expect(second.rerun).toBe(true);
    expect(second.diff).toEqual([]);
    expect(history.size).toBe(1);
    expect(history.get(payload.request_digest)?.runCount).toBe(2);
  });

  it("a different response under the same digest surfaces differences", () => {
    const history = new ScenarioHistory();
    history.add(request, payload);
    const altered = structuredClone(payload);
    altered.csd_table[0]!.loss_cents = String(
      BigInt(altered.csd_table[0]!.loss_cents) + 1n,
    );
    const result = history.add(request, altered);
    expect(result.rerun).toBe(true);
    expect(result.diff.length).toBeGreaterThan(0);
    expect(result.diff[0]).toContain("loss_cents");
  });

  it("different digests create separate immutable entries", () => {
    const history = new ScenarioHistory();
    history.add(request, payload);
    const other = structuredClone(payload);
    other.request_digest = "different-digest";
    history.add({ ...request, seed: 12 }, other);
    expect(history.size).toBe(2);
    const entry = history.get(payload.request_digest)!;
    expect(Object.isFrozen(entry)).toBe(true);
    expect(Object.isFrozen(entry.response)).toBe(true);
    expect(Object.isFrozen(entry.response.csd_table)).toBe(true);
  });

  it("diffResponses flags ring-count and province-total changes", () => {
    const altered = structuredClone(payload);
    altered.rings.features = altered.rings.features.slice(1);
    const provinces = Object.keys(altered.province_totals);
    altered.province_totals[provinces[0]!]!.claim_cents = "1";
    const diff = diffResponses(payload, altered);
    expect(diff.some((d) => d.startsWith("rings:"))).toBe(true);
    expect(diff.some((d) => d.includes("totals differ"))).toBe(true);
  });
});
