// Scenario history: immutable snapshots keyed by the server's request digest.

import type { ScenarioRequestBody, ScenarioResponse } from "./types";

export interface HistoryEntry {
  digest: string;
  request: ScenarioRequestBody;
  response: ScenarioResponse;
  runCount: number;
}

export interface AddResult {
  entry: HistoryEntry;
  rerun: boolean;
  diff: string[]; // field-level differences vs the stored snapshot (empty on identical rerun)
}

export function diffResponses(a: ScenarioResponse, b: ScenarioResponse): string[] {
  const diffs: string[] = [];
  if (a.rings.features.length !== b.rings.features.length) {
    diffs.push(`rings: ${a.rings.features.length} != ${b.rings.features.length}`);
  }
  const rowsA = new Map(a.csd_table.map((r) => [r.csd_id, r]));
  const rowsB = new Map(b.csd_table.map((r) => [r.csd_id, r]));
  for (const [csd, ra] of rowsA) {
    const rb = rowsB.get(csd);
    if (!rb) {
      diffs.push(`csd ${csd}: missing`);
      continue;
    }
    // string-cent comparison, never numeric
    for (const field of ["loss_cents", "claim_cents", "exposure_cents"] as const) {
      if (ra[field] !== rb[field]) {
        diffs.push(`csd ${csd}.${field}: ${ra[field]} != ${rb[field]}`);
      }
    }
    if (ra.mmi !== rb.mmi) {
      diffs.push(`csd ${csd}.mmi: ${ra.mmi} != ${rb.mmi}`);
    }
  }
  for (const csd of rowsB.keys()) {
    if (!rowsA.has(csd)) {
      diffs.push(`csd ${csd}: added`);
    }
  }
  const provs = new Set([...Object.keys(a.province_totals), ...Object.keys(b.province_totals)]);
  for (const prov of provs) {
    const ta = a.province_totals[prov];
    const tb = b.province_totals[prov];
    if (!ta || !tb) {
      diffs.push(`province ${prov}: missing`);
      continue;
    }
    if (ta.loss_cents !== tb.loss_cents || ta.claim_cents !== tb.claim_cents) {
      diffs.push(`province ${prov}: totals differ`);
    }
  }
  return diffs;
}

export class ScenarioHistory {
  private entries = new Map<string, HistoryEntry>();
  private order: string[] = [];

  add(request: ScenarioRequestBody, response: ScenarioResponse): AddResult {
    const digest = response.request_digest;
    const existing = this.entries.get(digest);
    if (existing) {
      const diff = diffResponses(existing.response, response);
      const entry: HistoryEntry = { ...existing, runCount: existing.runCount + 1 };
      this.entries.set(digest, Object.freeze(entry));
      return { entry, rerun: true, diff };
    }
    const entry: HistoryEntry = Object.freeze({
      digest,
      request: deepFreeze(structuredClone(request)),
      response: deepFreeze(structuredClone(response)),
      runCount: 1,
    });
    this.entries.set(digest, entry);
    this.order.push(digest);
    return { entry, rerun: false, diff: [] };
  }

  list(): HistoryEntry[] {
    return this.order.map((d) => this.entries.get(d) as HistoryEntry);
  }

  get(digest: string): HistoryEntry | undefined {
    return this.entries.get(digest);
  }

  get size(): number {
    return this.order.length;
  }
}

function deepFreeze<T>(value: T): T {
  if (value && typeof value === "object") {
    for (const key of Object.keys(value as object)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
    Object.freeze(value);
  }
  return value;
}
