// Result rendering models.  Every number displayed is lifted verbatim from
// the API payload; the client never recomputes losses or claims.

import { centsToCad, formatFraction } from "./format";
import type { ScenarioResponse } from "./types";

export interface TableRowModel {
  csd_id: string;
  province: string;
  mmi: number;
  fraction: string;
  exposure: string; // formatted from the payload's cent strings
  loss: string;
  claim: string;
  loss_cents: string; // raw payload strings kept for exact comparisons
  claim_cents: string;
}

export interface ProvinceTotalModel {
  province: string;
  loss: string;
  claim: string;
  loss_cents: string;
  claim_cents: string;
}

export interface ResultsModel {
  digest: string;
  eventSummary: string;
  ringCount: number;
  rows: TableRowModel[];
  provinceTotals: ProvinceTotalModel[];
}

export function buildResultsModel(response: ScenarioResponse): ResultsModel {
  const rows = response.csd_table.map((r) => ({
    csd_id: r.csd_id,
    province: r.province,
    mmi: r.mmi,
    fraction: formatFraction(r.area_fraction),
    exposure: centsToCad(r.exposure_cents),
    loss: centsToCad(r.loss_cents),
    claim: centsToCad(r.claim_cents),
    loss_cents: r.loss_cents,
    claim_cents: r.claim_cents,
  }));
  const provinceTotals = Object.entries(response.province_totals)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([province, totals]) => ({
      province,
      loss: centsToCad(totals.loss_cents),
      claim: centsToCad(totals.claim_cents),
      loss_cents: totals.loss_cents,
      claim_cents: totals.claim_cents,
    }));
  const e = response.event;
  return {
    digest: response.request_digest,
    eventSummary:
      `M ${e.magnitude.toFixed(2)} at (${e.epicenter.lon.toFixed(2)}, ` +
      `${e.epicenter.lat.toFixed(2)}) MMI ${e.mmi_epicenter.toFixed(1)} ` +
      `(${e.east ? "east" : "west"})`,
    ringCount: response.rings.features.length,
    rows,
    provinceTotals,
  };
}

export function renderResultsHtml(model: ResultsModel): string {
  const header =
    "<tr><th>CSD</th><th>Province</th><th>MMI</th><th>Affected</th>" +
    "<th>Exposure</th><th>Loss</th><th>Claim</th></tr>";
  const rows = model.rows
    .map(
      (r) =>
        `<tr data-csd="${r.csd_id}"><td>${r.csd_id}</td><td>${r.province}</td>` +
        `<td>${r.mmi}</td><td>${r.fraction}</td><td>${r.exposure}</td>` +
        `<td data-cents="${r.loss_cents}">${r.loss}</td>` +
        `<td data-cents="${r.claim_cents}">${r.claim}</td></tr>`,
    )
    .join("");
  const totals = model.provinceTotals
    .map(
      (t) =>
        `<tr data-province="${t.province}"><td>${t.province}</td>` +
        `<td data-cents="${t.loss_cents}">${t.loss}</td>` +
        `<td data-cents="${t.claim_cents}">${t.claim}</td></tr>`,
    )
    .join("");
  return (
    `<div class="event-summary">${model.eventSummary} | rings: ${model.ringCount}</div>` +
    `<table class="csd-table">${header}${rows}</table>` +
    `<table class="province-totals"><tr><th>Province</th><th>Loss</th><th>Claim</th></tr>${totals}</table>`
  );
}

export function renderHistoryHtml(
  entries: { digest: string; runCount: number }[],
  activeDigest: string | null,
): string {
  return entries
    .map(
      (e) =>
        `<li data-digest="${e.digest}" class="${e.digest === activeDigest ? "active" : ""}">` +
        `${e.digest.slice(0, 10)} (x${e.runCount})</li>`,
    )
    .join("");
}
