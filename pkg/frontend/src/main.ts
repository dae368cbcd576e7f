// Browser wiring: fetch config, render the map, handle form events and
// scenario submissions.  All computation beyond projection lives server-side.

import { ApiError, NetworkError, fetchConfig, postScenario } from "./api";
import {
  FormState,
  buildRequest,
  canSubmit,
  initialForm,
  setEpicenter,
  setSlider,
} from "./form";
import {
  BasemapFeature,
  Viewport,
  basemapFeatures,
  renderMapSvg,
  ringOverlays,
  project,
  unproject,
} from "./map";
import { ScenarioHistory } from "./state";
import type { AppConfig, ScenarioResponse } from "./types";
import { buildResultsModel, renderHistoryHtml, renderResultsHtml } from "./view";

const history = new ScenarioHistory();
let form: FormState;
let config: AppConfig;
let viewport: Viewport;
let basemap: BasemapFeature[] = [];
let lastResponse: ScenarioResponse | null = null;

function el<T extends HTMLElement>(selector: string): T {
  const node = document.querySelector(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node as T;
}

function redrawMap(): void {
  const rings = lastResponse ? ringOverlays(viewport, lastResponse) : [];
  const epicenter = form.epicenter
    ? project(viewport, form.epicenter.lon, form.epicenter.lat)
    : null;
  el("#map-container").innerHTML = renderMapSvg(viewport, basemap, rings, epicenter);
  const svg = el<HTMLElement>("#map-container").querySelector("svg");
  svg?.addEventListener("click", (ev) => {
    const rect = (ev.currentTarget as SVGElement).getBoundingClientRect();
    const [lon, lat] = unproject(viewport, ev.clientX - rect.left, ev.clientY - rect.top);
    form = setEpicenter(form, { lon, lat });
    syncControls();
    redrawMap();
  });
}

function syncControls(): void {
  el<HTMLButtonElement>("#run-button").disabled = !canSubmit(form);
  el("#epicenter-label").textContent = form.epicenter
    ? `${form.epicenter.lon.toFixed(2)}, ${form.epicenter.lat.toFixed(2)}`
    : "click the map";
  el("#status").textContent = form.pending ? "running..." : "";
}

function showError(message: string): void {
  el("#status").textContent = message;
}

async function runScenario(): Promise<void> {
  if (!canSubmit(form)) return;
  const request = buildRequest(form);
  form = { ...form, pending: true };
  syncControls();
  try {
    const response = await postScenario(config.apiBase, request);
    const { diff, rerun } = history.add(request, response);
    lastResponse = response;
    el("#results").innerHTML = renderResultsHtml(buildResultsModel(response));
    el("#history-list").innerHTML = renderHistoryHtml(history.list(), response.request_digest);
    if (rerun && diff.length > 0) {
      showError(`non-deterministic rerun: ${diff.length} differences`);
    }
    redrawMap();
  } catch (err) {
    if (err instanceof ApiError) {
      showError(`${err.code}: ${err.message}`);
    } else if (err instanceof NetworkError) {
      showError("network failure; press Run to retry");
    } else {
      throw err;
    }
  } finally {
    form = { ...form, pending: false };
    syncControls();
  }
}

function renderSliders(): void {
  const container = el("#sliders");
  container.innerHTML = config.zones
    .map((z, i) => {
      const pct = Math.round(z.penetration * 100);
      return (
        `<label>${z.zone} (${z.property_type}) penetration ` +
        `<input type="range" min="0" max="100" value="${pct}" data-slider="${i}"/>` +
        `<span data-slider-value="${i}">${pct}%</span></label>`
      );
    })
    .join("");
  container.querySelectorAll("input[data-slider]").forEach((node) => {
    node.addEventListener("input", (ev) => {
      const input = ev.currentTarget as HTMLInputElement;
      const zone = config.zones[Number(input.dataset["slider"])];
      if (!zone) return;
      const value = Number(input.value) / 100;
      form = setSlider(form, zone.zone, zone.property_type, "penetration", value);
      const label = container.querySelector(`[data-slider-value="${input.dataset["slider"]}"]`);
      if (label) label.textContent = `${input.value}%`;
    });
  });
}

async function boot(): Promise<void> {
  config = await fetchConfig();
  viewport = {
    lonMin: config.window.lonMin,
    lonMax: config.window.lonMax,
    latMin: config.window.latMin,
    latMax: config.window.latMax,
    width: 860,
    height: 520,
  };
  if (config.basemap.csdGeojsonUrl) {
    const response = await fetch(config.basemap.csdGeojsonUrl);
    if (response.ok) {
      basemap = basemapFeatures(viewport, await response.json());
    }
  }
  form = initialForm(config.zones);

  el("#magnitude-mode").addEventListener("change", (ev) => {
    const mode = (ev.currentTarget as HTMLSelectElement).value as "fixed" | "random";
    form = { ...form, magnitudeMode: mode };
    el<HTMLInputElement>("#magnitude-input").disabled = mode === "random";
    syncControls();
  });
  el("#magnitude-input").addEventListener("input", (ev) => {
    form = { ...form, magnitude: Number((ev.currentTarget as HTMLInputElement).value) };
    syncControls();
  });
  el("#seed-input").addEventListener("input", (ev) => {
    form = { ...form, seed: Number((ev.currentTarget as HTMLInputElement).value) };
  });
  el("#run-button").addEventListener("click", () => void runScenario());

  renderSliders();
  syncControls();
  redrawMap();
}

void boot();
