// Offline SVG basemap: window frame, CSD outlines, click-to-place epicenter
// and ring overlays colored by MMI level.  No tile server involved; a raster
// tile URL can replace the backdrop at build time without touching this
// geometry code.

import type { RingFeature, ScenarioResponse } from "./types";

export interface Viewport {
  lonMin: number;
  lonMax: number;
  latMin: number;
  latMax: number;
  width: number;
  height: number;
}

export interface RingShape {
  level: number;
  path: string;
  color: string;
}

const MMI_COLORS: Record<number, string> = {
  6: "#fee08b",
  7: "#fdae61",
  8: "#f46d43",
  9: "#d73027",
  10: "#a50026",
  11: "#7f0000",
  12: "#4a0000",
};

export function mmiColor(level: number): string {
  return MMI_COLORS[Math.min(12, Math.max(6, Math.round(level)))] ?? "#cccccc";
}

export function project(v: Viewport, lon: number, lat: number): [number, number] {
  const x = ((lon - v.lonMin) / (v.lonMax - v.lonMin)) * v.width;
  const y = v.height - ((lat - v.latMin) / (v.latMax - v.latMin)) * v.height;
  return [x, y];
}

export function unproject(v: Viewport, x: number, y: number): [number, number] {
  const lon = v.lonMin + (x / v.width) * (v.lonMax - v.lonMin);
  const lat = v.latMin + ((v.height - y) / v.height) * (v.latMax - v.latMin);
  return [lon, lat];
}

function ringPath(v: Viewport, coordinates: number[][][]): string {
  return coordinates
    .map((ring) => {
      const pts = ring.map(([lon, lat]) => project(v, lon as number, lat as number));
      return `M${pts.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join("L")}Z`;
    })
    .join("");
}

export function polygonPath(
  v: Viewport,
  geometry: { type: string; coordinates: unknown },
): string {
  if (geometry.type === "Polygon") {
    return ringPath(v, geometry.coordinates as number[][][]);
  }
  return (geometry.coordinates as number[][][][]).map((part) => ringPath(v, part)).join("");
}

export function ringOverlays(v: Viewport, response: ScenarioResponse): RingShape[] {
  // one rendered shape per ring feature, ordered widest first so narrower
  // high-MMI rings paint on top
  const features = [...response.rings.features].sort(
    (a, b) => b.properties.outer_km - a.properties.outer_km,
  );
  return features.map((f: RingFeature) => ({
    level: f.properties.mmi_level,
    path: polygonPath(v, f.geometry),
    color: mmiColor(f.properties.mmi_level),
  }));
}

export interface BasemapFeature {
  id: string;
  province: string;
  path: string;
}

export function basemapFeatures(
  v: Viewport,
  collection: { features: { properties: Record<string, unknown>; geometry: { type: string; coordinates: unknown } }[] },
): BasemapFeature[] {
  return collection.features.map((f) => ({
    id: String(f.properties["csd_id"] ?? ""),
    province: String(f.properties["province"] ?? ""),
    path: polygonPath(v, f.geometry),
  }));
}

export function renderMapSvg(
  v: Viewport,
  basemap: BasemapFeature[],
  rings: RingShape[],
  epicenter: [number, number] | null,
): string {
  const parts: string[] = [];
  parts.push(
    `<svg viewBox="0 0 ${v.width} ${v.height}" width="${v.width}" height="${v.height}" data-role="map">`,
  );
  parts.push(`<rect x="0" y="0" width="${v.width}" height="${v.height}" fill="#eef4f8"/>`);
  for (const f of basemap) {
    parts.push(
      `<path d="${f.path}" data-csd="${f.id}" fill="#dde7dd" stroke="#8aa08a" stroke-width="0.5"/>`,
    );
  }
  for (const r of rings) {
    parts.push(
      `<path d="${r.path}" data-ring-level="${r.level}" fill="${r.color}" fill-opacity="0.35" stroke="${r.color}" stroke-width="1"/>`,
    );
  }
  if (epicenter) {
    const [x, y] = epicenter;
    parts.push(
      `<circle cx="${x.toFixed(2)}" cy="${y.toFixed(2)}" r="5" data-role="epicenter" fill="#1b6ef3" stroke="white" stroke-width="2"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

export function countRenderedRings(svg: string): number {
  return (svg.match(/data-ring-level=/g) ?? []).length;
}
