// Payload types mirroring the scenario API (JSON schemas of the service).
// Monetary fields are strings of integer cents; the client never does
// arithmetic on them beyond display formatting.

export interface Epicenter {
  lon: number;
  lat: number;
}

export interface TermsOverride {
  zone: string;
  property_type: "residential" | "commercial_industrial";
  penetration: number;
  deductible: number;
  limit: number;
}

export interface ScenarioRequestBody {
  epicenter: Epicenter;
  magnitude: number | null; // null => random draw server-side
  seed: number;
  insurance_overrides: TermsOverride[];
}

export interface RingProperties {
  mmi_level: number;
  outer_km: number;
  inner_km: number;
}

export interface RingFeature {
  type: "Feature";
  properties: RingProperties;
  geometry: {
    type: "Polygon" | "MultiPolygon";
    coordinates: number[][][] | number[][][][];
  };
}

export interface CsdRow {
  csd_id: string;
  province: string;
  mmi: number;
  area_fraction: number;
  exposure_cents: string;
  loss_cents: string;
  claim_cents: string;
}

export interface ProvinceTotals {
  loss_cents: string;
  claim_cents: string;
}

export interface ScenarioResponse {
  request_digest: string;
  event: {
    epicenter: Epicenter;
    east: boolean;
    magnitude: number;
    mmi_epicenter: number;
    pga_cm_s2: number;
    n_rings: number;
  };
  rings: { type: "FeatureCollection"; features: RingFeature[] };
  csd_table: CsdRow[];
  province_totals: Record<string, ProvinceTotals>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: unknown;
}

export interface ZoneSliderConfig {
  zone: string;
  property_type: "residential" | "commercial_industrial";
  penetration: number;
  deductible: number;
  limit: number;
}

export interface AppConfig {
  apiBase: string;
  window: { lonMin: number; lonMax: number; latMin: number; latMax: number };
  zones: ZoneSliderConfig[];
  basemap: { csdGeojsonUrl: string | null };
}
