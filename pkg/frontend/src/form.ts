import type { Epicenter, ScenarioRequestBody, TermsOverride, ZoneSliderConfig } from "./types";

export type MagnitudeMode = "fixed" | "random";

export interface FormState {
  epicenter: Epicenter | null;
  magnitudeMode: MagnitudeMode;
  magnitude: number;
  seed: number;
  overrides: Map<string, TermsOverride>;
  pending: boolean; // one in-flight scenario request at a time
}

export function initialForm(zones: ZoneSliderConfig[]): FormState {
  const overrides = new Map<string, TermsOverride>();
  for (const z of zones) {
    overrides.set(overrideKey(z.zone, z.property_type), { ...z });
  }
  return {
    epicenter: null,
    magnitudeMode: "fixed",
    magnitude: 7.0,
    seed: 1,
    overrides,
    pending: false,
  };
}

export function overrideKey(zone: string, propertyType: string): string {
  return `${zone}|${propertyType}`;
}

export function setEpicenter(state: FormState, epicenter: Epicenter): FormState {
  return { ...state, epicenter };
}

export function setSlider(
  state: FormState,
  zone: string,
  propertyType: "residential" | "commercial_industrial",
  field: "penetration" | "deductible" | "limit",
  value: number,
): FormState {
  const key = overrideKey(zone, propertyType);
  const current = state.overrides.get(key);
  if (!current) {
    throw new Error(`unknown zone ${key}`);
  }
  const overrides = new Map(state.overrides);
  overrides.set(key, { ...current, [field]: value });
  return { ...state, overrides };
}

export function magnitudeValid(state: FormState): boolean {
  return state.magnitudeMode === "random" || state.magnitude > 6.0;
}

export function canSubmit(state: FormState): boolean {
  return state.epicenter !== null && magnitudeValid(state) && !state.pending;
}

export function buildRequest(state: FormState): ScenarioRequestBody {
  if (!canSubmit(state)) {
    throw new Error("form not submittable");
  }
  const overrides = [...state.overrides.values()].sort((a, b) =>
    overrideKey(a.zone, a.property_type).localeCompare(overrideKey(b.zone, b.property_type)),
  );
  return {
    epicenter: state.epicenter as Epicenter,
    magnitude: state.magnitudeMode === "fixed" ? state.magnitude : null,
    seed: state.seed,
    insurance_overrides: overrides,
  };
}
