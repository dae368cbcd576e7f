"""Event-to-loss pipeline: shaking, isoseismal bands, losses, claims, batches.

Each simulated epicenter takes the PGA of its nearest hazard-grid site,
converts to epicentral MMI and moment magnitude, and spreads damage over
annular MMI bands.  Losses split building exposure 25/37.5/37.5 across
structural and non-structural damage plus contents; claims apply per-class
deductible/limit scaled by the affected area fraction.  All money is integer
cents; reduction order never changes results.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InvalidTermsError,
    MissingExposureError,
    SignificanceUnreachableError,
)
from .exposure import (
    DAMAGE_TYPES,
    N_DAMAGE_STATES,
    CsdExposure,
    Dpm,
    InsuranceTerms,
    from_cents,
    lookup_insurance_terms,
    mdf_from_uniform_draws,
    mean_damage_factor,
    to_cents,
)
from .geo import BandSet, GeoPoint, Polygon, haversine_km
from .hazard import (
    EAST_LON_THRESHOLD,
    HazardSite,
    NoiseConfig,
    ShakeSample,
    SiteGpdFit,
    fit_site_gpd,
    isoseismal_radii,
    simulate_site_pga,
)
from .stpp import SeparableIntensityModel, simulate_catalog

STREAM_SHAKE = 2
STREAM_LOSS = 3


@dataclass(frozen=True)
class CsdGeometry:
    """CSD polygon with precomputed centroid and circumradius for prefilters."""

    csd_id: str
    province: str
    polygon: Polygon
    centroid: GeoPoint
    circum_km: float

    @classmethod
    def from_polygon(cls, csd_id: str, province: str, polygon: Polygon) -> "CsdGeometry":
        c = polygon.shapely.centroid
        centroid = GeoPoint(c.x, c.y)
        circum = max(
            haversine_km(centroid, GeoPoint(lon, lat)) for lon, lat in polygon.exterior
        )
        for ext, _ in polygon.extra_parts:
            circum = max(
                circum, max(haversine_km(centroid, GeoPoint(lon, lat)) for lon, lat in ext)
            )
        return cls(csd_id, province, polygon, centroid, circum)


def load_csd_geojson(path) -> list[CsdGeometry]:
    """FeatureCollection with `csd_id` and `province` properties per feature."""
    with open(path) as fh:
        data = json.load(fh)
    out = []
    for feature in data["features"]:
        props = feature["properties"]
        out.append(
            CsdGeometry.from_polygon(
                props["csd_id"], props["province"], Polygon.from_geojson(feature["geometry"])
            )
        )
    return sorted(out, key=lambda g: g.csd_id)


@dataclass(frozen=True)
class EventScenario:
    """One simulated earthquake with its rings and affected CSD fractions."""

    event_id: int
    year: int
    epicenter: GeoPoint
    east: bool
    shake: ShakeSample
    rings: tuple[tuple[int, float, float], ...]  # (mmi level, outer km, inner km)
    affected: tuple[tuple[str, int, float], ...]  # (csd_id, mmi level, fraction)


@dataclass
class CsdLossResult:
    csd_id: str
    province: str
    loss_by_class: dict = field(default_factory=dict)
    # class -> {damage type -> cents}
    claim_cents: int = 0

    @property
    def total_cents(self) -> int:
        return sum(sum(d.values()) for d in self.loss_by_class.values())


@dataclass
class AnnualSeries:
    """Per-year, per-province losses and claims (cents) plus event counts."""

    years: tuple[int, ...]
    provinces: tuple[str, ...]
    loss: dict  # year -> province -> cents
    claim: dict
    n_events: dict  # year -> int
    n_damaging: dict

    def province_series(self, province: str, which: str = "loss") -> np.ndarray:
        table = self.loss if which == "loss" else self.claim
        return np.array([table[y].get(province, 0) for y in self.years], dtype=float) / 100.0


@dataclass
class SimulationRun:
    run_id: str
    seed: int
    n_years: int
    config: dict
    annual: AnnualSeries
    events: list[EventScenario]
    discarded_events: int = 0


# ---------------------------------------------------------------------------
# claims
# ---------------------------------------------------------------------------

def claim_payment(total_loss_cents: int, total_exposure_cents: int, terms: InsuranceTerms) -> int:
    """Piecewise claim: 0 below the deductible, penetration times the excess
    up to the limit, capped beyond it.  Integer-cent arithmetic throughout."""
    if terms.limit_pct <= terms.deductible_pct:
        raise InvalidTermsError("limit must exceed deductible")
    if total_loss_cents < 0 or total_exposure_cents < 0:
        raise ValueError("negative money amounts")
    d = to_cents(terms.deductible_pct * from_cents(total_exposure_cents))
    u = to_cents(terms.limit_pct * from_cents(total_exposure_cents))
    if total_loss_cents <= d:
        return 0
    capped = min(total_loss_cents - d, u - d)
    return to_cents(terms.penetration * from_cents(capped))


# ---------------------------------------------------------------------------
# per-event simulation
# ---------------------------------------------------------------------------

def build_rings(
    magnitude: float, mmi_epicenter: float, east: bool, radius_cap_km: float = 5000.0
) -> tuple[tuple[int, float, float], ...]:
    """Annular rings (level, outer, inner) for integer levels from
    floor(epicentral MMI) down to 6; the innermost ring starts at radius 0.
    An epicentral MMI below 6 produces no rings."""
    mmi_top = int(math.floor(mmi_epicenter))
    if mmi_top < 6:
        return ()
    radii = isoseismal_radii(magnitude, min(mmi_top, 12), east, cap_km=radius_cap_km)
    rings: list[tuple[int, float, float]] = []
    inner = 0.0
    for level, outer in radii:
        if outer > inner:
            rings.append((level, outer, inner))
        inner = max(inner, outer)
    return tuple(rings)


def simulate_event(
    epicenter: GeoPoint,
    year: int,
    event_id: int,
    hazard_grid: Sequence[HazardSite],
    site_fits: Sequence[SiteGpdFit],
    csd_geoms: Sequence[CsdGeometry],
    rng,
    noise: NoiseConfig = NoiseConfig(),
    max_tries: int = 100,
    radius_cap_km: float = 5000.0,
) -> EventScenario:
    """Algorithm-1 steps for one epicenter: nearest grid site, PGA draw with
    the M > 6 constraint, isoseismal rings and per-CSD band fractions."""
    east = epicenter.lon > EAST_LON_THRESHOLD
    best_i, best_d = 0, math.inf
    for i, site in enumerate(hazard_grid):
        d = haversine_km(epicenter, site.location)
        if d < best_d:
            best_i, best_d = i, d
    d_km = max(1.0, best_d)
    shake = simulate_site_pga(site_fits[best_i], d_km, east, rng, max_tries, noise)

    rings = build_rings(shake.magnitude, shake.mmi_epicenter, east, radius_cap_km)

    affected: list[tuple[str, int, float]] = []
    if rings:
        bands = BandSet(epicenter, [(outer, inner) for _, outer, inner in rings])
        max_outer = max(outer for _, outer, _ in rings)
        for geom in csd_geoms:
            dist = haversine_km(epicenter, geom.centroid)
            if dist - geom.circum_km > max_outer:
                continue
            projected = None
            for band_index, (level, outer, inner) in enumerate(rings):
                if dist - geom.circum_km > outer or dist + geom.circum_km < inner:
                    continue
                if inner <= dist - geom.circum_km and dist + geom.circum_km <= outer:
                    frac = 1.0  # polygon entirely inside the band
                else:
                    if projected is None:
                        projected = bands.project(geom.polygon)
                    frac = bands.fraction(projected, band_index)
                if frac > 0.0:
                    affected.append((geom.csd_id, level, frac))

    return EventScenario(
        event_id=event_id,
        year=year,
        epicenter=epicenter,
        east=east,
        shake=shake,
        rings=rings,
        affected=tuple(affected),
    )


def compute_event_losses(
    scenario: EventScenario,
    exposures: dict[str, CsdExposure],
    dpms: dict[tuple[str, str, str], Dpm],
    terms_table,
    zone_map: dict[str, str],
    seed: int,
    mdf_mode: str = "random",
    cost_uncertainty: bool = True,
) -> list[CsdLossResult]:
    """Algorithm-2 losses and claims for every CSD the event touches.

    Fractions for the same (CSD, MMI level) are merged before any money is
    computed, so band splits are integer-cent equivalent to the merged band.
    Draws are keyed by (seed, year, event, csd index, level) and consumed in
    sorted class order, making results independent of scheduling.
    """
    merged: dict[tuple[str, int], float] = {}
    for csd_id, level, frac in scenario.affected:
        key = (csd_id, level)
        merged[key] = merged.get(key, 0.0) + frac

    csd_index = {csd_id: i for i, csd_id in enumerate(sorted(exposures))}
    terms_cache: dict[tuple[str, str], InsuranceTerms] = {}
    results: dict[str, CsdLossResult] = {}
    for (csd_id, level), frac in sorted(merged.items()):
        if csd_id not in exposures:
            raise MissingExposureError(f"no exposure for affected CSD {csd_id}")
        exp = exposures[csd_id]
        rng = np.random.default_rng(
            [seed, STREAM_LOSS, scenario.year, scenario.event_id, csd_index[csd_id], level]
        )
        result = results.setdefault(csd_id, CsdLossResult(csd_id, exp.province))
        classes = sorted(exp.by_class, key=lambda c: (c.occupancy_code, c.material))
        random_mode = mdf_mode == "random"
        if random_mode or cost_uncertainty:
            # one block of standard uniforms per (csd, level): a cost factor
            # plus seven damage-state draws for each of the four damage types
            draws = rng.random((len(classes), 1 + 4 * N_DAMAGE_STATES))
        for k, cls in enumerate(classes):
            bldg_cad = from_cents(exp.building_cents(cls))
            cont_cad = from_cents(exp.content_cents(cls))
            u_factor = 0.9 + 0.2 * draws[k, 0] if cost_uncertainty else 1.0

            losses = {}
            for j, (dtype, share) in enumerate(
                (("S", 0.25), ("DS", 0.375), ("AS", 0.375), ("BldgC", None))
            ):
                dpm = dpms[(cls.occupancy_code, cls.material, dtype)]
                if random_mode:
                    lo = 1 + j * N_DAMAGE_STATES
                    mdf = mdf_from_uniform_draws(dpm, level, draws[k, lo : lo + N_DAMAGE_STATES])
                else:
                    mdf = mean_damage_factor(dpm, level, mdf_mode)
                base = cont_cad if share is None else share * bldg_cad
                losses[dtype] = to_cents(mdf * base * frac * u_factor)

            class_losses = result.loss_by_class.setdefault(
                cls, {dtype: 0 for dtype in DAMAGE_TYPES}
            )
            for dtype, cents in losses.items():
                class_losses[dtype] += cents

            loss_b = sum(losses.values())
            exposure_base = to_cents((bldg_cad + cont_cad) * frac * u_factor)
            terms_key = (csd_id, cls.property_type)
            terms = terms_cache.get(terms_key)
            if terms is None:
                terms = lookup_insurance_terms(exp, cls.property_type, terms_table, zone_map)
                terms_cache[terms_key] = terms
            result.claim_cents += claim_payment(loss_b, exposure_base, terms)

    return [results[k] for k in sorted(results)]


# ---------------------------------------------------------------------------
# batch runs
# ---------------------------------------------------------------------------

@dataclass
class RunInputs:
    """Validated inputs shared by scenario and batch simulation."""

    model: SeparableIntensityModel
    hazard_grid: list[HazardSite]
    site_fits: list[SiteGpdFit]
    csd_geoms: list[CsdGeometry]
    exposures: dict[str, CsdExposure]
    dpms: dict[tuple[str, str, str], Dpm]
    terms_table: tuple
    zone_map: dict[str, str]

    @classmethod
    def assemble(cls, model, hazard_grid, csd_geoms, exposures, dpms, terms_table, zone_map):
        for geom in csd_geoms:
            if geom.csd_id not in exposures:
                raise MissingExposureError(f"CSD {geom.csd_id} has geometry but no exposure")
        return cls(
            model=model,
            hazard_grid=list(hazard_grid),
            site_fits=[fit_site_gpd(s) for s in hazard_grid],
            csd_geoms=sorted(csd_geoms, key=lambda g: g.csd_id),
            exposures=dict(exposures),
            dpms=dict(dpms),
            terms_table=tuple(terms_table),
            zone_map=dict(zone_map),
        )

    def provinces(self) -> tuple[str, ...]:
        return tuple(sorted({g.province for g in self.csd_geoms}))


def run_batch(
    n_years: int,
    seed: int,
    config: dict,
    inputs: RunInputs,
    run_id: str | None = None,
    progress=None,
) -> SimulationRun:
    """Simulate ``n_years`` of catalogs and push every event through the
    shaking and loss pipeline.  Identical (seed, config, inputs) give an
    identical run."""
    if n_years < 1:
        raise ValueError("n_years must be >= 1")
    annual_rate = config.get("annual_rate")
    mdf_mode = config.get("mdf_mode", "random")
    cost_uncertainty = bool(config.get("cost_uncertainty", True))
    max_tries = int(config.get("max_tries", 100))
    radius_cap = float(config.get("radius_cap_km", 5000.0))
    noise = NoiseConfig(
        wald_sd=float(config.get("wald_noise_sd", 0.0)),
        bakun_east_sd=float(config.get("bakun_east_noise_sd", 0.0)),
        bakun_west_sd=float(config.get("bakun_west_noise_sd", 0.0)),
    )

    catalog = simulate_catalog(
        inputs.model, n_years, seed, annual_rate=annual_rate, start_year=1
    )
    by_year: dict[int, list[GeoPoint]] = {}
    for year, p in catalog:
        by_year.setdefault(year, []).append(p)

    years = tuple(range(1, n_years + 1))
    provinces = inputs.provinces()
    loss = {y: {} for y in years}
    claim = {y: {} for y in years}
    n_events = {y: 0 for y in years}
    n_damaging = {y: 0 for y in years}
    scenarios: list[EventScenario] = []
    discarded = 0
    event_id = 0

    for year in years:
        for idx, epicenter in enumerate(by_year.get(year, [])):
            rng = np.random.default_rng([seed, STREAM_SHAKE, year, idx])
            try:
                scenario = simulate_event(
                    epicenter,
                    year,
                    event_id,
                    inputs.hazard_grid,
                    inputs.site_fits,
                    inputs.csd_geoms,
                    rng,
                    noise=noise,
                    max_tries=max_tries,
                    radius_cap_km=radius_cap,
                )
            except SignificanceUnreachableError:
                discarded += 1
                continue
            event_id += 1
            n_events[year] += 1
            results = compute_event_losses(
                scenario,
                inputs.exposures,
                inputs.dpms,
                inputs.terms_table,
                inputs.zone_map,
                seed,
                mdf_mode=mdf_mode,
                cost_uncertainty=cost_uncertainty,
            )
            if any(r.total_cents > 0 for r in results):
                n_damaging[year] += 1
            for r in results:
                loss[year][r.province] = loss[year].get(r.province, 0) + r.total_cents
                claim[year][r.province] = claim[year].get(r.province, 0) + r.claim_cents
            scenarios.append(scenario)
        if progress is not None:
            progress(year, n_years)

    annual = AnnualSeries(
        years=years,
        provinces=provinces,
        loss=loss,
        claim=claim,
        n_events=n_events,
        n_damaging=n_damaging,
    )
    if run_id is None:
        run_id = f"run-{seed}-{n_years}"
    return SimulationRun(
        run_id=run_id,
        seed=seed,
        n_years=n_years,
        config=dict(config),
        annual=annual,
        events=scenarios,
        discarded_events=discarded,
    )


def summarize_run(run: SimulationRun) -> list[tuple[int, float, float]]:
    """Rows (k, % of years with k events, % of years with k damaging events)."""
    n = run.n_years
    max_k = max(
        max(run.annual.n_events.values(), default=0),
        max(run.annual.n_damaging.values(), default=0),
    )
    rows = []
    for k in range(max_k + 1):
        pe = 100.0 * sum(1 for v in run.annual.n_events.values() if v == k) / n
        pd = 100.0 * sum(1 for v in run.annual.n_damaging.values() if v == k) / n
        rows.append((k, pe, pd))
    return rows


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def write_annual_csv(run: SimulationRun, path) -> None:
    """`year,province,loss_cad,claim_cad,n_events`, every (year, province)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "province", "loss_cad", "claim_cad", "n_events"])
        for year in run.annual.years:
            for province in run.annual.provinces:
                writer.writerow(
                    [
                        year,
                        province,
                        f"{from_cents(run.annual.loss[year].get(province, 0)):.2f}",
                        f"{from_cents(run.annual.claim[year].get(province, 0)):.2f}",
                        run.annual.n_events[year],
                    ]
                )


def write_events_csv(run: SimulationRun, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["event_id", "year", "lon", "lat", "east", "magnitude", "mmi_epicenter", "pga_cm_s2", "rings"]
        )
        for ev in run.events:
            rings = ";".join(f"{lvl}:{outer:.2f}" for lvl, outer, _ in ev.rings)
            writer.writerow(
                [
                    ev.event_id,
                    ev.year,
                    repr(ev.epicenter.lon),
                    repr(ev.epicenter.lat),
                    int(ev.east),
                    f"{ev.shake.magnitude:.4f}",
                    f"{ev.shake.mmi_epicenter:.4f}",
                    f"{ev.shake.pga:.4f}",
                    rings,
                ]
            )


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    run: SimulationRun,
    artifact_paths: dict[str, str],
    path,
    input_digests: dict[str, str] | None = None,
) -> None:
    """Manifest written after all artifacts, carrying their digests plus the
    digests of the input files the run consumed."""
    manifest = {
        "run_id": run.run_id,
        "seed": run.seed,
        "n_years": run.n_years,
        "config": run.config,
        "config_digest": hashlib.sha256(
            json.dumps(run.config, sort_keys=True).encode()
        ).hexdigest(),
        "discarded_events": run.discarded_events,
        "n_events_total": sum(run.annual.n_events.values()),
        "artifacts": {name: file_digest(p) for name, p in artifact_paths.items()},
        "inputs": input_digests or {},
        "version": 1,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
