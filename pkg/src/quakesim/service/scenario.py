"""Single-scenario execution shared by the HTTP API and the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import OutOfWindowError
from ..exposure import InsuranceTerms
from ..geo import GeoPoint, polygon_to_feature
from ..hazard import EAST_LON_THRESHOLD, NoiseConfig, ShakeSample
from ..lossengine import (
    STREAM_SHAKE,
    EventScenario,
    RunInputs,
    build_rings,
    compute_event_losses,
    simulate_event,
)

SCENARIO_YEAR = 1


@dataclass(frozen=True)
class ScenarioRequest:
    epicenter: GeoPoint
    magnitude: float | None = None  # None means "random" (full PGA draw)
    seed: int = 0
    insurance_overrides: tuple[InsuranceTerms, ...] = ()
    wald_noise_sd: float = 0.0
    bakun_noise_sd: float = 0.0

    def digest(self) -> str:
        payload = {
            "epicenter": [self.epicenter.lon, self.epicenter.lat],
            "magnitude": self.magnitude,
            "seed": self.seed,
            "overrides": [
                [t.zone, t.property_type, t.penetration, t.deductible_pct, t.limit_pct]
                for t in self.insurance_overrides
            ],
            "wald_noise_sd": self.wald_noise_sd,
            "bakun_noise_sd": self.bakun_noise_sd,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _fixed_magnitude_scenario(req: ScenarioRequest, radius_cap_km: float) -> EventScenario:
    """Rings straight from a user-supplied magnitude: the epicentral MMI is
    the Bakun-implied intensity at the 1 km clamp distance, so no PGA draw
    or inversion is involved."""
    east = req.epicenter.lon > EAST_LON_THRESHOLD
    m = req.magnitude
    if east:
        mmi_epi = 1.68 * m + 1.41 - 0.00345  # attenuation at d = 1 km
    else:
        mmi_epi = 1.09 * m + 5.07
    mmi_epi = min(12.0, max(1.0, mmi_epi))
    pga = 10.0 ** ((mmi_epi + 1.66) / 3.66)
    shake = ShakeSample(
        pga=pga, mmi_epicenter=mmi_epi, magnitude=m, east=east, distance_to_site_km=1.0
    )
    rings = build_rings(m, mmi_epi, east, radius_cap_km)
    return EventScenario(
        event_id=0,
        year=SCENARIO_YEAR,
        epicenter=req.epicenter,
        east=east,
        shake=shake,
        rings=rings,
        affected=(),
    )


def _effective_terms(base_terms, overrides: tuple[InsuranceTerms, ...]):
    if not overrides:
        return tuple(base_terms)
    keyed = {(t.zone, t.property_type): t for t in base_terms}
    for t in overrides:
        keyed[(t.zone, t.property_type)] = t
    return tuple(keyed.values())


def run_scenario(inputs: RunInputs, engine_config: dict, req: ScenarioRequest) -> dict:
    """Execute one what-if event and aggregate its losses.

    Deterministic for a fixed request: the seed keys both the PGA draw and
    the per-CSD loss draws.
    """
    if not inputs.model.window.contains(req.epicenter):
        raise OutOfWindowError(
            f"epicenter ({req.epicenter.lon}, {req.epicenter.lat}) outside the window"
        )
    if req.magnitude is not None and not req.magnitude > 6.0:
        raise ValueError("fixed magnitude must exceed 6")

    radius_cap = float(engine_config.get("radius_cap_km", 5000.0))
    if req.magnitude is not None:
        # affected CSDs still come from the standard band machinery
        scenario = _attach_affected(_fixed_magnitude_scenario(req, radius_cap), inputs)
    else:
        noise = NoiseConfig(
            wald_sd=req.wald_noise_sd,
            bakun_east_sd=req.bakun_noise_sd,
            bakun_west_sd=req.bakun_noise_sd,
        )
        rng = np.random.default_rng([req.seed, STREAM_SHAKE, SCENARIO_YEAR, 0])
        scenario = simulate_event(
            req.epicenter,
            SCENARIO_YEAR,
            0,
            inputs.hazard_grid,
            inputs.site_fits,
            inputs.csd_geoms,
            rng,
            noise=noise,
            max_tries=int(engine_config.get("max_tries", 100)),
            radius_cap_km=radius_cap,
        )

    terms = _effective_terms(inputs.terms_table, req.insurance_overrides)
    results = compute_event_losses(
        scenario,
        inputs.exposures,
        inputs.dpms,
        terms,
        inputs.zone_map,
        seed=req.seed,
        mdf_mode=engine_config.get("mdf_mode", "random"),
        cost_uncertainty=bool(engine_config.get("cost_uncertainty", True)),
    )
    return _scenario_response(scenario, results, inputs, req)


def _attach_affected(scenario: EventScenario, inputs: RunInputs) -> EventScenario:
    from ..geo import BandSet, haversine_km

    affected = []
    if scenario.rings:
        bands = BandSet(
            scenario.epicenter, [(outer, inner) for _, outer, inner in scenario.rings]
        )
        max_outer = max(outer for _, outer, _ in scenario.rings)
        for geom in inputs.csd_geoms:
            dist = haversine_km(scenario.epicenter, geom.centroid)
            if dist - geom.circum_km > max_outer:
                continue
            projected = None
            for band_index, (level, outer, inner) in enumerate(scenario.rings):
                if dist - geom.circum_km > outer or dist + geom.circum_km < inner:
                    continue
                if inner <= dist - geom.circum_km and dist + geom.circum_km <= outer:
                    frac = 1.0
                else:
                    if projected is None:
                        projected = bands.project(geom.polygon)
                    frac = bands.fraction(projected, band_index)
                if frac > 0.0:
                    affected.append((geom.csd_id, level, frac))
    return EventScenario(
        event_id=scenario.event_id,
        year=scenario.year,
        epicenter=scenario.epicenter,
        east=scenario.east,
        shake=scenario.shake,
        rings=scenario.rings,
        affected=tuple(affected),
    )


def _scenario_response(scenario, results, inputs: RunInputs, req: ScenarioRequest) -> dict:
    from ..geo import circle_polygon

    ring_features = []
    for level, outer, inner in scenario.rings:
        feature = polygon_to_feature(
            circle_polygon(scenario.epicenter, outer, n_vertices=90),
            {"mmi_level": level, "outer_km": outer, "inner_km": inner},
        )
        ring_features.append(feature)

    per_csd_level: dict[str, tuple[int, float]] = {}
    for csd_id, level, frac in scenario.affected:
        top, total = per_csd_level.get(csd_id, (0, 0.0))
        per_csd_level[csd_id] = (max(top, level), total + frac)

    rows = []
    totals: dict[str, dict[str, int]] = {}
    for res in results:
        exp = inputs.exposures[res.csd_id]
        level, frac = per_csd_level.get(res.csd_id, (0, 0.0))
        rows.append(
            {
                "csd_id": res.csd_id,
                "province": res.province,
                "mmi": level,
                "area_fraction": round(frac, 6),
                "exposure_cents": str(exp.total_cents()),
                "loss_cents": str(res.total_cents),
                "claim_cents": str(res.claim_cents),
            }
        )
        prov = totals.setdefault(res.province, {"loss_cents": 0, "claim_cents": 0})
        prov["loss_cents"] += res.total_cents
        prov["claim_cents"] += res.claim_cents

    return {
        "request_digest": req.digest(),
        "event": {
            "epicenter": {"lon": scenario.epicenter.lon, "lat": scenario.epicenter.lat},
            "east": scenario.east,
            "magnitude": round(scenario.shake.magnitude, 4),
            "mmi_epicenter": round(scenario.shake.mmi_epicenter, 4),
            "pga_cm_s2": round(scenario.shake.pga, 4),
            "n_rings": len(scenario.rings),
        },
        "rings": {"type": "FeatureCollection", "features": ring_features},
        "csd_table": rows,
        "province_totals": {
            prov: {k: str(v) for k, v in vals.items()} for prov, vals in sorted(totals.items())
        },
    }
