"""Deterministic synthetic desk fixture: two hazard clusters, 50 CSDs,
full DPM and insurance-term tables, a catalog, and a run config.

Everything derives from fixed seeds and sorted iteration, so regenerating
the fixture is byte-identical; batch runs on it finish in seconds.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .exposure import (
    MARKET_TERMS,
    WOOD_LIGHT_FRAME_S_ROWS,
    Dpm,
    build_nonresidential_exposure,
    build_residential_exposure,
    dump_dpm_json,
    dump_exposure_csv,
    dump_terms_csv,
    dump_zone_map_csv,
    impute_missing_sqft,
    merge_exposures,
    normalize_dpm_rows,
)
from .geo import GeoPoint, Polygon, SpatialWindow, dump_window, polygon_to_feature
from .hazard import HAZARD_PROBS, HazardSite, dump_hazard_grid_csv
from .stpp import dump_catalog_csv

WINDOW_BBOX = (-130.0, -60.0, 42.0, 62.0)
EAST_CENTER = (-71.5, 47.0)
WEST_CENTER = (-123.0, 49.5)

FIXTURE_SEED = 20240601

# fixture-scale permit categories; keeps the DPM table small
CATEGORY_MAP = {
    "institutional": {"GOV1": 1.0, "EDU1": 1.0},
    "commercial": {"COM1": 1.0, "COM4": 2.0},
    "industrial": {"IND1": 1.0},
}
NONRES_MATERIAL_SPLIT = {
    occ: {"concrete": 0.6, "steel": 0.4}
    for cat in CATEGORY_MAP.values()
    for occ in cat
}
RES_MATERIAL_SPLIT = {
    "RES1": {"wood": 0.8, "masonry": 0.2},
    "RES3": {"wood": 0.3, "concrete": 0.7},
}
PERMIT_RATIOS = {"institutional": 0.15, "commercial": 0.45, "industrial": 0.25}


def _gpd_quantiles(u: float, sigma: float, xi: float):
    lam = HAZARD_PROBS[0]
    out = []
    for p in HAZARD_PROBS:
        lr = math.log(lam / p)
        g = u + sigma * lr if abs(xi) < 1e-12 else u + sigma * math.expm1(xi * lr) / xi
        out.append((p, g))
    return tuple(out)


def make_hazard_grid() -> list[HazardSite]:
    sites = []
    for ci, (cx, cy, u0, s0, xi0) in enumerate(
        [
            (*EAST_CENTER, 0.05, 0.14, 0.22),
            (*WEST_CENTER, 0.08, 0.20, 0.25),
        ]
    ):
        for i in range(3):
            for j in range(3):
                lon = cx + 0.8 * (i - 1)
                lat = cy + 0.8 * (j - 1)
                u = u0 + 0.005 * i
                sigma = s0 + 0.01 * j
                xi = xi0 + 0.02 * (i - j)
                sites.append(HazardSite(GeoPoint(lon, lat), _gpd_quantiles(u, sigma, xi)))
    return sites


def make_csd_layout():
    """50 square CSDs (0.4 degrees a side) tiled around the two clusters."""
    layout = []
    offsets = [-1.0, -0.6, -0.2, 0.2, 0.6]
    for prefix, (cx, cy), provinces in [
        ("E", EAST_CENTER, ["QC"] * 15 + ["ON"] * 5 + ["NB"] * 5),
        ("W", WEST_CENTER, ["BC"] * 15 + ["AB"] * 5 + ["YT"] * 5),
    ]:
        k = 0
        for dx in offsets:
            for dy in offsets:
                csd_id = f"{prefix}{k + 1:02d}"
                lon0, lat0 = cx + dx, cy + dy
                poly = Polygon(
                    (
                        (lon0, lat0),
                        (lon0 + 0.4, lat0),
                        (lon0 + 0.4, lat0 + 0.4),
                        (lon0, lat0 + 0.4),
                    )
                )
                layout.append((csd_id, provinces[k], poly))
                k += 1
    return layout


def make_zone_map(layout) -> dict[str, str]:
    zones = {}
    for csd_id, province, poly in layout:
        c = poly.shapely.centroid
        if province == "BC":
            near = abs(c.x - WEST_CENTER[0]) < 0.5 and abs(c.y - WEST_CENTER[1]) < 0.5
            zones[csd_id] = "Vancouver Metro" if near else "Rest of BC"
        elif province == "QC":
            near = abs(c.x - EAST_CENTER[0]) < 0.5 and abs(c.y - EAST_CENTER[1]) < 0.5
            zones[csd_id] = "Montreal Metro" if near else "Rest of QC"
        # other provinces fall through to the minimum-penetration rule
    return zones


def make_exposures(layout):
    rng = np.random.default_rng(FIXTURE_SEED)
    counts, provinces, sqft_raw, income, unit_totals = {}, {}, {}, {}, {}
    for idx, (csd_id, province, poly) in enumerate(layout):
        c = poly.shapely.centroid
        center = EAST_CENTER if csd_id.startswith("E") else WEST_CENTER
        dist = math.hypot(c.x - center[0], c.y - center[1])
        scale = max(0.25, 1.6 - dist)  # denser near the cluster center
        counts[csd_id] = {
            "RES1": round(4000 * scale),
            "RES3": round(1200 * scale),
        }
        provinces[csd_id] = province
        # a few CSDs miss square footage and go through imputation
        sqft_raw[csd_id] = None if idx % 9 == 4 else 1400.0 + 20.0 * (idx % 7)
        income[csd_id] = 55_000.0 + 900.0 * (idx % 11)
        unit_totals[csd_id] = counts[csd_id]["RES1"] + counts[csd_id]["RES3"]

    sqft = impute_missing_sqft(sqft_raw, provinces, income, unit_totals)
    avg_sqft = {k: {"RES1": sqft[k], "RES3": 0.75 * sqft[k]} for k in counts}
    cost_per_sqft = {"RES1": 180.0, "RES3": 150.0}
    bcpi = {"QC": 1.05, "ON": 1.08, "NB": 1.00, "BC": 1.12, "AB": 1.02, "YT": 1.00}

    residential = build_residential_exposure(
        counts, provinces, avg_sqft, cost_per_sqft, bcpi, RES_MATERIAL_SPLIT,
        noise=True, rng=rng,
    )
    nonres = build_nonresidential_exposure(
        residential,
        {prov: dict(PERMIT_RATIOS) for prov in set(provinces.values())},
        category_map=CATEGORY_MAP,
        material_split=NONRES_MATERIAL_SPLIT,
        content_pct={"COM1": 1.0, "COM4": 0.5, "IND1": 1.5, "GOV1": 0.5, "EDU1": 0.5},
    )
    return merge_exposures(residential, nonres)


def _shift_rows(rows: dict[int, tuple[float, ...]], severity: float):
    """Blend probability mass one damage state up (severity > 0) or down."""
    out = {}
    w = abs(severity)
    for level, probs in rows.items():
        shifted = list(probs)
        if severity > 0:
            moved = [0.0] * len(probs)
            for i, p in enumerate(probs):
                j = min(i + 1, len(probs) - 1)
                moved[j] += p
            shifted = [(1 - w) * p + w * m for p, m in zip(probs, moved)]
        elif severity < 0:
            moved = [0.0] * len(probs)
            for i, p in enumerate(probs):
                j = max(i - 1, 0)
                moved[j] += p
            shifted = [(1 - w) * p + w * m for p, m in zip(probs, moved)]
        out[level] = tuple(shifted)
    return normalize_dpm_rows(out)


MATERIAL_SEVERITY = {"wood": 0.0, "masonry": 0.35, "concrete": 0.15, "steel": -0.20}
DTYPE_SEVERITY = {"S": 0.0, "DS": 0.10, "AS": -0.10, "BldgC": -0.25}


def make_dpms() -> list[Dpm]:
    combos = {("RES1", "wood"), ("RES1", "masonry"), ("RES3", "wood"), ("RES3", "concrete")}
    for occ, split in NONRES_MATERIAL_SPLIT.items():
        for mat in split:
            combos.add((occ, mat))
    dpms = []
    for occ, mat in sorted(combos):
        for dtype in ("S", "DS", "AS", "BldgC"):
            severity = MATERIAL_SEVERITY[mat] + DTYPE_SEVERITY[dtype]
            if occ == "RES1" and mat == "wood" and dtype == "S":
                rows = WOOD_LIGHT_FRAME_S_ROWS  # the reference matrix, untouched
            else:
                rows = _shift_rows(WOOD_LIGHT_FRAME_S_ROWS, severity)
            dpms.append(Dpm(occ, mat, dtype, rows))
    return dpms


def make_catalog(window: SpatialWindow) -> list[tuple[int, GeoPoint]]:
    rng = np.random.default_rng(FIXTURE_SEED + 1)
    events = []
    for center, spread, n in [(EAST_CENTER, 0.5, 70), (WEST_CENTER, 0.4, 50)]:
        pts = rng.normal(center, spread, size=(n, 2))
        years = rng.integers(1900, 2018, size=n)
        for (lon, lat), year in zip(pts, years):
            lon = float(np.clip(lon, window.bbox[0] + 0.1, window.bbox[1] - 0.1))
            lat = float(np.clip(lat, window.bbox[2] + 0.1, window.bbox[3] - 0.1))
            events.append((int(year), GeoPoint(lon, lat)))
    events.sort(key=lambda e: (e[0], e[1].lon, e[1].lat))
    return events


def make_desk_fixture(outdir) -> dict:
    """Write the full input set and return the config dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    window = SpatialWindow.from_bbox(*WINDOW_BBOX)
    dump_window(window, outdir / "window.geojson")

    dump_hazard_grid_csv(make_hazard_grid(), outdir / "hazard_grid.csv")

    layout = make_csd_layout()
    features = [
        polygon_to_feature(poly, {"csd_id": csd_id, "province": province})
        for csd_id, province, poly in layout
    ]
    with open(outdir / "csd.geojson", "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)

    dump_exposure_csv(make_exposures(layout), outdir / "exposure.csv")
    dump_dpm_json(make_dpms(), outdir / "dpm.json")
    dump_terms_csv(MARKET_TERMS, outdir / "terms.csv")
    dump_zone_map_csv(make_zone_map(layout), outdir / "zone_map.csv")
    dump_catalog_csv(make_catalog(window), outdir / "catalog.csv")

    config = {
        "window": "window.geojson",
        "hazard_grid": "hazard_grid.csv",
        "csd_geojson": "csd.geojson",
        "exposure": "exposure.csv",
        "dpm": "dpm.json",
        "terms": "terms.csv",
        "zone_map": "zone_map.csv",
        "catalog": "catalog.csv",
        "model": {"kind": "kernel", "bandwidth": 0.9},
        "annual_rate": 1.0,
        "mdf_mode": "random",
        "cost_uncertainty": True,
        "max_tries": 100,
        "radius_cap_km": 5000.0,
        "wald_noise_sd": 0.0,
        "bakun_east_noise_sd": 0.0,
        "bakun_west_noise_sd": 0.0,
        "default_seed": 42,
    }
    with open(outdir / "config.json", "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
    return config
