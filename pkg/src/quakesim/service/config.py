"""Run configuration: JSON file with input paths and engine parameters."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..exposure import load_dpm_json, load_exposure_csv, load_terms_csv, load_zone_map_csv
from ..geo import load_window
from ..hazard import load_hazard_grid_csv
from ..lossengine import RunInputs, load_csd_geojson
from ..stpp import fit_homogeneous, fit_kernel_model, load_catalog_csv

ENGINE_KEYS = (
    "annual_rate",
    "mdf_mode",
    "cost_uncertainty",
    "max_tries",
    "radius_cap_km",
    "wald_noise_sd",
    "bakun_east_noise_sd",
    "bakun_west_noise_sd",
)


@dataclass
class RunConfig:
    base_dir: Path
    raw: dict = field(default_factory=dict)

    def path(self, key: str) -> Path:
        return self.base_dir / self.raw[key]

    def engine_config(self) -> dict:
        return {k: self.raw[k] for k in ENGINE_KEYS if k in self.raw}

    @property
    def default_seed(self) -> int:
        return int(self.raw.get("default_seed", 0))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def input_digests(self) -> dict[str, str]:
        from ..lossengine import file_digest

        keys = ("window", "hazard_grid", "csd_geojson", "exposure", "dpm", "terms",
                "zone_map", "catalog")
        return {k: file_digest(self.path(k)) for k in keys if k in self.raw}


def load_config(path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    return RunConfig(base_dir=path.parent, raw=raw)


def assemble_inputs(config: RunConfig) -> RunInputs:
    """Load every input file and fit the epicenter intensity model."""
    window = load_window(config.path("window"))
    pattern = load_catalog_csv(config.path("catalog"), window)
    model_cfg = config.raw.get("model", {"kind": "kernel"})
    if model_cfg.get("kind") == "homogeneous":
        model = fit_homogeneous(pattern)
    else:
        model = fit_kernel_model(pattern, h=model_cfg.get("bandwidth"))

    hazard_grid = load_hazard_grid_csv(config.path("hazard_grid"))
    csd_geoms = load_csd_geojson(config.path("csd_geojson"))
    exposures = {e.csd_id: e for e in load_exposure_csv(config.path("exposure"))}
    dpms = load_dpm_json(config.path("dpm"))
    terms = load_terms_csv(config.path("terms"))
    zone_map = load_zone_map_csv(config.path("zone_map"))

    return RunInputs.assemble(model, hazard_grid, csd_geoms, exposures, dpms, terms, zone_map)
