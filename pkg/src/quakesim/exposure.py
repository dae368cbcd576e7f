"""Exposure tables, damage probability matrices and insurance terms.

Money is held as integer cents internally; CSV interchange uses CAD with two
decimals.  Damage probability matrices map integer MMI levels VI..XII to
seven damage-state probabilities; the damage factor ranges are fixed at
{0, 0-1, 1-10, 10-30, 30-60, 60-100, 100} percent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ImputationImpossibleError,
    InvalidDpmError,
    MissingCostError,
    UnknownCategoryError,
)

PROVINCES = ("NL", "PE", "NS", "NB", "QC", "ON", "MB", "SK", "BC", "YT", "NT", "AB", "NU")
WESTERN_PROVINCES = ("BC", "AB", "SK", "MB", "NT", "YT")
EASTERN_PROVINCES = ("NL", "NS", "PE", "NB", "QC", "ON", "NU")

# HAZUS-style occupancy vocabulary: residential plus the non-residential
# codes from the permits conversion table
OCCUPANCY_CODES = frozenset(
    {
        "RES1", "RES2", "RES3", "RES4", "RES5", "RES6",
        "COM1", "COM2", "COM3", "COM4", "COM6", "COM7", "COM8", "COM9",
        "EDU1", "EDU2", "REL1", "GOV1", "GOV2",
        "IND1", "IND4", "AGR1",
    }
)
MATERIALS = ("wood", "concrete", "steel", "masonry", "other")

DAMAGE_TYPES = ("S", "DS", "AS", "BldgC")
DAMAGE_STATES = ("none", "slight", "light", "moderate", "heavy", "major", "destroyed")
# damage factor ranges as fractions of exposure value
DAMAGE_FACTOR_RANGES = (
    (0.0, 0.0),
    (0.0, 0.01),
    (0.01, 0.10),
    (0.10, 0.30),
    (0.30, 0.60),
    (0.60, 1.00),
    (1.00, 1.00),
)
DAMAGE_FACTOR_MIDPOINTS = tuple((lo + hi) / 2.0 for lo, hi in DAMAGE_FACTOR_RANGES)
MMI_LEVELS = (6, 7, 8, 9, 10, 11, 12)

RESIDENTIAL_PREFIXES = ("RES",)


def to_cents(cad: float) -> int:
    """Round a CAD amount to integer cents (half away from zero)."""
    return int(math.floor(abs(cad) * 100.0 + 0.5)) * (1 if cad >= 0 else -1)


def from_cents(cents: int) -> float:
    return cents / 100.0


def is_residential(occupancy: str) -> bool:
    return occupancy.startswith(RESIDENTIAL_PREFIXES)


@dataclass(frozen=True)
class BuildingClass:
    occupancy_code: str
    material: str

    def __post_init__(self):
        if self.occupancy_code not in OCCUPANCY_CODES:
            raise ValueError(f"unknown occupancy code {self.occupancy_code!r}")
        if self.material not in MATERIALS:
            raise ValueError(f"unknown material {self.material!r}")

    @property
    def property_type(self) -> str:
        return "residential" if is_residential(self.occupancy_code) else "commercial_industrial"


@dataclass
class CsdExposure:
    """Per-CSD exposure (integer cents) by building class."""

    csd_id: str
    province: str
    geometry_ref: str
    by_class: dict[BuildingClass, tuple[int, int]] = field(default_factory=dict)
    # values are (building_exposure_cents, content_exposure_cents)

    def __post_init__(self):
        if self.province not in PROVINCES:
            raise ValueError(f"unknown province {self.province!r}")
        for cls, (b, c) in self.by_class.items():
            if b < 0 or c < 0:
                raise ValueError(f"negative exposure for {cls}")

    def building_cents(self, cls: BuildingClass) -> int:
        return self.by_class[cls][0]

    def content_cents(self, cls: BuildingClass) -> int:
        return self.by_class[cls][1]

    def total_cents(self) -> int:
        return sum(b + c for b, c in self.by_class.values())

    def residential_building_cents(self) -> int:
        return sum(b for cls, (b, _) in self.by_class.items() if is_residential(cls.occupancy_code))


@dataclass(frozen=True)
class Dpm:
    """Damage probability matrix for one (occupancy, material, damage type)."""

    occupancy: str
    material: str
    damage_type: str
    rows: dict[int, tuple[float, ...]]  # MMI level -> 7 state probabilities

    def __post_init__(self):
        if self.damage_type not in DAMAGE_TYPES:
            raise InvalidDpmError(f"unknown damage type {self.damage_type!r}")
        arrays = {}
        midpoints = {}
        for level, probs in self.rows.items():
            if level not in MMI_LEVELS:
                raise InvalidDpmError(f"MMI level {level} outside VI..XII")
            if len(probs) != len(DAMAGE_STATES):
                raise InvalidDpmError(f"row {level} needs {len(DAMAGE_STATES)} probabilities")
            if any(p < 0 for p in probs):
                raise InvalidDpmError(f"negative probability in row {level}")
            if abs(math.fsum(probs) - 1.0) > 1e-6:
                raise InvalidDpmError(
                    f"row {level} sums to {math.fsum(probs):.8f}, expected 1"
                )
            arrays[level] = np.asarray(probs, dtype=float)
            midpoints[level] = math.fsum(
                p * f for p, f in zip(probs, DAMAGE_FACTOR_MIDPOINTS)
            )
        object.__setattr__(self, "_row_arrays", arrays)
        object.__setattr__(self, "_midpoint_mdf", midpoints)


def normalize_dpm_rows(rows: dict[int, tuple[float, ...]]) -> dict[int, tuple[float, ...]]:
    """Rescale each row to sum to exactly 1 (damage tables often encode
    near-zero probabilities as 0 and may not total exactly 1)."""
    out = {}
    for level, probs in rows.items():
        total = math.fsum(probs)
        if total <= 0:
            raise InvalidDpmError(f"row {level} has zero total probability")
        out[int(level)] = tuple(p / total for p in probs)
    return out


# Structural DPM for wood light frame residential; the MMI X column of the
# source table sums to 1.09, so rows pass through normalize_dpm_rows.
WOOD_LIGHT_FRAME_S_ROWS = normalize_dpm_rows(
    {
        6: (0.08, 0.75, 0.17, 0.00, 0.00, 0.00, 0.00),
        7: (0.04, 0.28, 0.64, 0.04, 0.00, 0.00, 0.00),
        8: (0.01, 0.06, 0.86, 0.05, 0.02, 0.00, 0.00),
        9: (0.00, 0.01, 0.69, 0.20, 0.10, 0.00, 0.00),
        10: (0.00, 0.00, 0.19, 0.76, 0.12, 0.02, 0.00),
        11: (0.00, 0.00, 0.02, 0.69, 0.25, 0.04, 0.00),
        12: (0.00, 0.00, 0.00, 0.42, 0.50, 0.06, 0.02),
    }
)


_RANGE_LOWS = np.array([lo for lo, _ in DAMAGE_FACTOR_RANGES])
_RANGE_SPANS = np.array([hi - lo for lo, hi in DAMAGE_FACTOR_RANGES])
N_DAMAGE_STATES = len(DAMAGE_STATES)


def mdf_from_uniform_draws(dpm: Dpm, mmi_level: int, draws: np.ndarray) -> float:
    """Random-mode MDF from pre-drawn standard uniforms (one per state)."""
    factors = _RANGE_LOWS + _RANGE_SPANS * draws
    return float(np.dot(dpm._row_arrays[mmi_level], factors))


def mean_damage_factor(dpm: Dpm, mmi_level: int, mode: str = "midpoint", rng=None) -> float:
    """Expected damaged fraction at an MMI level.

    midpoint mode uses the range midpoints; random mode draws each state's
    factor uniformly from its range (none stays 0, destroyed stays 1).
    """
    if mmi_level not in dpm.rows:
        raise InvalidDpmError(f"no DPM row for MMI {mmi_level}")
    if mode == "midpoint":
        return dpm._midpoint_mdf[mmi_level]
    if mode == "random":
        if rng is None:
            raise ValueError("rng required in random mode")
        return mdf_from_uniform_draws(dpm, mmi_level, rng.random(N_DAMAGE_STATES))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class InsuranceTerms:
    zone: str
    property_type: str  # residential | commercial_industrial
    penetration: float
    deductible_pct: float
    limit_pct: float

    def __post_init__(self):
        if self.property_type not in ("residential", "commercial_industrial"):
            raise ValueError(f"unknown property type {self.property_type!r}")
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError("penetration must be in [0, 1]")
        if not 0.0 <= self.deductible_pct < self.limit_pct <= 1.0:
            raise ValueError("need 0 <= deductible < limit <= 1")


# Market assumptions for the zones with known penetration/deductible/limit
MARKET_TERMS = (
    InsuranceTerms("Vancouver Metro", "residential", 0.55, 0.10, 1.00),
    InsuranceTerms("Victoria Metro", "residential", 0.70, 0.08, 1.00),
    InsuranceTerms("Rest of BC", "residential", 0.40, 0.08, 1.00),
    InsuranceTerms("Montreal Metro", "residential", 0.05, 0.05, 1.00),
    InsuranceTerms("Quebec Metro", "residential", 0.02, 0.05, 1.00),
    InsuranceTerms("Rest of QC", "residential", 0.02, 0.05, 1.00),
    InsuranceTerms("Vancouver Metro", "commercial_industrial", 0.85, 0.10, 0.80),
    InsuranceTerms("Victoria Metro", "commercial_industrial", 0.85, 0.075, 0.80),
    InsuranceTerms("Rest of BC", "commercial_industrial", 0.85, 0.075, 0.80),
    InsuranceTerms("Montreal Metro", "commercial_industrial", 0.60, 0.05, 0.80),
    InsuranceTerms("Quebec Metro", "commercial_industrial", 0.60, 0.05, 0.80),
    InsuranceTerms("Rest of QC", "commercial_industrial", 0.60, 0.05, 0.80),
)


def lookup_insurance_terms(
    csd: CsdExposure,
    property_type: str,
    terms_table: tuple[InsuranceTerms, ...] = MARKET_TERMS,
    zone_map: dict[str, str] | None = None,
) -> InsuranceTerms:
    """Zone match first, then the province's "Rest of" row, then the
    minimum-penetration row for the property type (total by construction)."""
    if not terms_table:
        raise ValueError("terms table is empty")
    rows = [t for t in terms_table if t.property_type == property_type]
    if not rows:
        raise ValueError(f"no terms for property type {property_type!r}")
    zone = (zone_map or {}).get(csd.csd_id)
    if zone is not None:
        for t in rows:
            if t.zone == zone:
                return t
    rest = f"Rest of {csd.province}"
    for t in rows:
        if t.zone == rest:
            return t
    return min(rows, key=lambda t: t.penetration)


# ---------------------------------------------------------------------------
# exposure builders
# ---------------------------------------------------------------------------

def build_residential_exposure(
    counts: dict[str, dict[str, float]],
    provinces: dict[str, str],
    avg_sqft: dict[str, dict[str, float]],
    cost_per_sqft: dict[str, float],
    bcpi_factor: dict[str, float],
    material_split: dict[str, dict[str, float]],
    noise: bool = False,
    rng=None,
    content_pct: float = 0.5,
    geometry_refs: dict[str, str] | None = None,
) -> list[CsdExposure]:
    """Building exposure = units x sqft x replacement cost x BCPI (x U(0.9, 1.1)
    when noise is on); contents at 50% of building; split across materials."""
    if noise and rng is None:
        raise ValueError("rng required when noise is on")
    out = []
    for csd_id in sorted(counts):
        province = provinces[csd_id]
        bcpi = bcpi_factor[province]
        by_class: dict[BuildingClass, tuple[int, int]] = {}
        for occ in sorted(counts[csd_id]):
            n_units = counts[csd_id][occ]
            if occ not in cost_per_sqft:
                raise MissingCostError(f"no replacement cost for class {occ!r}")
            sqft = avg_sqft[csd_id][occ]
            factor = rng.uniform(0.9, 1.1) if noise else 1.0
            building_cad = n_units * sqft * cost_per_sqft[occ] * bcpi * factor
            content_cad = content_pct * building_cad
            for material, frac in sorted(material_split[occ].items()):
                if frac <= 0:
                    continue
                cls = BuildingClass(occ, material)
                by_class[cls] = (
                    to_cents(frac * building_cad),
                    to_cents(frac * content_cad),
                )
        out.append(
            CsdExposure(
                csd_id=csd_id,
                province=province,
                geometry_ref=(geometry_refs or {}).get(csd_id, csd_id),
                by_class=by_class,
            )
        )
    return out


DONOR_PROVINCES = {
    # provinces without square-footage data borrow from a mapped donor
    "QC": "ON", "MB": "ON", "NU": "ON",
    "NL": "NB", "PE": "NB",
    "SK": "BC", "AB": "BC", "YT": "BC", "NT": "BC",
}


def impute_missing_sqft(
    sqft: dict[str, float | None],
    provinces: dict[str, str],
    income: dict[str, float],
    counts: dict[str, float],
    donor_provinces: dict[str, str] | None = None,
) -> dict[str, float]:
    """Fill square-footage gaps.

    Gaps take the same-province CSD with the closest household income (ties
    to the lower csd_id); CSDs without income take the count-weighted
    province average; provinces with no data at all borrow the mapped donor
    province's pool.
    """
    donors_map = DONOR_PROVINCES if donor_provinces is None else donor_provinces
    by_prov: dict[str, list[str]] = {}
    for csd_id, value in sqft.items():
        if value is not None:
            by_prov.setdefault(provinces[csd_id], []).append(csd_id)

    def pool_for(province: str) -> list[str]:
        if by_prov.get(province):
            return by_prov[province]
        donor = donors_map.get(province)
        if donor and by_prov.get(donor):
            return by_prov[donor]
        raise ImputationImpossibleError(f"no donors for province {province}")

    out: dict[str, float] = {}
    for csd_id in sorted(sqft):
        value = sqft[csd_id]
        if value is not None:
            out[csd_id] = value
            continue
        pool = pool_for(provinces[csd_id])
        my_income = income.get(csd_id)
        with_income = [d for d in pool if d in income]
        if my_income is not None and with_income:
            donor = min(with_income, key=lambda d: (abs(income[d] - my_income), d))
            out[csd_id] = sqft[donor]
        else:
            weights = np.array([counts.get(d, 0.0) for d in pool])
            values = np.array([sqft[d] for d in pool])
            if weights.sum() <= 0:
                weights = np.ones(len(pool))
            out[csd_id] = float((weights * values).sum() / weights.sum())
    return out


# Statistics Canada permit categories -> HAZUS occupancy codes, with equal
# weights within a category unless configured otherwise
DEFAULT_CATEGORY_MAP = {
    "institutional": {
        "EDU1": 1.0, "EDU2": 1.0, "COM6": 1.0, "COM7": 1.0, "RES5": 1.0,
        "REL1": 1.0, "GOV1": 1.0, "GOV2": 1.0, "COM8": 1.0,
    },
    "industrial": {"IND1": 5.0, "IND4": 1.0, "AGR1": 1.0},
    "commercial": {
        "COM1": 1.0, "COM2": 1.0, "COM3": 1.0, "COM4": 2.0, "COM8": 2.0,
        "COM9": 1.0, "RES4": 2.0,
    },
}


def build_nonresidential_exposure(
    residential: list[CsdExposure],
    permit_ratios: dict[str, dict[str, float]],
    category_map: dict[str, dict[str, float]] | None = None,
    material_split: dict[str, dict[str, float]] | None = None,
    content_pct: dict[str, float] | None = None,
) -> list[CsdExposure]:
    """Non-residential exposure as permit-ratio multiples of each CSD's
    residential building total, spread over occupancy codes and materials.

    ``content_pct`` holds per-occupancy content percentages (default 50%).
    """
    cmap = DEFAULT_CATEGORY_MAP if category_map is None else category_map
    contents = content_pct or {}
    out = []
    for res in residential:
        ratios = permit_ratios[res.province]
        base_cad = from_cents(res.residential_building_cents())
        by_class: dict[BuildingClass, tuple[int, int]] = {}
        for category in sorted(ratios):
            ratio = ratios[category]
            if ratio < 0:
                raise ValueError(f"negative permit ratio for {category}")
            if category not in cmap:
                raise UnknownCategoryError(f"no occupancy mapping for category {category!r}")
            weights = cmap[category]
            total_w = sum(weights.values())
            for occ in sorted(weights):
                share = weights[occ] / total_w
                building_cad = ratio * base_cad * share
                if building_cad <= 0:
                    continue
                pct = contents.get(occ, 0.5)
                if material_split and occ in material_split:
                    splits = material_split[occ]
                else:
                    splits = {"concrete": 1.0}
                for mat in sorted(splits):
                    frac = splits[mat]
                    if frac <= 0:
                        continue
                    cls = BuildingClass(occ, mat)
                    prev_b, prev_c = by_class.get(cls, (0, 0))
                    by_class[cls] = (
                        prev_b + to_cents(frac * building_cad),
                        prev_c + to_cents(frac * pct * building_cad),
                    )
        out.append(
            CsdExposure(
                csd_id=res.csd_id,
                province=res.province,
                geometry_ref=res.geometry_ref,
                by_class=by_class,
            )
        )
    return out


def merge_exposures(*groups: list[CsdExposure]) -> list[CsdExposure]:
    """Combine exposure lists (e.g. residential + non-residential) per CSD."""
    merged: dict[str, CsdExposure] = {}
    for group in groups:
        for exp in group:
            if exp.csd_id not in merged:
                merged[exp.csd_id] = CsdExposure(
                    exp.csd_id, exp.province, exp.geometry_ref, dict(exp.by_class)
                )
            else:
                target = merged[exp.csd_id].by_class
                for cls, (b, c) in exp.by_class.items():
                    prev_b, prev_c = target.get(cls, (0, 0))
                    target[cls] = (prev_b + b, prev_c + c)
    return [merged[k] for k in sorted(merged)]


# ---------------------------------------------------------------------------
# file interchange
# ---------------------------------------------------------------------------

def dump_exposure_csv(exposures: list[CsdExposure], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["csd_id", "province", "occupancy", "material", "building_exposure", "content_exposure"]
        )
        for exp in exposures:
            for cls in sorted(exp.by_class, key=lambda c: (c.occupancy_code, c.material)):
                b, c = exp.by_class[cls]
                writer.writerow(
                    [
                        exp.csd_id,
                        exp.province,
                        cls.occupancy_code,
                        cls.material,
                        f"{from_cents(b):.2f}",
                        f"{from_cents(c):.2f}",
                    ]
                )


def load_exposure_csv(path, geometry_refs: dict[str, str] | None = None) -> list[CsdExposure]:
    rows: dict[str, CsdExposure] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            csd_id = row["csd_id"]
            if csd_id not in rows:
                rows[csd_id] = CsdExposure(
                    csd_id,
                    row["province"],
                    (geometry_refs or {}).get(csd_id, csd_id),
                    {},
                )
            cls = BuildingClass(row["occupancy"], row["material"])
            rows[csd_id].by_class[cls] = (
                to_cents(float(row["building_exposure"])),
                to_cents(float(row["content_exposure"])),
            )
    return [rows[k] for k in sorted(rows)]


def dump_dpm_json(dpms: list[Dpm], path) -> None:
    tree: dict = {}
    for dpm in dpms:
        tree.setdefault(dpm.occupancy, {}).setdefault(dpm.material, {})[dpm.damage_type] = {
            str(level): list(probs) for level, probs in sorted(dpm.rows.items())
        }
    with open(path, "w") as fh:
        json.dump(tree, fh, indent=1)


def load_dpm_json(path, renormalize: bool = True) -> dict[tuple[str, str, str], Dpm]:
    with open(path) as fh:
        tree = json.load(fh)
    out = {}
    for occ, by_mat in tree.items():
        for mat, by_type in by_mat.items():
            for dtype, rows in by_type.items():
                parsed = {int(level): tuple(probs) for level, probs in rows.items()}
                if renormalize:
                    parsed = normalize_dpm_rows(parsed)
                out[(occ, mat, dtype)] = Dpm(occ, mat, dtype, parsed)
    return out


def dump_terms_csv(terms: tuple[InsuranceTerms, ...], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zone", "property_type", "penetration", "deductible", "limit"])
        for t in terms:
            writer.writerow([t.zone, t.property_type, t.penetration, t.deductible_pct, t.limit_pct])


def load_terms_csv(path) -> tuple[InsuranceTerms, ...]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                InsuranceTerms(
                    row["zone"],
                    row["property_type"],
                    float(row["penetration"]),
                    float(row["deductible"]),
                    float(row["limit"]),
                )
            )
    return tuple(out)


def dump_zone_map_csv(zone_map: dict[str, str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["csd_id", "zone"])
        for csd_id in sorted(zone_map):
            writer.writerow([csd_id, zone_map[csd_id]])


def load_zone_map_csv(path) -> dict[str, str]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["csd_id"]] = row["zone"]
    return out
