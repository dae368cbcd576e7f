"""Hazard grid ingestion, per-site GPD fits and ground-motion conversions.

Each grid site carries mean PGA (in g) at eight annual exceedance
probabilities; a GPD is fitted so those quantiles are the matching return
levels.  Simulated PGA converts to MMI via Wald's relation (PGA in cm/s2)
and to moment magnitude via Bakun's east/west distance attenuation, with the
significance constraint M > 6 enforced by rejection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    EmptyGridError,
    FitDivergedError,
    InvalidDistanceError,
    InvalidPgaError,
    InvalidSiteError,
    RadiusOverflowError,
    SignificanceUnreachableError,
)
from .geo import GeoPoint, haversine_km

HAZARD_PROBS = (0.02, 0.01375, 0.0100, 0.00445, 0.0021, 0.0010, 0.0005, 0.000404)
HAZARD_CSV_COLUMNS = (
    "pga_p0_02",
    "pga_p0_01375",
    "pga_p0_01",
    "pga_p0_00445",
    "pga_p0_0021",
    "pga_p0_001",
    "pga_p0_0005",
    "pga_p0_000404",
)
G_CM_S2 = 980.665
EAST_LON_THRESHOLD = -100.0  # lon > -100 is Eastern Canada
MMI_FLOOR, MMI_CEIL = 1.0, 12.0
DEFAULT_RADIUS_CAP_KM = 5000.0


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations for the stochastic conversion steps (0 = off).

    Wald's relation carries a 1.08 standard error; the Bakun east/west
    equations have no fixed errors here, so those default to zero and are
    plain configuration knobs.
    """

    wald_sd: float = 0.0
    bakun_east_sd: float = 0.0
    bakun_west_sd: float = 0.0


@dataclass(frozen=True)
class HazardSite:
    """Grid point with PGA return levels at the eight standard probabilities."""

    location: GeoPoint
    pga_quantiles: tuple[tuple[float, float], ...]  # (annual prob, PGA in g)

    def __post_init__(self):
        q = tuple((float(p), float(g)) for p, g in self.pga_quantiles)
        object.__setattr__(self, "pga_quantiles", q)
        if len(q) != len(HAZARD_PROBS):
            raise InvalidSiteError(f"expected {len(HAZARD_PROBS)} quantiles, got {len(q)}")
        probs = [p for p, _ in q]
        pgas = [g for _, g in q]
        if any(abs(p - ref) > 1e-12 for p, ref in zip(probs, HAZARD_PROBS)):
            raise InvalidSiteError(f"unexpected probabilities {probs}")
        if any(b >= a for a, b in zip(probs, probs[1:])):
            raise InvalidSiteError("probabilities must be strictly decreasing")
        if any(g <= 0 for g in pgas):
            raise InvalidSiteError("PGA values must be positive")
        if any(b <= a for a, b in zip(pgas, pgas[1:])):
            raise InvalidSiteError("PGA must be strictly increasing")

    def pga_values(self) -> np.ndarray:
        return np.array([g for _, g in self.pga_quantiles])


@dataclass(frozen=True)
class SiteGpdFit:
    """GPD over PGA excesses above the 50-year return level.

    ``u`` is the PGA at annual probability 0.02 and ``lam`` the matching
    exceedance rate; only (sigma, xi) are fitted.
    """

    u: float
    sigma: float
    xi: float
    lam: float = 0.02
    rms_error: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def quantile_at_rate(self, p: float) -> float:
        """Return level exceeded with annual probability p (p <= lam)."""
        return _gpd_return_level(self.u, self.sigma, self.xi, self.lam, p)

    def upper_bound(self) -> float:
        return self.u - self.sigma / self.xi if self.xi < 0 else math.inf

    def sample_pga(self, rng) -> float:
        """One PGA draw (in g): threshold plus a GPD excess."""
        v = rng.uniform()
        if abs(self.xi) < 1e-12:
            excess = -self.sigma * math.log1p(-v)
        else:
            excess = self.sigma / self.xi * ((1.0 - v) ** (-self.xi) - 1.0)
        return self.u + excess

    def excess_cdf(self, pga_g) -> np.ndarray:
        """CDF of the PGA value (in g) under the fitted exceedance model."""
        x = np.maximum(np.asarray(pga_g, dtype=float) - self.u, 0.0)
        if abs(self.xi) < 1e-12:
            return 1.0 - np.exp(-x / self.sigma)
        z = 1.0 + self.xi * x / self.sigma
        z = np.maximum(z, 1e-300)
        out = 1.0 - z ** (-1.0 / self.xi)
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class ShakeSample:
    """Accepted ground-shaking draw at an epicenter."""

    pga: float  # cm/s2
    mmi_epicenter: float
    magnitude: float
    east: bool
    distance_to_site_km: float

    def __post_init__(self):
        if not self.magnitude > 6.0:
            raise ValueError("significant events require magnitude > 6")


# ---------------------------------------------------------------------------
# GPD fitting to the eight return levels
# ---------------------------------------------------------------------------

def _gpd_return_level(u: float, sigma: float, xi: float, lam: float, p: float) -> float:
    log_ratio = math.log(lam / p)
    if abs(xi) < 1e-12:
        return u + sigma * log_ratio
    return u + sigma * math.expm1(xi * log_ratio) / xi


def fit_site_gpd(site: HazardSite, max_iter: int = 500) -> SiteGpdFit:
    """Least-squares (sigma, xi) so the GPD return levels match the seven
    quantiles beyond the threshold; Levenberg-Marquardt from a two-quantile
    start."""
    pgas = site.pga_values()
    u = float(pgas[0])
    lam = HAZARD_PROBS[0]
    probs = np.array(HAZARD_PROBS[1:])
    targets = pgas[1:]
    log_ratios = np.log(lam / probs)
    excesses = targets - u

    # start: solve the first/last quantile ratio for xi, then back out sigma
    ratio = excesses[-1] / excesses[0]
    r1, r7 = log_ratios[0], log_ratios[-1]

    def ratio_at(xi):
        if abs(xi) < 1e-12:
            return r7 / r1
        return math.expm1(xi * r7) / math.expm1(xi * r1)

    lo, hi = -0.9, 2.0
    if ratio_at(lo) > ratio:
        xi0 = lo
    elif ratio_at(hi) < ratio:
        xi0 = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if ratio_at(mid) < ratio:
                lo = mid
            else:
                hi = mid
        xi0 = 0.5 * (lo + hi)
    if abs(xi0) < 1e-12:
        sigma0 = excesses[0] / r1
    else:
        sigma0 = xi0 * excesses[0] / math.expm1(xi0 * r1)
    sigma0 = max(sigma0, 1e-12)

    def residuals(params):
        log_sigma, xi = params
        sigma = math.exp(log_sigma)
        if abs(xi) < 1e-12:
            model = u + sigma * log_ratios
        else:
            model = u + sigma * np.expm1(xi * log_ratios) / xi
        return model - targets

    result = least_squares(
        residuals,
        x0=[math.log(sigma0), xi0],
        method="lm",
        max_nfev=max_iter,
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    if not result.success and result.status <= 0:
        raise FitDivergedError(f"site GPD fit did not converge: {result.message}")
    sigma = math.exp(result.x[0])
    xi = float(result.x[1])
    rms = float(np.sqrt(np.mean(result.fun**2)))
    return SiteGpdFit(u=u, sigma=sigma, xi=xi, lam=lam, rms_error=rms)


# ---------------------------------------------------------------------------
# grid operations
# ---------------------------------------------------------------------------

def nearest_site(epicenter: GeoPoint, grid: Sequence[HazardSite]) -> tuple[HazardSite, float]:
    """Closest grid site by haversine; distance clamped to >= 1 km for the
    attenuation step.  Ties break toward the lowest grid index."""
    if not grid:
        raise EmptyGridError("hazard grid is empty")
    best_i, best_d = 0, math.inf
    for i, site in enumerate(grid):
        d = haversine_km(epicenter, site.location)
        if d < best_d:
            best_i, best_d = i, d
    return grid[best_i], max(1.0, best_d)


def load_hazard_grid_csv(path) -> list[HazardSite]:
    sites = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            loc = GeoPoint(float(row["lon"]), float(row["lat"]))
            quantiles = tuple(
                (p, float(row[col])) for p, col in zip(HAZARD_PROBS, HAZARD_CSV_COLUMNS)
            )
            sites.append(HazardSite(loc, quantiles))
    if not sites:
        raise EmptyGridError(f"no sites in {path}")
    return sites


def dump_hazard_grid_csv(sites: Sequence[HazardSite], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat", *HAZARD_CSV_COLUMNS])
        for s in sites:
            writer.writerow([s.location.lon, s.location.lat, *(g for _, g in s.pga_quantiles)])


# ---------------------------------------------------------------------------
# intensity / magnitude conversions
# ---------------------------------------------------------------------------

def wald_mmi(pga_cm_s2: float, noise_sd: float = 0.0, rng=None) -> float:
    """MMI = 3.66 log10(PGA) - 1.66 for PGA in cm/s2, clamped to [1, 12]."""
    if pga_cm_s2 <= 0:
        raise InvalidPgaError(f"PGA {pga_cm_s2} must be > 0")
    mmi = 3.66 * math.log10(pga_cm_s2) - 1.66
    if noise_sd > 0.0:
        if rng is None:
            raise ValueError("rng required when noise is enabled")
        mmi += noise_sd * rng.standard_normal()
    return min(MMI_CEIL, max(MMI_FLOOR, mmi))


def bakun_magnitude(
    mmi: float, d_km: float, east: bool, noise_sd: float = 0.0, rng=None
) -> float:
    """Moment magnitude from felt intensity at an epicentral distance."""
    if d_km < 1.0:
        raise InvalidDistanceError(f"distance {d_km} below the 1 km clamp")
    if east:
        m = (mmi - 1.41 + 0.00345 * d_km + 2.08 * math.log10(d_km)) / 1.68
    else:
        m = (mmi - 5.07 + 3.69 * math.log10(d_km)) / 1.09
    if noise_sd > 0.0:
        if rng is None:
            raise ValueError("rng required when noise is enabled")
        m += noise_sd * rng.standard_normal()
    return m


def isoseismal_radii(
    magnitude: float,
    mmi_top: int,
    east: bool,
    cap_km: float = DEFAULT_RADIUS_CAP_KM,
    tol_km: float = 0.01,
) -> list[tuple[int, float]]:
    """Ring radii for integer MMI levels from ``mmi_top`` down to 6.

    West solves the attenuation in closed form; east bisects the monotone
    distance equation on [1 km, cap].  Radii below 1 km clamp to 1 km.
    """
    if mmi_top < 6:
        raise ValueError("mmi_top must be >= 6")
    if magnitude < 6.0:
        # the M = 6 boundary is allowed: it reproduces the quoted felt-distance
        # checks even though simulated events are strictly above 6
        raise ValueError("magnitude must be >= 6")
    out = []
    for level in range(int(mmi_top), 5, -1):
        if east:
            target = 1.68 * magnitude - level + 1.41

            def f(r):
                return 0.00345 * r + 2.08 * math.log10(r)

            if f(cap_km) < target:
                raise RadiusOverflowError(
                    f"MMI {level} radius exceeds the {cap_km} km cap"
                )
            if f(1.0) >= target:
                radius = 1.0
            else:
                lo, hi = 1.0, cap_km
                while hi - lo > tol_km:
                    mid = 0.5 * (lo + hi)
                    if f(mid) < target:
                        lo = mid
                    else:
                        hi = mid
                radius = 0.5 * (lo + hi)
        else:
            radius = 10.0 ** ((1.09 * magnitude - level + 5.07) / 3.69)
            if radius > cap_km:
                raise RadiusOverflowError(
                    f"MMI {level} radius {radius:.0f} km exceeds the {cap_km} km cap"
                )
            radius = max(1.0, radius)
        out.append((level, radius))
    return out


# ---------------------------------------------------------------------------
# PGA simulation with the significance constraint
# ---------------------------------------------------------------------------

def simulate_site_pga(
    fit: SiteGpdFit,
    d_km: float,
    east: bool,
    rng,
    max_tries: int = 100,
    noise: NoiseConfig = NoiseConfig(),
) -> ShakeSample:
    """Draw PGA from the site GPD until the implied moment magnitude
    exceeds 6; raises after ``max_tries`` rejected draws."""
    if d_km < 1.0:
        raise InvalidDistanceError(f"distance {d_km} below the 1 km clamp")
    bakun_sd = noise.bakun_east_sd if east else noise.bakun_west_sd
    for _ in range(max_tries):
        pga_g = fit.sample_pga(rng)
        pga = pga_g * G_CM_S2
        mmi = wald_mmi(pga, noise.wald_sd, rng)
        magnitude = bakun_magnitude(mmi, d_km, east, bakun_sd, rng)
        if magnitude > 6.0:
            return ShakeSample(
                pga=pga,
                mmi_epicenter=mmi,
                magnitude=magnitude,
                east=east,
                distance_to_site_km=d_km,
            )
    raise SignificanceUnreachableError(
        f"no magnitude > 6 sample in {max_tries} tries (d={d_km} km, east={east})"
    )
