"""Point patterns, separable kernel intensity models and catalog simulation.

The spatial margin uses a radially symmetric quartic kernel
k(u) = (3/pi)(1-u^2)^2 on [0, 1], scaled as k_h(u) = h^-2 k(u/h), summed over
events with no edge correction, so the estimate integrates to n over the
whole plane and to <= n over the window.  The temporal margin is a Gaussian
kernel density with a rule-of-thumb bandwidth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import shapely

from .errors import IsolatedPointsError, SimulationSetupError, ZeroSpreadError
from .geo import GeoPoint, Polygon, SpatialWindow

INTEGRATION_REL_TOL = 1e-4
MAX_GRID_CELLS = 1024  # per axis cap for the adaptive quadrature
_EVAL_CHUNK = 16384

QUARTIC_PEAK = 3.0 / math.pi  # k(0)


def _quartic_max_slope() -> float:
    # sup |k'(u)| on [0, 1], attained at u = 1/sqrt(3); bounds the intensity
    # gradient when certifying the rejection-sampling majorant
    u = 1.0 / math.sqrt(3.0)
    return abs(-4.0 * u * (1.0 - u * u)) * (3.0 / math.pi)


@dataclass(frozen=True)
class PointPattern:
    """Observed events (location, integer year) in a window over a period."""

    events: tuple[tuple[GeoPoint, int], ...]
    window: SpatialWindow
    period: tuple[int, int]

    def __post_init__(self):
        if not self.events:
            raise ValueError("pattern needs at least one event")
        y0, y1 = self.period
        if y1 < y0:
            raise ValueError("period end before start")
        for i, (p, year) in enumerate(self.events):
            if not self.window.contains(p):
                raise ValueError(f"event {i} outside window")
            if not y0 <= year <= y1:
                raise ValueError(f"event {i} year {year} outside period {self.period}")

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def period_length(self) -> int:
        return self.period[1] - self.period[0] + 1

    def locations(self) -> np.ndarray:
        return np.array([(p.lon, p.lat) for p, _ in self.events], dtype=float)

    def years(self) -> np.ndarray:
        return np.array([t for _, t in self.events], dtype=float)


def load_catalog_csv(path, window: SpatialWindow, period=None) -> PointPattern:
    """Read an event catalog with header ``lon,lat,year``."""
    events = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            events.append((GeoPoint(float(row["lon"]), float(row["lat"])), int(row["year"])))
    if period is None:
        years = [y for _, y in events]
        period = (min(years), max(years))
    return PointPattern(tuple(events), window, period)


def dump_catalog_csv(events: Sequence[tuple[int, GeoPoint]], path) -> None:
    """Write a simulated catalog with header ``lon,lat,year,event_id``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat", "year", "event_id"])
        for i, (year, p) in enumerate(events):
            writer.writerow([repr(p.lon), repr(p.lat), year, i])


# ---------------------------------------------------------------------------
# spatial intensities
# ---------------------------------------------------------------------------

def _quartic(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = u <= 1.0
    w = 1.0 - u[inside] ** 2
    out[inside] = (3.0 / math.pi) * w * w
    return out


@dataclass(frozen=True)
class SpatialKernelIntensity:
    """Quartic-kernel spatial intensity; integrates to n over the plane."""

    support_points: np.ndarray  # (n, 2) lon/lat
    bandwidth_h: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.support_points, dtype=float))
        object.__setattr__(self, "support_points", pts)
        if self.bandwidth_h <= 0:
            raise ValueError("bandwidth must be > 0")

    @property
    def n(self) -> int:
        return len(self.support_points)

    @property
    def mass(self) -> float:
        return float(self.n)

    def __call__(self, lonlat: np.ndarray) -> np.ndarray:
        """Evaluate at an (m, 2) array of lon/lat points."""
        pts = np.atleast_2d(np.asarray(lonlat, dtype=float))
        h = self.bandwidth_h
        out = np.empty(len(pts))
        for lo in range(0, len(pts), _EVAL_CHUNK):
            chunk = pts[lo : lo + _EVAL_CHUNK]
            d = np.sqrt(
                (chunk[:, None, 0] - self.support_points[None, :, 0]) ** 2
                + (chunk[:, None, 1] - self.support_points[None, :, 1]) ** 2
            )
            out[lo : lo + _EVAL_CHUNK] = _quartic(d / h).sum(axis=1) / (h * h)
        return out

    def at(self, point: GeoPoint) -> float:
        return float(self(np.array([[point.lon, point.lat]]))[0])

    def leave_one_out_at_events(self) -> np.ndarray:
        """lambda_{-l}(x_l) for every support point l."""
        d = _pairwise_distances(self.support_points)
        h = self.bandwidth_h
        k = _quartic(d / h) / (h * h)
        np.fill_diagonal(k, 0.0)
        return k.sum(axis=1)


@dataclass(frozen=True)
class HomogeneousSpatialIntensity:
    """Constant spatial rate (model P)."""

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")

    def __call__(self, lonlat: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(lonlat, dtype=float))
        return np.full(len(pts), self.rate)

    def at(self, point: GeoPoint) -> float:
        return self.rate


def spatial_intensity_at(model: SpatialKernelIntensity, x: GeoPoint) -> float:
    return model.at(x)


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


# ---------------------------------------------------------------------------
# temporal intensity
# ---------------------------------------------------------------------------

def silverman_bandwidth(times: Sequence[float]) -> float:
    """Rule-of-thumb Gaussian bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5)."""
    arr = np.asarray(list(times), dtype=float)
    if len(arr) < 2:
        raise ValueError("need at least two observations")
    sd = float(np.std(arr, ddof=1))
    q75, q25 = np.percentile(arr, [75, 25])
    iqr_term = (q75 - q25) / 1.34
    a = min(sd, iqr_term) if iqr_term > 0 else sd
    if a <= 0:
        raise ZeroSpreadError("sample has zero spread")
    return 0.9 * a * len(arr) ** (-0.2)


@dataclass(frozen=True)
class TemporalKernelIntensity:
    """Gaussian kernel density over event years (integrates to 1 over the line)."""

    support_times: np.ndarray
    bandwidth_ht: float

    def __post_init__(self):
        object.__setattr__(
            self, "support_times", np.asarray(self.support_times, dtype=float)
        )
        if self.bandwidth_ht <= 0:
            raise ValueError("temporal bandwidth must be > 0")

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = (t[:, None] - self.support_times[None, :]) / self.bandwidth_ht
        dens = np.exp(-0.5 * z * z).sum(axis=1)
        return dens / (len(self.support_times) * self.bandwidth_ht * math.sqrt(2 * math.pi))

    def integral(self, t0: float, t1: float) -> float:
        from scipy.stats import norm

        lo = norm.cdf((t1 - self.support_times) / self.bandwidth_ht)
        hi = norm.cdf((t0 - self.support_times) / self.bandwidth_ht)
        return float((lo - hi).mean())


@dataclass(frozen=True)
class UniformTemporalIntensity:
    """Constant temporal density 1/|T| over the period."""

    period: tuple[int, int]

    @property
    def _length(self) -> float:
        return float(self.period[1] - self.period[0] + 1)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.full(len(t), 1.0 / self._length)

    def integral(self, t0: float, t1: float) -> float:
        return max(0.0, min(t1, self.period[1] + 1) - max(t0, self.period[0])) / self._length


# ---------------------------------------------------------------------------
# quadrature over polygons
# ---------------------------------------------------------------------------

def integrate_field(
    func: Callable[[np.ndarray], np.ndarray],
    region: Polygon,
    rel_tol: float = INTEGRATION_REL_TOL,
    max_cells: int = MAX_GRID_CELLS,
    start_cells: int = 32,
) -> float:
    """Midpoint quadrature over a polygon, refined until successive grid
    doublings agree to ``rel_tol``; cell centers outside the region are masked.
    """
    geom = region.shapely
    minx, miny, maxx, maxy = geom.bounds
    if maxx <= minx or maxy <= miny:
        return 0.0
    prev = None
    n = start_cells
    while True:
        xs = np.linspace(minx, maxx, n + 1)
        ys = np.linspace(miny, maxy, n + 1)
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        gx, gy = np.meshgrid(cx, cy)
        gx, gy = gx.ravel(), gy.ravel()
        mask = shapely.contains_xy(geom, gx, gy)
        cell_area = (xs[1] - xs[0]) * (ys[1] - ys[0])
        if not mask.any():
            total = 0.0
        else:
            total = float(func(np.column_stack([gx[mask], gy[mask]])).sum() * cell_area)
        if prev is not None:
            scale = max(abs(total), abs(prev), 1e-300)
            if abs(total - prev) <= rel_tol * scale or n >= max_cells:
                return total
        elif n >= max_cells:
            return total
        prev = total
        n *= 2


def integrate_intensity(model, region: Polygon, period: tuple[float, float] | None = None) -> float:
    """Expected count of the model over a region (optionally x a time span).

    Constant spatial rates integrate exactly as rate x area; kernel models go
    through the adaptive midpoint quadrature.  ``model`` may be a spatial
    intensity or a full separable model.
    """
    if isinstance(model, SeparableIntensityModel):
        spatial_part = integrate_intensity(model.spatial, region)
        if period is None:
            period = model.period
        temporal_part = model.temporal.integral(period[0], period[1] + 1)
        return spatial_part * temporal_part * model.normalization
    if isinstance(model, HomogeneousSpatialIntensity):
        return model.rate * region.area
    return integrate_field(model, region)


# ---------------------------------------------------------------------------
# separable model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparableIntensityModel:
    """lambda(x, t) = lambda_X(x) * lambda_T(t) * normalization.

    ``normalization`` is fixed at fit time so the product integrates to n
    over window x period.  ``kind`` tags homogeneous ("P") vs kernel ("H").
    """

    spatial: SpatialKernelIntensity | HomogeneousSpatialIntensity
    temporal: TemporalKernelIntensity | UniformTemporalIntensity
    window: SpatialWindow
    period: tuple[int, int]
    n_events: int
    normalization: float = 1.0
    kind: str = "H"

    @property
    def mass(self) -> float:
        """Expected count over window x period (n by construction)."""
        return float(self.n_events)

    @property
    def period_length(self) -> int:
        return self.period[1] - self.period[0] + 1

    def spatial_at(self, point: GeoPoint) -> float:
        return self.spatial.at(point)

    def intensity_at(self, point: GeoPoint, year: float) -> float:
        return (
            self.spatial.at(point)
            * float(self.temporal(np.array([year]))[0])
            * self.normalization
        )

    def log_likelihood(self, pattern: PointPattern, total_mass: float | None = None) -> float:
        """Sum of log intensities at events minus total mass over A x T.

        ``total_mass`` lets callers reuse one quadrature across many patterns
        scored under the same model.
        """
        locs = pattern.locations()
        lam_x = self.spatial(locs)
        lam_t = self.temporal(pattern.years())
        vals = lam_x * lam_t * self.normalization
        if np.any(vals <= 0.0):
            return -math.inf
        if total_mass is None:
            total_mass = integrate_intensity(self, self.window.boundary)
        return float(np.log(vals).sum() - total_mass)


def fit_homogeneous(pattern: PointPattern) -> SeparableIntensityModel:
    """Model P: constant spatial rate n/|A| and uniform temporal density."""
    rate = pattern.n / pattern.window.area
    return SeparableIntensityModel(
        spatial=HomogeneousSpatialIntensity(rate),
        temporal=UniformTemporalIntensity(pattern.period),
        window=pattern.window,
        period=pattern.period,
        n_events=pattern.n,
        normalization=1.0,
        kind="P",
    )


def fit_kernel_model(
    pattern: PointPattern,
    h: float | None = None,
    method: str = "lcv",
    grid: Sequence[float] | None = None,
    ht: float | None = None,
) -> SeparableIntensityModel:
    """Model H: quartic spatial kernel x Gaussian temporal kernel."""
    if h is None:
        h = select_bandwidth(pattern, method=method, grid=grid)
    spatial = SpatialKernelIntensity(pattern.locations(), h)
    years = pattern.years()
    if ht is None:
        try:
            ht = silverman_bandwidth(years)
        except (ZeroSpreadError, ValueError):
            ht = 1.0  # degenerate temporal spread; one-year catalogs
    temporal = TemporalKernelIntensity(years, ht)
    spatial_mass = integrate_field(spatial, pattern.window.boundary)
    temporal_mass = temporal.integral(pattern.period[0], pattern.period[1] + 1)
    norm = pattern.n / (spatial_mass * temporal_mass)
    return SeparableIntensityModel(
        spatial=spatial,
        temporal=temporal,
        window=pattern.window,
        period=pattern.period,
        n_events=pattern.n,
        normalization=norm,
        kind="H",
    )


# ---------------------------------------------------------------------------
# bandwidth selection
# ---------------------------------------------------------------------------

def default_bandwidth_grid(pattern: PointPattern, size: int = 32) -> np.ndarray:
    """Log-spaced candidates from 0.1 x mean nearest-neighbor distance up to
    2 x the window diagonal."""
    pts = pattern.locations()
    if len(pts) < 2:
        raise ValueError("need at least two events")
    d = _pairwise_distances(pts)
    np.fill_diagonal(d, np.inf)
    mean_nn = d.min(axis=1).mean()
    lo = max(0.1 * mean_nn, 1e-9)
    hi = 2.0 * pattern.window.diagonal()
    return np.geomspace(lo, hi, size)


def select_bandwidth(
    pattern: PointPattern,
    method: str = "lcv",
    grid: Sequence[float] | None = None,
    quad_cells: int = 128,
) -> float:
    """Pick the spatial bandwidth from a candidate grid.

    lcv maximizes sum_l log lambda_{-l}(x_l) - integral(lambda); mse minimizes
    the least-squares cross-validation score integral(lambda^2) -
    2 sum_l lambda_{-l}(x_l).  Ties go to the smaller candidate.
    """
    if method not in ("lcv", "mse"):
        raise ValueError(f"unknown method {method!r}")
    if grid is None:
        grid = default_bandwidth_grid(pattern)
    hs = np.sort(np.asarray(list(grid), dtype=float))
    if len(hs) == 0 or np.any(hs <= 0):
        raise ValueError("candidate grid must be non-empty and positive")
    pts = pattern.locations()
    if len(pts) < 2:
        raise ValueError("need at least two events")

    pair_d = _pairwise_distances(pts)

    # one shared evaluation grid over the window for the integral terms
    geom = pattern.window.boundary.shapely
    minx, miny, maxx, maxy = geom.bounds
    xs = np.linspace(minx, maxx, quad_cells + 1)
    ys = np.linspace(miny, maxy, quad_cells + 1)
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    gx, gy = np.meshgrid(cx, cy)
    gx, gy = gx.ravel(), gy.ravel()
    inside = shapely.contains_xy(geom, gx, gy)
    centers = np.column_stack([gx[inside], gy[inside]])
    cell_area = (xs[1] - xs[0]) * (ys[1] - ys[0])
    grid_d = np.sqrt(
        (centers[:, None, 0] - pts[None, :, 0]) ** 2
        + (centers[:, None, 1] - pts[None, :, 1]) ** 2
    )

    scores = np.empty(len(hs))
    loo_ok = np.zeros(len(hs), dtype=bool)
    isolated: list[int] = []
    for j, h in enumerate(hs):
        k_loo = _quartic(pair_d / h) / (h * h)
        np.fill_diagonal(k_loo, 0.0)
        lam_loo = k_loo.sum(axis=1)
        lam_grid = (_quartic(grid_d / h) / (h * h)).sum(axis=1)
        if method == "lcv":
            if np.any(lam_loo <= 0.0):
                scores[j] = -np.inf
                isolated = np.flatnonzero(lam_loo <= 0.0).tolist()
                continue
            loo_ok[j] = True
            scores[j] = float(np.log(lam_loo).sum() - lam_grid.sum() * cell_area)
        else:
            loo_ok[j] = True
            scores[j] = float((lam_grid**2).sum() * cell_area - 2.0 * lam_loo.sum())

    if method == "lcv":
        if not loo_ok.any():
            raise IsolatedPointsError(isolated)
        best = int(np.argmax(scores))
    else:
        best = int(np.argmin(scores))
    return float(hs[best])


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

_STREAM_CATALOG = 0x5EED


def _spatial_majorant(model: SeparableIntensityModel, grid_n: int = 256) -> float:
    """Rigorous upper bound on sup lambda_X over the window bbox."""
    spatial = model.spatial
    if isinstance(spatial, HomogeneousSpatialIntensity):
        if spatial.rate <= 0:
            raise SimulationSetupError("zero spatial rate")
        return spatial.rate
    lon_min, lon_max, lat_min, lat_max = model.window.bbox
    xs = np.linspace(lon_min, lon_max, grid_n)
    ys = np.linspace(lat_min, lat_max, grid_n)
    gx, gy = np.meshgrid(xs, ys)
    vals = spatial(np.column_stack([gx.ravel(), gy.ravel()]))
    peak = max(float(vals.max()), float(spatial(spatial.support_points).max()))
    if peak <= 0:
        raise SimulationSetupError("intensity vanishes on the window")
    # Lipschitz slack: n * sup|k'| / h^3 times half the grid diagonal
    h = spatial.bandwidth_h
    spacing = math.hypot(
        (lon_max - lon_min) / (grid_n - 1), (lat_max - lat_min) / (grid_n - 1)
    )
    slack = spatial.n * _quartic_max_slope() / h**3 * (spacing / 2.0)
    return peak + slack


def simulate_catalog(
    model: SeparableIntensityModel,
    n_years: int,
    seed: int,
    annual_rate: float | None = None,
    start_year: int | None = None,
) -> list[tuple[int, GeoPoint]]:
    """Simulate (year, location) events: Poisson annual counts and spatial
    locations drawn from the normalized spatial margin by rejection.

    Each year consumes an independent substream keyed by (seed, year index),
    so results do not depend on how years are scheduled across workers.
    """
    if n_years < 1:
        raise ValueError("n_years must be >= 1")
    nu = annual_rate if annual_rate is not None else model.mass / model.period_length
    if nu < 0:
        raise ValueError("annual rate must be >= 0")
    if start_year is None:
        start_year = model.period[0]
    majorant = _spatial_majorant(model)
    lon_min, lon_max, lat_min, lat_max = model.window.bbox
    boundary = model.window.boundary.shapely
    events: list[tuple[int, GeoPoint]] = []
    for yi in range(n_years):
        rng = np.random.default_rng([seed, _STREAM_CATALOG, yi])
        count = int(rng.poisson(nu))
        accepted = 0
        while accepted < count:
            m = max(64, 4 * (count - accepted))
            lon = rng.uniform(lon_min, lon_max, m)
            lat = rng.uniform(lat_min, lat_max, m)
            v = rng.uniform(0.0, majorant, m)
            lam = model.spatial(np.column_stack([lon, lat]))
            ok = (v <= lam) & shapely.contains_xy(boundary, lon, lat)
            for j in np.flatnonzero(ok):
                if accepted == count:
                    break
                events.append((start_year + yi, GeoPoint(float(lon[j]), float(lat[j]))))
                accepted += 1
    return events
