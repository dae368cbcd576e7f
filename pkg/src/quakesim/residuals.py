"""Goodness-of-fit diagnostics for fitted intensity models.

Residuals are evaluated on the spatial margin of the fitted model (the raw
kernel or constant rate, no margin rescaling), over Voronoi cells generated
by the observed pattern or over a pixel grid.  The N- and L-tests score the
full spatio-temporal model by simulation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ZeroIntensityAtEventError
from .geo import GeoPoint, Polygon, SpatialWindow, VoronoiDiagram, voronoi_tessellate
from .stpp import (
    HomogeneousSpatialIntensity,
    PointPattern,
    SeparableIntensityModel,
    integrate_field,
    integrate_intensity,
    simulate_catalog,
)


@dataclass(frozen=True)
class PixelGrid:
    """Rectangular grid over the window bbox; cells are clipped to the window."""

    window: SpatialWindow
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")

    def edges(self):
        lon_min, lon_max, lat_min, lat_max = self.window.bbox
        return np.linspace(lon_min, lon_max, self.nx + 1), np.linspace(
            lat_min, lat_max, self.ny + 1
        )

    def cells(self) -> list[tuple[int, Polygon]]:
        """(flat index, clipped polygon) for cells that overlap the window."""
        xs, ys = self.edges()
        boundary = self.window.boundary.shapely
        out = []
        for j in range(self.ny):
            for i in range(self.nx):
                rect = Polygon(
                    (
                        (xs[i], ys[j]),
                        (xs[i + 1], ys[j]),
                        (xs[i + 1], ys[j + 1]),
                        (xs[i], ys[j + 1]),
                    )
                )
                clipped = rect.shapely.intersection(boundary)
                if clipped.area <= 0:
                    continue
                out.append((j * self.nx + i, Polygon.from_shapely(clipped)))
        return out

    def bin_events(self, pattern: PointPattern) -> dict[int, int]:
        xs, ys = self.edges()
        counts: dict[int, int] = {}
        for p, _ in pattern.events:
            i = min(int(np.searchsorted(xs, p.lon, side="right")) - 1, self.nx - 1)
            j = min(int(np.searchsorted(ys, p.lat, side="right")) - 1, self.ny - 1)
            i, j = max(i, 0), max(j, 0)
            counts[j * self.nx + i] = counts.get(j * self.nx + i, 0) + 1
        return counts


@dataclass(frozen=True)
class ResidualSet:
    """Per-cell residual values of one kind, plus the deviance score."""

    kind: str  # raw | pearson | deviance
    cells: tuple[Polygon, ...]
    values: np.ndarray
    generators: tuple[GeoPoint, ...] | None = None
    score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.values) != len(self.cells):
            raise ValueError("one value per cell required")


def _spatial_of(model):
    if isinstance(model, SeparableIntensityModel):
        return model.spatial
    return model


def _cell_integral(spatial, cell: Polygon, sqrt: bool = False) -> float:
    if isinstance(spatial, HomogeneousSpatialIntensity):
        rate = math.sqrt(spatial.rate) if sqrt else spatial.rate
        return rate * cell.area
    if sqrt:
        return integrate_field(lambda pts: np.sqrt(spatial(pts)), cell)
    return integrate_field(spatial, cell)


def _tessellation_for(pattern: PointPattern, diagram: VoronoiDiagram | None) -> VoronoiDiagram:
    if diagram is not None:
        return diagram
    return voronoi_tessellate([p for p, _ in pattern.events], pattern.window)


def voronoi_raw(
    pattern: PointPattern, model, diagram: VoronoiDiagram | None = None
) -> ResidualSet:
    """1 - integral of the fitted spatial intensity over each Voronoi cell."""
    diagram = _tessellation_for(pattern, diagram)
    spatial = _spatial_of(model)
    values = np.array([1.0 - _cell_integral(spatial, c) for c in diagram.cells])
    return ResidualSet("raw", diagram.cells, values, diagram.generators)


def voronoi_pearson(
    pattern: PointPattern, model, diagram: VoronoiDiagram | None = None
) -> ResidualSet:
    """Variance-stabilized cell residuals; needs positive intensity at events."""
    diagram = _tessellation_for(pattern, diagram)
    spatial = _spatial_of(model)
    at_events = np.array([spatial.at(g) for g in diagram.generators])
    for idx in np.flatnonzero(at_events <= 0.0):
        raise ZeroIntensityAtEventError(int(idx))
    values = np.array(
        [
            1.0 / math.sqrt(lam) - _cell_integral(spatial, cell, sqrt=True)
            for lam, cell in zip(at_events, diagram.cells)
        ]
    )
    return ResidualSet("pearson", diagram.cells, values, diagram.generators)


def voronoi_deviance(
    pattern: PointPattern, model1, model2, diagram: VoronoiDiagram | None = None
) -> ResidualSet:
    """Per-cell log-likelihood difference; summing gives the ratio score.

    Positive values favor model1.  One tessellation (from the observed
    pattern) is shared by both models.
    """
    diagram = _tessellation_for(pattern, diagram)
    s1, s2 = _spatial_of(model1), _spatial_of(model2)
    at1 = np.array([s1.at(g) for g in diagram.generators])
    at2 = np.array([s2.at(g) for g in diagram.generators])
    for arr in (at1, at2):
        for idx in np.flatnonzero(arr <= 0.0):
            raise ZeroIntensityAtEventError(int(idx))
    values = np.empty(len(diagram.cells))
    for i, cell in enumerate(diagram.cells):
        term1 = math.log(at1[i]) - _cell_integral(s1, cell)
        term2 = math.log(at2[i]) - _cell_integral(s2, cell)
        values[i] = term1 - term2
    return ResidualSet(
        "deviance", diagram.cells, values, diagram.generators, score=math.fsum(values)
    )


def pixel_residuals(
    pattern: PointPattern,
    grid: PixelGrid,
    kind: str = "raw",
    models: Sequence | None = None,
) -> ResidualSet:
    """Raw/Pearson/deviance residuals over a pixel partition of the window."""
    if models is None:
        raise ValueError("models required")
    if kind == "deviance":
        if len(models) != 2:
            raise ValueError("deviance needs exactly two models")
        spatials = [_spatial_of(m) for m in models]
    else:
        if len(models) != 1:
            raise ValueError(f"{kind} residuals take a single model")
        spatials = [_spatial_of(models[0])]

    counts = grid.bin_events(pattern)
    locs = pattern.locations()
    at_events = [s(locs) for s in spatials]
    for arr in at_events:
        if kind in ("pearson", "deviance"):
            for idx in np.flatnonzero(arr <= 0.0):
                raise ZeroIntensityAtEventError(int(idx))

    xs, ys = grid.edges()

    def pixel_of(k: int) -> int:
        p = pattern.events[k][0]
        i = min(int(np.searchsorted(xs, p.lon, side="right")) - 1, grid.nx - 1)
        j = min(int(np.searchsorted(ys, p.lat, side="right")) - 1, grid.ny - 1)
        return max(j, 0) * grid.nx + max(i, 0)

    event_pixel = np.array([pixel_of(k) for k in range(pattern.n)])

    cells = grid.cells()
    values = []
    polys = []
    for flat, poly in cells:
        in_pixel = event_pixel == flat
        if kind == "raw":
            v = counts.get(flat, 0) - _cell_integral(spatials[0], poly)
        elif kind == "pearson":
            v = float((1.0 / np.sqrt(at_events[0][in_pixel])).sum()) - _cell_integral(
                spatials[0], poly, sqrt=True
            )
        else:
            t1 = float(np.log(at_events[0][in_pixel]).sum()) - _cell_integral(spatials[0], poly)
            t2 = float(np.log(at_events[1][in_pixel]).sum()) - _cell_integral(spatials[1], poly)
            v = t1 - t2
        values.append(v)
        polys.append(poly)
    values = np.array(values)
    score = math.fsum(values) if kind == "deviance" else None
    return ResidualSet(kind, tuple(polys), values, None, score=score)


# ---------------------------------------------------------------------------
# N-test and L-test
# ---------------------------------------------------------------------------

def _replicate_seeds(seed: int, s: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2**62, size=s)


def n_test(pattern: PointPattern, model: SeparableIntensityModel, s: int, seed: int) -> float:
    """Fraction of simulations with fewer events than observed.

    Values near 0 or 1 reject the model (conventional two-sided 0.05 rule;
    the caller decides).
    """
    if s < 1:
        raise ValueError("need at least one simulation")
    seeds = _replicate_seeds(seed, s)
    n_years = pattern.period_length
    below = 0
    for rep_seed in seeds:
        events = simulate_catalog(model, n_years, int(rep_seed))
        if len(events) < pattern.n:
            below += 1
    return below / s


def _events_log_likelihood(
    model: SeparableIntensityModel, events, total_mass: float
) -> float:
    if not events:
        return -total_mass
    locs = np.array([(p.lon, p.lat) for _, p in events], dtype=float)
    years = np.array([y for y, _ in events], dtype=float)
    vals = model.spatial(locs) * model.temporal(years) * model.normalization
    if np.any(vals <= 0.0):
        return -math.inf
    return float(np.log(vals).sum() - total_mass)


def l_test(pattern: PointPattern, model: SeparableIntensityModel, s: int, seed: int) -> float:
    """Fraction of simulated log-likelihoods below the observed one.

    A fraction near 0 rejects the model.
    """
    if s < 1:
        raise ValueError("need at least one simulation")
    total_mass = integrate_intensity(model, model.window.boundary)
    obs_events = [(y, p) for p, y in pattern.events]
    ell_obs = _events_log_likelihood(model, obs_events, total_mass)
    seeds = _replicate_seeds(seed, s)
    below = 0
    for rep_seed in seeds:
        sim = simulate_catalog(model, pattern.period_length, int(rep_seed))
        if _events_log_likelihood(model, sim, total_mass) < ell_obs:
            below += 1
    return below / s


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def residuals_to_csv(resset: ResidualSet, path) -> None:
    """Write `cell_id,kind,value,cell_area,generator_lon,generator_lat`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "kind", "value", "cell_area", "generator_lon", "generator_lat"])
        for i, (cell, value) in enumerate(zip(resset.cells, resset.values)):
            if resset.generators is not None:
                gen = resset.generators[i]
                glon, glat = gen.lon, gen.lat
            else:
                c = cell.shapely.centroid
                glon, glat = c.x, c.y
            writer.writerow([i, resset.kind, repr(float(value)), repr(cell.area), glon, glat])


def residuals_summary_json(resset: ResidualSet, path=None) -> dict:
    summary = {
        "kind": resset.kind,
        "n_cells": len(resset.cells),
        "sum": math.fsum(resset.values),
        "score": resset.score,
        "min": float(resset.values.min()),
        "max": float(resset.values.max()),
    }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2)
    return summary
