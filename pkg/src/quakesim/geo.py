"""Geometry primitives: points, polygons, windows, circles and Voronoi cells.

Voronoi construction and polygon areas live in planar lon/lat coordinates;
distances reported in km use the haversine formula; area *fractions* needed
by the loss engine are computed on a local azimuthal equal-area projection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import shapely
from scipy.spatial import Voronoi as _Voronoi
from shapely.geometry import MultiPolygon as _SMultiPolygon
from shapely.geometry import Polygon as _SPolygon

from .errors import (
    DuplicateGeneratorError,
    InvalidRadiusError,
    OutOfWindowError,
    ZeroAreaRegionError,
)

EARTH_RADIUS_KM = 6371.0

Ring = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class GeoPoint:
    """Event or site location in degrees (lon in [-180, 180], lat in [-90, 90])."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")

    def as_tuple(self) -> tuple[float, float]:
        return (self.lon, self.lat)


def _as_ring(points: Iterable) -> Ring:
    ring = []
    for p in points:
        if isinstance(p, GeoPoint):
            ring.append((float(p.lon), float(p.lat)))
        else:
            ring.append((float(p[0]), float(p[1])))
    # drop an explicit closing vertex; closure is logical
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    return tuple(ring)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon (one exterior ring, optional holes).

    ``extra_parts`` carries additional disjoint parts in the rare case a
    window clip splits a cell; most polygons have none and behave as plain
    single-ring polygons.  Vertices are (lon, lat) pairs; the closing vertex
    is implicit.
    """

    exterior: Ring
    holes: tuple[Ring, ...] = ()
    extra_parts: tuple[tuple[Ring, tuple[Ring, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exterior", _as_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in self.holes))
        if len(self.exterior) < 3:
            raise ValueError("polygon exterior needs at least 3 vertices")

    @cached_property
    def shapely(self) -> _SPolygon | _SMultiPolygon:
        first = _SPolygon(self.exterior, [list(h) for h in self.holes])
        if not self.extra_parts:
            return first
        parts = [first]
        for ext, holes in self.extra_parts:
            parts.append(_SPolygon(ext, [list(h) for h in holes]))
        return _SMultiPolygon(parts)

    @classmethod
    def from_shapely(cls, geom) -> "Polygon":
        if geom.geom_type == "Polygon":
            parts = [geom]
        elif geom.geom_type == "MultiPolygon":
            parts = [g for g in geom.geoms if g.area > 0]
        else:  # GeometryCollection from a degenerate clip
            parts = [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon"]
        if not parts:
            raise ValueError(f"no polygonal content in {geom.geom_type}")
        rings = [
            (_as_ring(p.exterior.coords), tuple(_as_ring(r.coords) for r in p.interiors))
            for p in parts
        ]
        ext0, holes0 = rings[0]
        return cls(ext0, holes0, tuple(rings[1:]))

    @property
    def area(self) -> float:
        """Planar area in the coordinate units (squared degrees for lon/lat)."""
        return self.shapely.area

    def contains(self, point: GeoPoint, strict: bool = True) -> bool:
        if strict:
            return bool(shapely.contains_xy(self.shapely, point.lon, point.lat))
        return bool(self.shapely.covers(shapely.Point(point.lon, point.lat)))

    def is_valid(self) -> bool:
        return bool(self.shapely.is_valid) and self.area > 0

    def to_geojson(self) -> dict:
        """RFC 7946 geometry (Polygon, or MultiPolygon when split)."""

        def closed(ring: Ring) -> list[list[float]]:
            pts = [list(p) for p in ring]
            pts.append(list(ring[0]))
            return pts

        if not self.extra_parts:
            return {
                "type": "Polygon",
                "coordinates": [closed(self.exterior)] + [closed(h) for h in self.holes],
            }
        coords = [[closed(self.exterior)] + [closed(h) for h in self.holes]]
        for ext, holes in self.extra_parts:
            coords.append([closed(ext)] + [closed(h) for h in holes])
        return {"type": "MultiPolygon", "coordinates": coords}

    @classmethod
    def from_geojson(cls, geometry: dict) -> "Polygon":
        gtype = geometry["type"]
        if gtype == "Polygon":
            rings = geometry["coordinates"]
            return cls(_as_ring(rings[0]), tuple(_as_ring(r) for r in rings[1:]))
        if gtype == "MultiPolygon":
            parts = geometry["coordinates"]
            ext0 = _as_ring(parts[0][0])
            holes0 = tuple(_as_ring(r) for r in parts[0][1:])
            extra = tuple(
                (_as_ring(p[0]), tuple(_as_ring(r) for r in p[1:])) for p in parts[1:]
            )
            return cls(ext0, holes0, extra)
        raise ValueError(f"unsupported geometry type {gtype}")


@dataclass(frozen=True)
class SpatialWindow:
    """Observation window: a boundary polygon plus its bounding box."""

    boundary: Polygon
    bbox: tuple[float, float, float, float]  # lon_min, lon_max, lat_min, lat_max

    def __post_init__(self):
        lon_min, lon_max, lat_min, lat_max = self.bbox
        bx = self.boundary.shapely.bounds  # (minx, miny, maxx, maxy)
        if bx[0] < lon_min - 1e-12 or bx[2] > lon_max + 1e-12:
            raise ValueError("bbox does not contain boundary (lon)")
        if bx[1] < lat_min - 1e-12 or bx[3] > lat_max + 1e-12:
            raise ValueError("bbox does not contain boundary (lat)")

    @classmethod
    def from_bbox(cls, lon_min, lon_max, lat_min, lat_max) -> "SpatialWindow":
        if not (lon_min < lon_max and lat_min < lat_max):
            raise ValueError("degenerate bbox")
        rect = Polygon(
            ((lon_min, lat_min), (lon_max, lat_min), (lon_max, lat_max), (lon_min, lat_max))
        )
        return cls(rect, (lon_min, lon_max, lat_min, lat_max))

    @classmethod
    def from_polygon(cls, boundary: Polygon) -> "SpatialWindow":
        minx, miny, maxx, maxy = boundary.shapely.bounds
        return cls(boundary, (minx, maxx, miny, maxy))

    @property
    def area(self) -> float:
        return self.boundary.area

    def contains(self, point: GeoPoint, strict: bool = False) -> bool:
        return self.boundary.contains(point, strict=strict)

    def diagonal(self) -> float:
        lon_min, lon_max, lat_min, lat_max = self.bbox
        return math.hypot(lon_max - lon_min, lat_max - lat_min)


@dataclass(frozen=True)
class VoronoiDiagram:
    """Window-clipped Voronoi cells, one per generator, tiling the window."""

    generators: tuple[GeoPoint, ...]
    cells: tuple[Polygon, ...]
    window: SpatialWindow

    def __post_init__(self):
        if len(self.generators) != len(self.cells):
            raise ValueError("one cell per generator required")

    def areas(self) -> np.ndarray:
        return np.array([c.area for c in self.cells])


# ---------------------------------------------------------------------------
# distances and circles
# ---------------------------------------------------------------------------

def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of radius 6371 km."""
    lam1, phi1 = math.radians(a.lon), math.radians(a.lat)
    lam2, phi2 = math.radians(b.lon), math.radians(b.lat)
    s = (
        math.sin((phi2 - phi1) / 2.0) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin((lam2 - lam1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def haversine_km_many(origin: GeoPoint, lons: np.ndarray, lats: np.ndarray) -> np.ndarray:
    """Vectorized haversine from one origin to arrays of lon/lat degrees."""
    lam1, phi1 = math.radians(origin.lon), math.radians(origin.lat)
    lam2 = np.radians(np.asarray(lons, dtype=float))
    phi2 = np.radians(np.asarray(lats, dtype=float))
    s = (
        np.sin((phi2 - phi1) / 2.0) ** 2
        + math.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(s)))


def _destination(center: GeoPoint, bearing_rad: float, distance_km: float) -> tuple[float, float]:
    delta = distance_km / EARTH_RADIUS_KM
    phi1 = math.radians(center.lat)
    lam1 = math.radians(center.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta)
        + math.cos(phi1) * math.sin(delta) * math.cos(bearing_rad)
    )
    lam2 = lam1 + math.atan2(
        math.sin(bearing_rad) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = math.degrees(lam2)
    if lon > 180.0:
        lon -= 360.0
    elif lon < -180.0:
        lon += 360.0
    return lon, math.degrees(phi2)


def circle_polygon(center: GeoPoint, radius_km: float, n_vertices: int = 64) -> Polygon:
    """Polygon inscribed in the geodesic circle of the given radius.

    Every vertex is at exactly ``radius_km`` haversine distance from the
    center (up to floating error), so vertex counts of 16+ keep the polygon
    within 0.1% of the true circle.
    """
    if radius_km <= 0:
        raise InvalidRadiusError(f"radius {radius_km} must be > 0")
    if n_vertices < 3:
        raise ValueError("need at least 3 vertices")
    ring = [
        _destination(center, 2.0 * math.pi * k / n_vertices, radius_km)
        for k in range(n_vertices)
    ]
    return Polygon(tuple(ring))


# ---------------------------------------------------------------------------
# local equal-area projection and annulus fractions
# ---------------------------------------------------------------------------

def laea_project(lons: np.ndarray, lats: np.ndarray, center: GeoPoint) -> np.ndarray:
    """Lambert azimuthal equal-area projection (spherical), output in km.

    A geodesic circle of radius d around ``center`` maps to the planar circle
    of radius 2R*sin(d/2R); areas are preserved exactly.
    """
    lam0, phi0 = math.radians(center.lon), math.radians(center.lat)
    lam = np.radians(np.asarray(lons, dtype=float))
    phi = np.radians(np.asarray(lats, dtype=float))
    cos_dl = np.cos(lam - lam0)
    denom = 1.0 + math.sin(phi0) * np.sin(phi) + math.cos(phi0) * np.cos(phi) * cos_dl
    denom = np.maximum(denom, 1e-12)  # antipode guard
    k = np.sqrt(2.0 / denom)
    x = EARTH_RADIUS_KM * k * np.cos(phi) * np.sin(lam - lam0)
    y = EARTH_RADIUS_KM * k * (
        math.cos(phi0) * np.sin(phi) - math.sin(phi0) * np.cos(phi) * cos_dl
    )
    return np.column_stack([x, y])


def _project_polygon(poly: Polygon, center: GeoPoint):
    def project_ring(ring: Ring):
        arr = np.array(ring, dtype=float)
        return laea_project(arr[:, 0], arr[:, 1], center)

    parts = [(poly.exterior, poly.holes)] + list(poly.extra_parts)
    shp_parts = [
        _SPolygon(project_ring(ext), [project_ring(h) for h in holes])
        for ext, holes in parts
    ]
    if len(shp_parts) == 1:
        return shp_parts[0]
    return _SMultiPolygon(shp_parts)


def _chord_radius(distance_km: float) -> float:
    return 2.0 * EARTH_RADIUS_KM * math.sin(distance_km / (2.0 * EARTH_RADIUS_KM))


def polygon_area_km2(poly: Polygon, center: GeoPoint | None = None) -> float:
    """Area in km2 on the local equal-area projection."""
    if center is None:
        c = poly.shapely.centroid
        center = GeoPoint(c.x, c.y)
    return _project_polygon(poly, center).area


class BandSet:
    """Annuli around one center, reusable across many regions.

    Regions project once (equal-area, centered on the rings) and intersect
    each precomputed band, which keeps repeated per-region queries cheap.
    """

    def __init__(
        self,
        center: GeoPoint,
        radii_km: Sequence[tuple[float, float]],
        quad_segs: int = 64,
    ):
        self.center = center
        origin = shapely.Point(0.0, 0.0)
        self.bands = []
        for outer_km, inner_km in radii_km:
            if not (outer_km > inner_km >= 0.0):
                raise ValueError(f"need outer > inner >= 0, got ({outer_km}, {inner_km})")
            band = origin.buffer(_chord_radius(outer_km), quad_segs=quad_segs)
            if inner_km > 0.0:
                band = band.difference(
                    origin.buffer(_chord_radius(inner_km), quad_segs=quad_segs)
                )
            self.bands.append(band)

    def project(self, region: Polygon):
        proj = _project_polygon(region, self.center)
        if proj.area <= 1e-12:
            raise ZeroAreaRegionError("region has zero projected area")
        return proj

    def fraction(self, projected_region, band_index: int) -> float:
        frac = projected_region.intersection(self.bands[band_index]).area / projected_region.area
        return min(1.0, max(0.0, frac))


def band_area_fraction(
    region: Polygon, center: GeoPoint, outer_km: float, inner_km: float = 0.0
) -> float:
    """Fraction of the region's area inside the [inner_km, outer_km] annulus.

    Projection and intersection happen on the equal-area plane centered at
    ``center``; an inner radius of 0 degenerates to the full disk.
    """
    bands = BandSet(center, [(outer_km, inner_km)])
    return bands.fraction(bands.project(region), 0)


# ---------------------------------------------------------------------------
# Voronoi tessellation clipped to a window
# ---------------------------------------------------------------------------

def voronoi_tessellate(points: Sequence[GeoPoint], window: SpatialWindow) -> VoronoiDiagram:
    """Voronoi cells of the generators, clipped to the window.

    Generators are mirrored across the four bbox edges so every original
    cell is bounded and the cells tile the bbox exactly; each cell is then
    intersected with the window boundary.
    """
    pts = [p if isinstance(p, GeoPoint) else GeoPoint(*p) for p in points]
    if not pts:
        raise ValueError("need at least one generator")
    seen = {}
    for i, p in enumerate(pts):
        key = (p.lon, p.lat)
        if key in seen:
            raise DuplicateGeneratorError(f"generators {seen[key]} and {i} coincide at {key}")
        seen[key] = i
    for i, p in enumerate(pts):
        if not window.contains(p, strict=True):
            raise OutOfWindowError(f"generator {i} at ({p.lon}, {p.lat}) not strictly inside window")

    if len(pts) == 1:
        return VoronoiDiagram((pts[0],), (window.boundary,), window)

    lon_min, lon_max, lat_min, lat_max = window.bbox
    arr = np.array([(p.lon, p.lat) for p in pts], dtype=float)
    mirrors = np.vstack(
        [
            np.column_stack([2 * lon_min - arr[:, 0], arr[:, 1]]),
            np.column_stack([2 * lon_max - arr[:, 0], arr[:, 1]]),
            np.column_stack([arr[:, 0], 2 * lat_min - arr[:, 1]]),
            np.column_stack([arr[:, 0], 2 * lat_max - arr[:, 1]]),
        ]
    )
    mirrors = np.unique(mirrors, axis=0)
    vor = _Voronoi(np.vstack([arr, mirrors]))

    boundary = window.boundary.shapely
    is_rect = _is_bbox_rectangle(window)
    cells = []
    for i in range(len(pts)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region:  # cannot happen with mirrors on all four sides
            raise RuntimeError("unbounded cell despite mirrored generators")
        cell = _SPolygon(vor.vertices[region])
        if not is_rect:
            cell = cell.intersection(boundary)
        else:
            cell = cell.buffer(0) if not cell.is_valid else cell
        cells.append(Polygon.from_shapely(cell))
    return VoronoiDiagram(tuple(pts), tuple(cells), window)


def _is_bbox_rectangle(window: SpatialWindow) -> bool:
    lon_min, lon_max, lat_min, lat_max = window.bbox
    rect = shapely.box(lon_min, lat_min, lon_max, lat_max)
    return window.boundary.shapely.equals_exact(rect, 1e-12) or (
        abs(window.boundary.area - rect.area) < 1e-12 * max(rect.area, 1.0)
        and window.boundary.shapely.within(rect.buffer(1e-9))
    )


# ---------------------------------------------------------------------------
# GeoJSON interchange
# ---------------------------------------------------------------------------

def polygon_to_feature(poly: Polygon, properties: dict | None = None) -> dict:
    return {"type": "Feature", "properties": properties or {}, "geometry": poly.to_geojson()}


def polygon_from_feature(feature: dict) -> Polygon:
    return Polygon.from_geojson(feature["geometry"])


def diagram_to_feature_collection(diagram: VoronoiDiagram) -> dict:
    features = []
    for i, (gen, cell) in enumerate(zip(diagram.generators, diagram.cells)):
        features.append(
            polygon_to_feature(
                cell,
                {"cell_id": i, "generator_lon": gen.lon, "generator_lat": gen.lat},
            )
        )
    return {"type": "FeatureCollection", "features": features}


def window_to_feature(window: SpatialWindow) -> dict:
    return polygon_to_feature(window.boundary, {"role": "window"})


def window_from_feature(feature: dict) -> SpatialWindow:
    return SpatialWindow.from_polygon(polygon_from_feature(feature))


def load_window(path) -> SpatialWindow:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("type") == "FeatureCollection":
        data = data["features"][0]
    return window_from_feature(data)


def dump_window(window: SpatialWindow, path) -> None:
    with open(path, "w") as fh:
        json.dump(window_to_feature(window), fh)
