"""Country polygons from GeoJSON and the point-in-polygon spatial join."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EDGE_EPS = 1e-12

# a multipolygon is a list of polygons; a polygon is [outer ring, *holes];
# a ring is an (N, 2) array of (lon, lat) with ring[0] == ring[-1]
Ring = np.ndarray
Polygon = list
MultiPolygon = list


def _close(ring) -> np.ndarray:
    r = np.asarray(ring, dtype=np.float64)[:, :2]
    if len(r) and not np.array_equal(r[0], r[-1]):
        r = np.vstack([r, r[:1]])
    return r


def _on_ring_edge(px: float, py: float, ring: np.ndarray) -> bool:
    x0, y0 = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    cross = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
    seg = np.hypot(x1 - x0, y1 - y0)
    within = (
        (px >= np.minimum(x0, x1) - EDGE_EPS)
        & (px <= np.maximum(x0, x1) + EDGE_EPS)
        & (py >= np.minimum(y0, y1) - EDGE_EPS)
        & (py <= np.maximum(y0, y1) + EDGE_EPS)
    )
    return bool(np.any(within & (np.abs(cross) <= EDGE_EPS * np.maximum(seg, 1.0))))


def _ray_crossings(px: float, py: float, ring: np.ndarray) -> int:
    x0, y0 = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    return int(np.count_nonzero(straddle & (px < xint)))


def point_in_polygon(pt, poly: MultiPolygon) -> bool:
    """Even-odd containment; boundary points (hole boundaries too) count as inside."""
    px, py = float(pt[0]), float(pt[1])
    for polygon in poly:
        rings = [_close(r) for r in polygon]
        if any(_on_ring_edge(px, py, r) for r in rings):
            return True
        if sum(_ray_crossings(px, py, r) for r in rings) % 2 == 1:
            return True
    return False


def _ring_distance(px: float, py: float, ring: np.ndarray) -> float:
    a = ring[:-1]
    d = ring[1:] - a
    L2 = (d * d).sum(axis=1)
    p = np.array([px, py])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(L2 > 0, ((p - a) * d).sum(axis=1) / L2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * d
    return float(np.min(np.hypot(*(p - proj).T)))


def distance_to_multipolygon(pt, poly: MultiPolygon) -> float:
    """Planar distance in degrees from ``pt`` to the nearest ring segment."""
    px, py = float(pt[0]), float(pt[1])
    return min(_ring_distance(px, py, _close(r)) for polygon in poly for r in polygon)


@dataclass
class Country:
    name: str
    polygons: MultiPolygon
    iso_a3: str | None = None
    bbox: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        self.polygons = [[_close(r) for r in polygon] for polygon in self.polygons]
        pts = np.vstack([r for polygon in self.polygons for r in polygon])
        self.bbox = (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())

    def bbox_contains(self, px: float, py: float, pad: float = 0.0) -> bool:
        x0, y0, x1, y1 = self.bbox
        return x0 - pad <= px <= x1 + pad and y0 - pad <= py <= y1 + pad


class CountryPolygonSet:
    def __init__(self, countries: list[Country]):
        self.countries = list(countries)

    def __len__(self) -> int:
        return len(self.countries)

    def __iter__(self):
        return iter(self.countries)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.countries]

    def iso_codes(self) -> dict[str, str]:
        return {c.name: c.iso_a3 for c in self.countries if c.iso_a3}

    @classmethod
    def from_geojson(cls, source) -> "CountryPolygonSet":
        """Read a FeatureCollection; the name comes from ``ADMIN`` or ``NAME``."""
        if isinstance(source, (str, Path)):
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            data = source
        if data.get("type") != "FeatureCollection":
            raise ValueError("country polygons must be a GeoJSON FeatureCollection")
        countries = []
        for feat in data.get("features", []):
            props = feat.get("properties") or {}
            name = props.get("ADMIN") or props.get("NAME")
            geom = feat.get("geometry") or {}
            if not name or not geom:
                continue
            if geom["type"] == "Polygon":
                polys = [geom["coordinates"]]
            elif geom["type"] == "MultiPolygon":
                polys = geom["coordinates"]
            else:
                continue
            iso = None
            for key in ("ISO_A3", "ADM0_A3", "ISO_A3_EH"):
                v = props.get(key)
                if isinstance(v, str) and len(v) == 3 and v != "-99":
                    iso = v
                    break
            countries.append(Country(name, polys, iso))
        return cls(countries)


def assign_country(pt, countries: CountryPolygonSet, tolerance: float = 0.1) -> str | None:
    """Name of the first polygon containing ``pt`` (lon, lat).

    Failing containment, the nearest polygon within ``tolerance`` degrees is
    used; ties break on name so the result is order independent.
    """
    px, py = float(pt[0]), float(pt[1])
    for c in countries:
        if c.bbox_contains(px, py) and point_in_polygon((px, py), c.polygons):
            return c.name
    if tolerance <= 0:
        return None
    best: tuple[float, str] | None = None
    for c in countries:
        if not c.bbox_contains(px, py, pad=tolerance):
            continue
        d = distance_to_multipolygon((px, py), c.polygons)
        if d <= tolerance and (best is None or (d, c.name) < best):
            best = (d, c.name)
    return None if best is None else best[1]
