"""Census-tract geometry: loading, point location and great-circle distance."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numba
import numpy as np
import shapely

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8

OUTSIDE, INSIDE, BOUNDARY = 0, 1, 2


class GeodataError(ValueError):
    pass


class NoTractsError(GeodataError):
    pass


class DuplicateGeoidError(GeodataError):
    pass


class RingError(GeodataError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@numba.njit(cache=True)
def _haversine(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    return float(_haversine(a.lat, a.lon, b.lat, b.lon))


def haversine_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine over broadcastable arrays of degrees."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


@numba.njit(cache=True)
def _ring_status(x, y, ring):
    # even-odd crossing count; BOUNDARY if (x, y) lies on a segment
    n = ring.shape[0]
    inside = False
    for i in range(n - 1):
        x1, y1 = ring[i, 0], ring[i, 1]
        x2, y2 = ring[i + 1, 0], ring[i + 1, 1]
        if min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) == 0.0:
                return BOUNDARY
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return INSIDE if inside else OUTSIDE


@numba.njit(cache=True)
def _polygon_status(x, y, coords, ring_starts, ring_ends):
    """Status of a point against one polygon (outer ring first, then holes)."""
    parity = False
    for r in range(ring_starts.shape[0]):
        s = _ring_status(x, y, coords[ring_starts[r]:ring_ends[r]])
        if s == BOUNDARY:
            return BOUNDARY
        if s == INSIDE:
            parity = not parity
    return INSIDE if parity else OUTSIDE


@dataclass
class _Polygon:
    coords: np.ndarray  # stacked (k, 2) lon/lat rings
    ring_starts: np.ndarray
    ring_ends: np.ndarray

    @classmethod
    def from_rings(cls, rings: list[np.ndarray]) -> "_Polygon":
        lens = np.array([len(r) for r in rings], dtype=np.int64)
        ends = np.cumsum(lens)
        return cls(np.vstack(rings).astype(np.float64), ends - lens, ends)

    def status(self, lon: float, lat: float) -> int:
        return int(_polygon_status(lon, lat, self.coords, self.ring_starts, self.ring_ends))


def _ring_area_centroid(ring: np.ndarray) -> tuple[float, float, float]:
    x, y = ring[:, 0], ring[:, 1]
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    a = cross.sum() / 2.0
    if a == 0.0:
        return 0.0, float(x[:-1].mean()), float(y[:-1].mean())
    cx = ((x[:-1] + x[1:]) * cross).sum() / (6.0 * a)
    cy = ((y[:-1] + y[1:]) * cross).sum() / (6.0 * a)
    return abs(a), float(cx), float(cy)


@dataclass
class TractIndex:
    """Immutable collection of tract polygons with a bounding-box R-tree.

    ``tracts`` maps geoid to a list of polygons, each a list of rings
    (``(k, 2)`` lon/lat arrays, outer ring first). ``centroids`` holds
    ``(lat, lon)`` per geoid.
    """

    tracts: dict[str, list[list[np.ndarray]]]
    centroids: dict[str, tuple[float, float]]
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.geoids = sorted(self.tracts)
        self._polys: list[tuple[int, _Polygon]] = []
        boxes = []
        for gi, g in enumerate(self.geoids):
            for rings in self.tracts[g]:
                self._polys.append((gi, _Polygon.from_rings(rings)))
                outer = rings[0]
                boxes.append(shapely.box(outer[:, 0].min(), outer[:, 1].min(),
                                         outer[:, 0].max(), outer[:, 1].max()))
        self._tree = shapely.STRtree(boxes)
        self.bboxes = {g: self._bbox(g) for g in self.geoids}

    def _bbox(self, g):
        pts = np.vstack([rings[0] for rings in self.tracts[g]])
        return pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max()

    def __len__(self):
        return len(self.geoids)

    def __contains__(self, geoid):
        return geoid in self.tracts

    def centroid(self, geoid: str) -> GeoPoint:
        lat, lon = self.centroids[geoid]
        return GeoPoint(lat, lon)

    def _resolve(self, lon, lat, candidates: Iterable[int]) -> Optional[str]:
        hits = set()
        for pi in candidates:
            gi, poly = self._polys[pi]
            if poly.status(lon, lat) != OUTSIDE:
                hits.add(gi)
        if not hits:
            return None
        return self.geoids[min(hits)]

    def locate(self, p: GeoPoint) -> Optional[str]:
        cands = self._tree.query(shapely.Point(p.lon, p.lat))
        return self._resolve(p.lon, p.lat, sorted(int(c) for c in cands))

    def locate_brute(self, p: GeoPoint) -> Optional[str]:
        """Scan every polygon without the R-tree; used to check the tree."""
        return self._resolve(p.lon, p.lat, range(len(self._polys)))

    def locate_many(self, lat, lon) -> np.ndarray:
        """Vectorized :meth:`locate`; returns an object array of geoids/None."""
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        out = np.full(lat.shape[0], None, dtype=object)
        if lat.shape[0] == 0:
            return out
        pidx, tidx = self._tree.query(shapely.points(lon, lat))
        order = np.lexsort((tidx, pidx))
        pidx, tidx = pidx[order], tidx[order]
        best = np.full(lat.shape[0], len(self.geoids), dtype=np.int64)
        for i, pi in zip(pidx.tolist(), tidx.tolist()):
            gi, poly = self._polys[pi]
            if gi < best[i] and poly.status(lon[i], lat[i]) != OUTSIDE:
                best[i] = gi
        found = best < len(self.geoids)
        geo = np.array(self.geoids, dtype=object)
        out[found] = geo[best[found]]
        return out

    def to_geojson(self, key: str = "GEOID") -> dict:
        feats = []
        for g in self.geoids:
            polys = [[r.tolist() for r in rings] for rings in self.tracts[g]]
            if len(polys) == 1:
                geom = {"type": "Polygon", "coordinates": polys[0]}
            else:
                geom = {"type": "MultiPolygon", "coordinates": polys}
            feats.append({"type": "Feature", "properties": {key: g}, "geometry": geom})
        return {"type": "FeatureCollection", "features": feats}


def _parse_rings(rings, geoid) -> list[np.ndarray]:
    out = []
    for ring in rings:
        arr = np.asarray(ring, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise RingError(f"tract {geoid}: malformed ring")
        arr = arr[:, :2]
        if not np.array_equal(arr[0], arr[-1]):
            raise RingError(f"tract {geoid}: ring is not closed")
        if arr.shape[0] < 4:
            raise RingError(f"tract {geoid}: ring has fewer than 4 vertices")
        out.append(arr)
    if not out:
        raise RingError(f"tract {geoid}: polygon without rings")
    return out


def load_tracts(document, geoid_key: str = "GEOID") -> TractIndex:
    """Build a :class:`TractIndex` from a GeoJSON feature collection.

    ``document`` may be bytes, str or an already-parsed dict. Features
    without the geoid property are skipped and reported in
    ``TractIndex.diagnostics``; duplicate geoids and unclosed rings raise.
    """
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    if isinstance(document, str):
        document = json.loads(document)
    if document.get("type") != "FeatureCollection":
        raise GeodataError("document is not a FeatureCollection")

    tracts: dict[str, list[list[np.ndarray]]] = {}
    centroids = {}
    diagnostics = []
    for i, feat in enumerate(document.get("features") or []):
        props = feat.get("properties") or {}
        geoid = props.get(geoid_key)
        if geoid is None:
            msg = f"feature {i}: missing {geoid_key} property, rejected"
            logger.warning(msg)
            diagnostics.append(msg)
            continue
        geoid = str(geoid)
        if geoid in tracts:
            raise DuplicateGeoidError(f"duplicate geoid {geoid}")
        geom = feat.get("geometry") or {}
        if geom.get("type") == "Polygon":
            polys = [_parse_rings(geom["coordinates"], geoid)]
        elif geom.get("type") == "MultiPolygon":
            polys = [_parse_rings(p, geoid) for p in geom["coordinates"]]
        else:
            msg = f"feature {i} ({geoid}): unsupported geometry {geom.get('type')}, rejected"
            logger.warning(msg)
            diagnostics.append(msg)
            continue

        area = cx = cy = 0.0
        for rings in polys:
            a, x, y = _ring_area_centroid(rings[0])
            area += a
            cx += a * x
            cy += a * y
        if area > 0:
            cx, cy = cx / area, cy / area
        else:
            pts = np.vstack([r[0][:-1] for r in polys])
            cx, cy = float(pts[:, 0].mean()), float(pts[:, 1].mean())
        tracts[geoid] = polys
        centroids[geoid] = (cy, cx)

    if not tracts:
        raise NoTractsError("no tracts")
    return TractIndex(tracts, centroids, diagnostics)


def locate(p: GeoPoint, idx: TractIndex) -> Optional[str]:
    return idx.locate(p)
