"""
Great-circle geometry, region grid, and a grid-bucket spatial index over the POI
catalog.

All distances are haversine on a sphere of radius 6371 km; no planar
approximations are used for distances anywhere in the package.
"""
import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger('privpoi')

EARTH_RADIUS_KM = 6371.0
KM_PER_DEGREE = math.pi / 180.0 * EARTH_RADIUS_KM  # along a meridian

LatLon = tuple[float, float]


def _check_coordinate(point: LatLon) -> None:
    lat, lon = point
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"Coordinate out of range: ({lat}, {lon})")


def haversine(a: LatLon, b: LatLon) -> float:
    """Great-circle distance in km between two (lat, lon) points.

    Parameters
    ----------
    a
        First point in degrees.
    b
        Second point in degrees.

    Returns
    -------
    float
        Symmetric, non-negative distance in km.
    """
    _check_coordinate(a)
    _check_coordinate(b)
    return float(haversine_many(a, np.array([b[0]]), np.array([b[1]]))[0])


def haversine_many(center: LatLon, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorized haversine from one center to arrays of points (km).

    The formula is written symmetrically in the two endpoints so that
    haversine(a, b) == haversine(b, a) bit for bit.
    """
    lat1 = np.radians(np.float64(center[0]))
    lon1 = np.radians(np.float64(center[1]))
    lat2 = np.radians(np.asarray(lats, dtype=np.float64))
    lon2 = np.radians(np.asarray(lons, dtype=np.float64))

    sin_dlat = np.sin((lat2 - lat1) / 2.0)
    sin_dlon = np.sin((lon2 - lon1) / 2.0)
    h = sin_dlat * sin_dlat + np.cos(lat1) * np.cos(lat2) * sin_dlon * sin_dlon
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))


def destination(origin: LatLon, distance_km: float, bearing: float) -> LatLon:
    """Point reached from `origin` after `distance_km` along initial `bearing`.

    Bearing is in radians clockwise from north. The result satisfies
    haversine(origin, result) == distance_km up to float rounding.
    """
    lat1 = math.radians(origin[0])
    lon1 = math.radians(origin[1])
    ang = distance_km / EARTH_RADIUS_KM

    lat2 = math.asin(
        min(1.0, max(-1.0,
            math.sin(lat1) * math.cos(ang)
            + math.cos(lat1) * math.sin(ang) * math.cos(bearing),
        )),
    )
    lon2 = lon1 + math.atan2(
        math.sin(bearing) * math.sin(ang) * math.cos(lat1),
        math.cos(ang) - math.sin(lat1) * math.sin(lat2),
    )
    lon_deg = (math.degrees(lon2) + 540.0) % 360.0 - 180.0
    return math.degrees(lat2), lon_deg


@dataclass(frozen=True)
class RegionGrid:
    """Fixed square-ish cells over a city bounding box.

    Cells are half-open, ``[lower, upper)``, in both axes; a point lying exactly
    on a cell edge belongs to the cell whose lower edge it is (floor). Points on
    or beyond the box's upper edge are clamped into the last row/column, points
    below the lower edge into the first.

    Region ids are 1-based and row-major: ``row * n_cols + col + 1``.
    """
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    cell_km: float = 1.0

    def __post_init__(self) -> None:
        if self.cell_km <= 0:
            raise ValueError("cell_km must be positive")
        if self.max_lat < self.min_lat or self.max_lon < self.min_lon:
            raise ValueError("Degenerate bounding box")

    @classmethod
    def from_points(
        cls,
        lats: Sequence[float],
        lons: Sequence[float],
        cell_km: float = 1.0,
    ) -> 'RegionGrid':
        """Bounding-box grid covering every given point."""
        if len(lats) == 0:
            raise ValueError("Cannot build a grid from zero points")
        return cls(
            min_lat=float(np.min(lats)),
            min_lon=float(np.min(lons)),
            max_lat=float(np.max(lats)),
            max_lon=float(np.max(lons)),
            cell_km=cell_km,
        )

    @property
    def lat_step(self) -> float:
        """Cell height in degrees of latitude."""
        return self.cell_km / KM_PER_DEGREE

    @property
    def lon_step(self) -> float:
        """Cell width in degrees of longitude, sized at the box's mid latitude."""
        mid = math.radians((self.min_lat + self.max_lat) / 2.0)
        return self.cell_km / (KM_PER_DEGREE * max(math.cos(mid), 1e-6))

    @property
    def n_rows(self) -> int:
        return max(1, math.ceil((self.max_lat - self.min_lat) / self.lat_step))

    @property
    def n_cols(self) -> int:
        return max(1, math.ceil((self.max_lon - self.min_lon) / self.lon_step))

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_of(self, lat: float, lon: float) -> int:
        """Region id of a coordinate (clamped into the grid)."""
        row = math.floor((lat - self.min_lat) / self.lat_step)
        col = math.floor((lon - self.min_lon) / self.lon_step)
        row = min(max(row, 0), self.n_rows - 1)
        col = min(max(col, 0), self.n_cols - 1)
        return row * self.n_cols + col + 1

    def to_dict(self) -> dict[str, float]:
        return {
            'min_lat': self.min_lat,
            'min_lon': self.min_lon,
            'max_lat': self.max_lat,
            'max_lon': self.max_lon,
            'cell_km': self.cell_km,
        }


def assign_region(poi, grid: RegionGrid) -> int:
    """Region id of a POI-like object with `lat`/`lon` attributes."""
    return grid.cell_of(poi.lat, poi.lon)


def region_label(region_id: int) -> str:
    """Opaque prompt label of a region, e.g. ``r12``."""
    return f"r{region_id}"


class SpatialIndex:
    """Grid-bucket index for radius and k-th-nearest queries.

    Buckets are fixed lat/lon cells of roughly `bucket_km`. A radius query visits
    only the buckets overlapping the circle's exact spherical lat/lon extent and
    then filters candidates with the same vectorized haversine used for brute
    force, so results are identical to a linear scan.

    Parameters
    ----------
    pois
        Catalog entries exposing `poi_id`, `lat`, `lon` and `category_id`.
    bucket_km
        Approximate bucket edge.
    """
    def __init__(self, pois: Sequence, bucket_km: float = 2.0) -> None:
        if bucket_km <= 0:
            raise ValueError("bucket_km must be positive")
        self.pois = tuple(pois)
        self.lats = np.array([p.lat for p in self.pois], dtype=np.float64)
        self.lons = np.array([p.lon for p in self.pois], dtype=np.float64)
        self.categories = np.array([p.category_id for p in self.pois], dtype=object)
        self.step = bucket_km / KM_PER_DEGREE

        buckets = defaultdict(list)
        for i, (lat, lon) in enumerate(zip(self.lats, self.lons)):
            buckets[self._bucket(lat, lon)].append(i)
        self._buckets = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}

    def __len__(self) -> int:
        return len(self.pois)

    def _bucket(self, lat: float, lon: float) -> tuple[int, int]:
        return math.floor(lat / self.step), math.floor(lon / self.step)

    def _candidates(self, center: LatLon, radius: float) -> np.ndarray:
        """Catalog positions possibly within `radius` of `center` (superset)."""
        lat, lon = center
        ang = radius / EARTH_RADIUS_KM
        dlat = math.degrees(ang) + 1e-9
        lat_lo, lat_hi = lat - dlat, lat + dlat
        if lat_lo <= -90.0 or lat_hi >= 90.0 or ang >= math.pi / 2:
            return np.arange(len(self.pois))

        # Exact spherical half-width in longitude of a cap of angular radius ang.
        ratio = math.sin(ang) / math.cos(math.radians(lat))
        if ratio >= 1.0:
            return np.arange(len(self.pois))
        dlon = math.degrees(math.asin(ratio)) + 1e-9
        lon_lo, lon_hi = lon - dlon, lon + dlon
        if lon_lo < -180.0 or lon_hi > 180.0:
            return np.arange(len(self.pois))

        r_lo, c_lo = self._bucket(lat_lo, lon_lo)
        r_hi, c_hi = self._bucket(lat_hi, lon_hi)
        n_cells = (r_hi - r_lo + 1) * (c_hi - c_lo + 1)
        if n_cells > len(self._buckets):
            # Scanning the occupied buckets is cheaper than the box.
            parts = [
                idx for (r, c), idx in self._buckets.items()
                if r_lo <= r <= r_hi and c_lo <= c <= c_hi
            ]
        else:
            parts = [
                self._buckets[(r, c)]
                for r in range(r_lo, r_hi + 1)
                for c in range(c_lo, c_hi + 1)
                if (r, c) in self._buckets
            ]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))

    def query_radius(
        self,
        center: LatLon,
        radius: float,
        category: Optional[str] = None,
    ) -> np.ndarray:
        """Catalog positions with haversine(center, poi) <= radius, ascending."""
        idx = self._candidates(center, radius)
        if idx.size == 0:
            return idx
        dist = haversine_many(center, self.lats[idx], self.lons[idx])
        idx = idx[dist <= radius]
        if category is not None:
            idx = idx[self.categories[idx] == category]
        return idx

    def kth_nearest_distance(self, center: LatLon, k: int) -> float:
        """Distance (km) from `center` to its k-th nearest catalog POI."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > len(self.pois):
            raise ValueError(f"k={k} exceeds catalog size {len(self.pois)}")

        radius = self.step * KM_PER_DEGREE
        while radius < math.pi * EARTH_RADIUS_KM:
            idx = self.query_radius(center, radius)
            if idx.size >= k:
                dist = np.sort(haversine_many(center, self.lats[idx], self.lons[idx]))
                return float(dist[k - 1])
            radius *= 2.0
        dist = np.sort(haversine_many(center, self.lats, self.lons))
        return float(dist[k - 1])


def min_radius_containing(
    center: LatLon,
    h: int,
    index: SpatialIndex,
    bounds: tuple[float, float] = (10.0, 30.0),
) -> float:
    """Minimum radius holding at least `h` POIs, clamped into `bounds` (km).

    The unclamped value is the distance to the h-th nearest POI; the clamp is
    applied afterwards.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if len(index) == 0:
        raise ValueError("Spatial index is empty")
    raw = index.kth_nearest_distance(center, h)
    lo, hi = bounds
    return min(max(raw, lo), hi)


def pois_in_circle(
    center: LatLon,
    radius: float,
    index: SpatialIndex,
    category: Optional[str] = None,
) -> list:
    """Catalog POIs within `radius` km of `center`, in catalog order.

    Parameters
    ----------
    center
        Circle center (lat, lon).
    radius
        Circle radius in km, must be positive.
    index
        Spatial index over the catalog.
    category
        If given, keep only POIs of this category.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    return [index.pois[i] for i in index.query_radius(center, radius, category)]


def rank_by_distance(origin: LatLon, pois: Sequence) -> list[str]:
    """POI ids ordered by haversine distance from `origin`, ties by id."""
    if not len(pois):
        return []
    lats = np.array([p.lat for p in pois], dtype=np.float64)
    lons = np.array([p.lon for p in pois], dtype=np.float64)
    dist = haversine_many(origin, lats, lons)
    order = sorted(range(len(pois)), key=lambda i: (dist[i], pois[i].poi_id))
    return [pois[i].poi_id for i in order]
