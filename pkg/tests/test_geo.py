"""
Test geometry: haversine, region grid and the spatial index.

Tests will run with pytest when pushed to remote, and can also be run manually
with:
    pytest tests/test_geo.py
"""
import numpy as np
import pytest

from privpoi.core.calc.geo import (KM_PER_DEGREE, RegionGrid, SpatialIndex,
                                   destination, haversine, haversine_many,
                                   min_radius_containing, pois_in_circle,
                                   rank_by_distance, region_label)
from privpoi.data.corpus import PoiEntry


def _random_pois(n=300, seed=7):
    rng = np.random.default_rng(seed)
    return [
        PoiEntry(
            poi_id=f'p{i}',
            category_id=('A', 'B', 'C')[i % 3],
            lat=float(40.0 + rng.uniform(0, 0.3)),
            lon=float(-74.0 + rng.uniform(0, 0.3)),
        )
        for i in range(n)
    ]


def test_haversine_one_degree_on_equator():
    assert haversine((0.0, 0.0), (0.0, 1.0)) == pytest.approx(111.19492664455873, rel=1e-12)
    assert KM_PER_DEGREE == pytest.approx(111.19492664455873)


def test_haversine_symmetric_and_zero():
    a, b = (40.7128, -74.0060), (35.6762, 139.6503)
    assert haversine(a, b) == pytest.approx(haversine(b, a), rel=1e-15)
    assert haversine(a, a) == 0.0
    assert haversine(a, b) > 10_000


@pytest.mark.parametrize('point', [(91.0, 0.0), (0.0, 181.0), (-90.5, 10.0)])
def test_haversine_rejects_out_of_range(point):
    with pytest.raises(ValueError):
        haversine(point, (0.0, 0.0))


@pytest.mark.parametrize('distance, bearing', [(0.5, 0.0), (12.0, 1.3), (29.9, 4.0)])
def test_destination_round_trip_distance(distance, bearing):
    origin = (40.7, -74.0)
    assert haversine(origin, destination(origin, distance, bearing)) == pytest.approx(distance, abs=1e-6)


def test_region_grid_half_open_cells():
    grid = RegionGrid(0.0, 0.0, 0.05, 0.05, cell_km=1.0)
    assert grid.cell_of(0.0, 0.0) == 1
    # A point on a lower cell edge belongs to the cell above it.
    assert grid.cell_of(grid.lat_step, 0.0) == grid.n_cols + 1
    assert grid.cell_of(0.0, grid.lon_step) == 2
    # Clamping at both ends.
    assert grid.cell_of(-1.0, -1.0) == 1
    assert grid.cell_of(0.05, 0.05) == grid.n_cells
    assert grid.cell_of(1.0, 1.0) == grid.n_cells


def test_region_grid_ids_are_row_major():
    grid = RegionGrid(0.0, 0.0, 0.05, 0.05, cell_km=1.0)
    row, col = 2, 3
    lat = (row + 0.5) * grid.lat_step
    lon = (col + 0.5) * grid.lon_step
    assert grid.cell_of(lat, lon) == row * grid.n_cols + col + 1
    assert region_label(grid.cell_of(lat, lon)) == f"r{row * grid.n_cols + col + 1}"


def test_region_grid_rejects_bad_box():
    with pytest.raises(ValueError):
        RegionGrid(1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        RegionGrid(0.0, 0.0, 1.0, 1.0, cell_km=0.0)


@pytest.mark.parametrize('radius', [0.2, 1.0, 3.5, 12.0, 50.0])
def test_radius_query_matches_brute_force(radius):
    pois = _random_pois()
    index = SpatialIndex(pois, bucket_km=2.0)
    lats = np.array([p.lat for p in pois])
    lons = np.array([p.lon for p in pois])
    for center in [(40.1, -73.9), (40.0, -74.0), (40.29, -73.71)]:
        expected = np.flatnonzero(haversine_many(center, lats, lons) <= radius)
        np.testing.assert_array_equal(index.query_radius(center, radius), expected)


def test_radius_query_with_category():
    pois = _random_pois()
    index = SpatialIndex(pois)
    found = pois_in_circle((40.15, -73.85), 5.0, index, category='B')
    assert found
    assert all(p.category_id == 'B' for p in found)
    assert all(haversine((40.15, -73.85), (p.lat, p.lon)) <= 5.0 for p in found)


def test_pois_in_circle_rejects_non_positive_radius():
    with pytest.raises(ValueError):
        pois_in_circle((40.0, -74.0), 0.0, SpatialIndex(_random_pois(10)))


def test_min_radius_containing_clamps():
    pois = _random_pois()
    index = SpatialIndex(pois)
    center = (40.15, -73.85)
    raw = np.sort(haversine_many(center, index.lats, index.lons))

    assert min_radius_containing(center, 5, index, bounds=(0.001, 100.0)) == pytest.approx(raw[4])
    assert min_radius_containing(center, 5, index) == 10.0
    assert min_radius_containing(center, 300, index, bounds=(1.0, 2.0)) == 2.0


def test_kth_nearest_rejects_large_k():
    index = SpatialIndex(_random_pois(10))
    with pytest.raises(ValueError):
        index.kth_nearest_distance((40.0, -74.0), 11)


def test_rank_by_distance_breaks_ties_by_id():
    origin = (0.0, 0.0)
    pois = [
        PoiEntry('b', 'X', 0.0, 0.01),
        PoiEntry('a', 'X', 0.0, 0.01),
        PoiEntry('c', 'X', 0.0, 0.001),
        PoiEntry('d', 'X', 0.5, 0.0),
    ]
    assert rank_by_distance(origin, pois) == ['c', 'a', 'b', 'd']
    assert rank_by_distance(origin, []) == []
