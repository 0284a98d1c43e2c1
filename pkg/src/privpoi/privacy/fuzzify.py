"""
Location fuzzification of check-in POIs.

A POI is replaced by a catalog POI drawn from a circle whose radius covers at
least h POIs around the original and whose center is randomly offset from it.
With probability 1 - 1/(e^eps + 1) the replacement keeps the original category
when the circle holds one.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from privpoi.core.calc.geo import SpatialIndex, destination, min_radius_containing
from privpoi.data.corpus import PoiEntry
from privpoi.privacy.config import PrivacyConfig
from privpoi.privacy.mechanisms import random_flip

log = logging.getLogger('privpoi')

__all__ = [
    'FuzzTrace',
    'fuzzify_poi',
    'fuzzify_poi_with_trace',
]


@dataclass(frozen=True)
class FuzzTrace:
    """Every random draw of one fuzzification, for audit and tests."""
    source: str
    result: str
    h: int
    radius: float
    offset: float
    bearing: float
    center: tuple[float, float]
    flip: int
    same_category: bool
    retries: int
    fallback: bool


def _fuzzify(
    poi: PoiEntry,
    index: SpatialIndex,
    config: PrivacyConfig,
    rng: np.random.Generator,
) -> tuple[PoiEntry, FuzzTrace]:
    """Fuzzify `poi`, returning the replacement and the full trace.

    Draw order: h, then (offset, bearing) until the circle is non-empty, then
    the category coin, then the replacement. After `max_retries` empty circles
    the original POI is returned.

    Parameters
    ----------
    poi
        Original check-in POI.
    index
        Spatial index over the catalog.
    config
        Privacy parameters (epsilon, h range, radius bounds, retries).
    rng
        Randomness source.
    """
    if len(index) == 0:
        raise ValueError("Cannot fuzzify against an empty catalog")

    origin = (poi.lat, poi.lon)
    h_hi = min(config.h_max, len(index))
    h_lo = min(config.h_min, h_hi)
    h = int(rng.integers(h_lo, h_hi + 1))
    radius = min_radius_containing(origin, h, index, config.radius_bounds)

    retries = 0
    while True:
        offset = float(rng.uniform(0.0, radius))
        bearing = float(rng.uniform(0.0, 2.0 * math.pi))
        center = destination(origin, offset, bearing)
        members = index.query_radius(center, radius)
        if members.size:
            break
        if retries >= config.max_retries:
            log.warning(
                f"Fuzzification of POI {poi.poi_id} found only empty circles "
                f"after {retries} retries; keeping the original",
            )
            return poi, FuzzTrace(
                source=poi.poi_id, result=poi.poi_id, h=h, radius=radius,
                offset=offset, bearing=bearing, center=center, flip=0,
                same_category=False, retries=retries, fallback=True,
            )
        retries += 1

    flip = random_flip(config.epsilon, rng)
    same_category = False
    pool = members
    if flip == 0:
        same = members[index.categories[members] == poi.category_id]
        if same.size:
            pool = same
            same_category = True
    chosen = index.pois[int(pool[rng.integers(pool.size)])]

    return chosen, FuzzTrace(
        source=poi.poi_id, result=chosen.poi_id, h=h, radius=radius,
        offset=offset, bearing=bearing, center=center, flip=flip,
        same_category=same_category, retries=retries, fallback=False,
    )


def fuzzify_poi_with_trace(
    poi: PoiEntry,
    index: SpatialIndex,
    config: PrivacyConfig,
    rng: np.random.Generator,
) -> FuzzTrace:
    """Fuzzify `poi` and return only the trace."""
    return _fuzzify(poi, index, config, rng)[1]


def fuzzify_poi(
    poi: PoiEntry,
    index: SpatialIndex,
    config: PrivacyConfig,
    rng: np.random.Generator,
) -> PoiEntry:
    """Replacement catalog POI for `poi`."""
    return _fuzzify(poi, index, config, rng)[0]
