"""
Release of a user's sequence views: category, region and distance tokens go
through optimized unary encoding, POIs through fuzzification. Calendar fields
pass through unchanged.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from privpoi.core.calc.geo import region_label
from privpoi.data.corpus import DayView, PoiCatalog, SequenceViews
from privpoi.privacy.config import PrivacyConfig
from privpoi.privacy.fuzzify import fuzzify_poi
from privpoi.privacy.mechanisms import decode_perturbed, oue_perturb

log = logging.getLogger('privpoi')

__all__ = [
    'ASPECT_NAMES',
    'ReleasedDay',
    'ReleasedViews',
    'distance_bin_labels',
    'distance_bin_index',
    'perturb_tokens',
    'release_day',
    'perturb_sequences',
]

ASPECT_NAMES = ('category', 'region', 'distance')

_MAX_EMPTY_REDRAWS = 64


def _fmt_km(km: float) -> str:
    return f"{km:g}"


def distance_bin_labels(edges: Sequence[float]) -> tuple[str, ...]:
    """Token names of the distance buckets, e.g. '<0.5km', '2-5km', '>20km'."""
    labels = [f"<{_fmt_km(edges[0])}km"]
    labels += [f"{_fmt_km(a)}-{_fmt_km(b)}km" for a, b in zip(edges, edges[1:])]
    labels.append(f">{_fmt_km(edges[-1])}km")
    return tuple(labels)


def distance_bin_index(km: float, edges: Sequence[float]) -> int:
    """Bucket of `km`; buckets are half-open [lower, upper)."""
    if km < 0:
        raise ValueError("distance must be non-negative")
    return int(np.searchsorted(np.asarray(edges, dtype=np.float64), km, side='right'))


@dataclass(frozen=True)
class ReleasedDay:
    """One daily sequence as uploaded: (possibly perturbed) tokens per aspect.

    `distances` holds bucket labels.
    """
    pois: tuple[str, ...]
    categories: tuple[str, ...]
    regions: tuple[int, ...]
    distances: tuple[str, ...]
    days: tuple[str, ...]
    hours: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.pois)
        lengths = (
            len(self.categories), len(self.regions), len(self.distances),
            len(self.days), len(self.hours),
        )
        if any(length != n for length in lengths):
            raise ValueError("Released views are not aligned")

    def __len__(self) -> int:
        return len(self.pois)

    def labels(self, aspect: str) -> tuple[str, ...]:
        """Prompt labels of one aspect ('poi', 'category', 'region', 'distance')."""
        if aspect == 'poi':
            return self.pois
        if aspect == 'category':
            return self.categories
        if aspect == 'region':
            return tuple(region_label(r) for r in self.regions)
        if aspect == 'distance':
            return self.distances
        raise ValueError(f"Unknown aspect '{aspect}'")

    def tokens(self, aspect: str) -> tuple[tuple[str, str, int], ...]:
        """(label, day, hour) triples of one aspect."""
        return tuple(zip(self.labels(aspect), self.days, self.hours))

    def slice(self, start: int, stop: int) -> 'ReleasedDay':
        return ReleasedDay(
            pois=self.pois[start:stop],
            categories=self.categories[start:stop],
            regions=self.regions[start:stop],
            distances=self.distances[start:stop],
            days=self.days[start:stop],
            hours=self.hours[start:stop],
        )

    def to_dict(self) -> dict:
        return {
            'pois': list(self.pois),
            'categories': list(self.categories),
            'regions': list(self.regions),
            'distances': list(self.distances),
            'days': list(self.days),
            'hours': list(self.hours),
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'ReleasedDay':
        return cls(
            pois=tuple(d['pois']),
            categories=tuple(d['categories']),
            regions=tuple(int(r) for r in d['regions']),
            distances=tuple(d['distances']),
            days=tuple(d['days']),
            hours=tuple(int(h) for h in d['hours']),
        )


@dataclass(frozen=True)
class ReleasedViews:
    """All released days of one user."""
    user_id: str
    history: tuple[ReleasedDay, ...]
    current: ReleasedDay

    @property
    def days(self) -> tuple[ReleasedDay, ...]:
        return (*self.history, self.current)


def perturb_tokens(
    indices: Sequence[int],
    size: int,
    config: PrivacyConfig,
    rng: np.random.Generator,
) -> list[int]:
    """OUE-perturb and decode a sequence of vocabulary indices.

    With `oue_resample_empty`, an all-zero report is redrawn before decoding;
    the chance of an empty report does not depend on the input, so the
    conditioned mechanism keeps the same privacy guarantee.
    """
    if not len(indices):
        return []
    bits = np.zeros((len(indices), size), dtype=np.uint8)
    bits[np.arange(len(indices)), np.asarray(indices)] = 1

    noisy = oue_perturb(bits, config.epsilon, rng)
    if config.oue_resample_empty:
        for _ in range(_MAX_EMPTY_REDRAWS):
            empty = noisy.sum(axis=1) == 0
            if not empty.any():
                break
            noisy[empty] = oue_perturb(bits[empty], config.epsilon, rng)
    return [decode_perturbed(row, rng) for row in noisy]


def release_day(
    view: DayView,
    catalog: PoiCatalog,
    config: PrivacyConfig,
    rng: np.random.Generator,
    perturb: bool = True,
    fuzzify: bool = True,
) -> ReleasedDay:
    """Release one day view.

    Parameters
    ----------
    view
        Raw day view.
    catalog
        POI catalog providing vocabularies and the spatial index.
    config
        Privacy parameters.
    rng
        Randomness source; draws go categories, regions, distances, POIs.
    perturb
        Apply OUE to category, region and distance tokens.
    fuzzify
        Replace POIs by fuzzified catalog POIs.
    """
    bin_names = distance_bin_labels(config.distance_bins)
    categories = [catalog.category_index(c) for c in view.categories]
    regions = [catalog.region_index(r) for r in view.regions]
    distances = [distance_bin_index(d, config.distance_bins) for d in view.distances]

    if perturb:
        categories = perturb_tokens(categories, len(catalog.categories), config, rng)
        regions = perturb_tokens(regions, len(catalog.regions), config, rng)
        distances = perturb_tokens(distances, len(bin_names), config, rng)

    pois = view.pois
    if fuzzify:
        pois = tuple(
            fuzzify_poi(catalog.get(p), catalog.index, config, rng).poi_id for p in view.pois
        )

    return ReleasedDay(
        pois=tuple(pois),
        categories=tuple(catalog.categories[i] for i in categories),
        regions=tuple(catalog.regions[i] for i in regions),
        distances=tuple(bin_names[i] for i in distances),
        days=view.days,
        hours=view.hours,
    )


def perturb_sequences(
    views: SequenceViews,
    catalog: PoiCatalog,
    config: PrivacyConfig,
    rng: np.random.Generator,
    perturb: bool = True,
    fuzzify: bool = True,
) -> ReleasedViews:
    """Release every day of a user, history first, then current."""
    history = tuple(
        release_day(day, catalog, config, rng, perturb=perturb, fuzzify=fuzzify)
        for day in views.history
    )
    current = release_day(views.current, catalog, config, rng, perturb=perturb, fuzzify=fuzzify)
    return ReleasedViews(user_id=views.user_id, history=history, current=current)
