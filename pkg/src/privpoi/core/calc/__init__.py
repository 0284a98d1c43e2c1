from .divergence import kl_divergence, kl_matrix, kl_to_many, smooth_distribution
from .geo import (EARTH_RADIUS_KM, RegionGrid, SpatialIndex, assign_region,
                  destination, haversine, haversine_many, min_radius_containing,
                  pois_in_circle, rank_by_distance, region_label)
from .metrics import METRIC_NAMES, acc_at_k, aggregate_metrics, mrr, rank_of

__all__ = [
    'EARTH_RADIUS_KM',
    'RegionGrid',
    'SpatialIndex',
    'assign_region',
    'destination',
    'haversine',
    'haversine_many',
    'min_radius_containing',
    'pois_in_circle',
    'rank_by_distance',
    'region_label',
    'smooth_distribution',
    'kl_divergence',
    'kl_to_many',
    'kl_matrix',
    'METRIC_NAMES',
    'acc_at_k',
    'aggregate_metrics',
    'mrr',
    'rank_of',
]
