from .config import DEFAULT_DISTANCE_BINS, PrivacyConfig
from .fuzzify import FuzzTrace, fuzzify_poi, fuzzify_poi_with_trace
from .mechanisms import (OneHotRecord, cold_bit_probability, decode_perturbed,
                         flip_social_links, laplace_perturb, oue_perturb,
                         random_flip)
from .sequences import (ASPECT_NAMES, ReleasedDay, ReleasedViews,
                        distance_bin_index, distance_bin_labels,
                        perturb_sequences, perturb_tokens, release_day)

__all__ = [
    'DEFAULT_DISTANCE_BINS',
    'PrivacyConfig',
    'FuzzTrace',
    'fuzzify_poi',
    'fuzzify_poi_with_trace',
    'OneHotRecord',
    'cold_bit_probability',
    'decode_perturbed',
    'flip_social_links',
    'laplace_perturb',
    'oue_perturb',
    'random_flip',
    'ASPECT_NAMES',
    'ReleasedDay',
    'ReleasedViews',
    'distance_bin_index',
    'distance_bin_labels',
    'perturb_sequences',
    'perturb_tokens',
    'release_day',
]
