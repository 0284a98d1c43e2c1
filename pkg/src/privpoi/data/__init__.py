from .corpus import (DAY_NAMES, CheckInRecord, Corpus, Dataset, DatasetSplit,
                     DayView, EvalInstance, PoiCatalog, PoiEntry, SequenceViews,
                     SocialGraph, UserSequences, assign_regions,
                     build_corpus, build_daily_sequences, build_social_graph,
                     chronological_split, day_view, derive_aux_sequences,
                     five_core_filter, ingest, resolve_timezone, split_sizes)
from .store import load_corpus, save_corpus

__all__ = [
    'DAY_NAMES',
    'CheckInRecord',
    'Corpus',
    'Dataset',
    'DatasetSplit',
    'DayView',
    'EvalInstance',
    'PoiCatalog',
    'PoiEntry',
    'SequenceViews',
    'SocialGraph',
    'UserSequences',
    'assign_regions',
    'build_corpus',
    'build_daily_sequences',
    'build_social_graph',
    'chronological_split',
    'day_view',
    'derive_aux_sequences',
    'five_core_filter',
    'ingest',
    'resolve_timezone',
    'split_sizes',
    'load_corpus',
    'save_corpus',
]
