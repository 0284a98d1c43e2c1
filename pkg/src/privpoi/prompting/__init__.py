from .dialogue import REPAIR_PREFIX, Dialogue
from .parsers import (DEFAULT_RANKING, MAX_RECOMMENDATIONS,
                      ParsedRecommendation, TemporalPrefs,
                      TransitionPrefs, parse_pair_list, parse_recommendations,
                      parse_single_label, parse_temporal_map)
from .templates import (ASPECT_WORDS, PREFERENCE_TYPES, PROMPT_VERSION,
                        PromptTemplate, format_candidates, format_checkins,
                        format_hints, format_hour, format_km, format_tokens,
                        load_template, render)

__all__ = [
    'REPAIR_PREFIX',
    'Dialogue',
    'DEFAULT_RANKING',
    'MAX_RECOMMENDATIONS',
    'ParsedRecommendation',
    'TemporalPrefs',
    'TransitionPrefs',
    'parse_pair_list',
    'parse_recommendations',
    'parse_single_label',
    'parse_temporal_map',
    'ASPECT_WORDS',
    'PREFERENCE_TYPES',
    'PROMPT_VERSION',
    'PromptTemplate',
    'format_candidates',
    'format_checkins',
    'format_hints',
    'format_hour',
    'format_km',
    'format_tokens',
    'load_template',
    'render',
]
