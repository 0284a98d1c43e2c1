# Pipeline stages shared by the rankable methods in models/: preference
# extraction, the preference KB, neighbor retrieval and recommendation.
from .extraction import (CATALOG_PLACEHOLDER, REFLECTION_SOURCES,
                         ExtractionConfig, Segment, extract_population,
                         extract_user_preferences, instruction_prompt,
                         probe_preferences, reflect_preferences,
                         sample_contextual_segments, sample_recent_segments,
                         select_participants)
from .kb import (KB_SCHEMA_VERSION, PREFERENCE_FIELDS, FineGrainedPreferences,
                 PreferenceKB)
from .neighbors import (DISTRIBUTION_KINDS, NEIGHBOR_KINDS,
                        CheckinDistribution, NeighborSet, build_distribution,
                        collect_distributions, find_neighbors,
                        nearest_neighbor, privatize_distribution,
                        social_neighbors, summarize_neighbor_preferences)
from .recommender import (ABLATIONS, PipelineSwitches, RecommendationRequest,
                          RecommendationResult, Recommender,
                          ablation_switches, predict_next_aspect)

__all__ = [
    'CATALOG_PLACEHOLDER',
    'REFLECTION_SOURCES',
    'ExtractionConfig',
    'Segment',
    'extract_population',
    'extract_user_preferences',
    'instruction_prompt',
    'probe_preferences',
    'reflect_preferences',
    'sample_contextual_segments',
    'sample_recent_segments',
    'select_participants',
    'KB_SCHEMA_VERSION',
    'PREFERENCE_FIELDS',
    'FineGrainedPreferences',
    'PreferenceKB',
    'DISTRIBUTION_KINDS',
    'NEIGHBOR_KINDS',
    'CheckinDistribution',
    'NeighborSet',
    'build_distribution',
    'collect_distributions',
    'find_neighbors',
    'nearest_neighbor',
    'privatize_distribution',
    'social_neighbors',
    'summarize_neighbor_preferences',
    'ABLATIONS',
    'PipelineSwitches',
    'RecommendationRequest',
    'RecommendationResult',
    'Recommender',
    'ablation_switches',
    'predict_next_aspect',
]
