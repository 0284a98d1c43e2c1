"""
Preprocessed corpus on disk: a directory of NDJSON files plus manifest.json.

    pois.ndjson       one POI per line
    sequences.ndjson  one user per line, days oldest first (last is current)
    social.ndjson     one undirected edge per line, a < b
    manifest.json     schema version, preprocessing parameters, grid, statistics
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Union

from privpoi.core.calc.geo import RegionGrid
from privpoi.core.utils.errors import DatasetError
from privpoi.core.utils.io import dump_json, load_json, read_ndjson, write_ndjson
from privpoi.data.corpus import (CheckInRecord, Corpus, PoiCatalog, PoiEntry,
                                 SocialGraph, UserSequences)

log = logging.getLogger('privpoi')

__all__ = [
    'SCHEMA_VERSION',
    'save_corpus',
    'load_corpus',
]

SCHEMA_VERSION = 1


def _record_to_dict(r: CheckInRecord) -> dict[str, Any]:
    return {
        'poi_id': r.poi_id,
        'ts': r.timestamp.isoformat(),
        'day': r.day_of_week,
        'hour': r.hour_of_day,
        'category': r.category_id,
        'region_id': r.region_id,
        'distance_km': r.distance_km,
    }


def _record_from_dict(user_id: str, d: dict[str, Any]) -> CheckInRecord:
    return CheckInRecord(
        user_id=user_id,
        poi_id=d['poi_id'],
        timestamp=datetime.fromisoformat(d['ts']),
        day_of_week=d['day'],
        hour_of_day=int(d['hour']),
        category_id=d['category'],
        region_id=int(d['region_id']),
        distance_km=float(d['distance_km']),
    )


def save_corpus(corpus: Corpus, directory: Union[Path, str]) -> Path:
    """Write `corpus` into `directory` (created if needed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    write_ndjson(directory / 'pois.ndjson', (
        {
            'poi_id': p.poi_id,
            'category': p.category_id,
            'lat': p.lat,
            'lon': p.lon,
            'region_id': p.region_id,
        }
        for p in corpus.catalog
    ))
    write_ndjson(directory / 'sequences.ndjson', (
        {
            'user_id': user_id,
            'days': [[_record_to_dict(r) for r in day] for day in seqs.days],
        }
        for user_id, seqs in sorted(corpus.sequences.items())
    ))
    write_ndjson(directory / 'social.ndjson', (
        {'a': a, 'b': b} for a, b in sorted(corpus.social.edges)
    ))
    dump_json(directory / 'manifest.json', {
        'schema_version': SCHEMA_VERSION,
        'params': corpus.params,
        'grid': corpus.catalog.grid.to_dict(),
        'statistics': corpus.statistics(),
    })
    log.info(f"Saved corpus to {directory}")
    return directory


def load_corpus(directory: Union[Path, str]) -> Corpus:
    """Read a corpus written by `save_corpus`."""
    directory = Path(directory)
    manifest_path = directory / 'manifest.json'
    if not manifest_path.exists():
        raise DatasetError("not a preprocessed corpus (manifest.json missing)", path=str(directory))

    manifest = load_json(manifest_path)
    if manifest.get('schema_version') != SCHEMA_VERSION:
        raise DatasetError(
            f"unsupported schema version {manifest.get('schema_version')}",
            path=str(manifest_path),
        )

    grid = RegionGrid(**manifest['grid'])
    params = manifest.get('params', {})
    pois = [
        PoiEntry(
            poi_id=d['poi_id'],
            category_id=d['category'],
            lat=float(d['lat']),
            lon=float(d['lon']),
            region_id=int(d['region_id']),
        )
        for d in read_ndjson(directory / 'pois.ndjson')
    ]
    catalog = PoiCatalog(pois, grid, bucket_km=float(params.get('bucket_km', 2.0)))

    sequences = {}
    for d in read_ndjson(directory / 'sequences.ndjson'):
        user_id = d['user_id']
        days = tuple(
            tuple(_record_from_dict(user_id, r) for r in day) for day in d['days']
        )
        sequences[user_id] = UserSequences(user_id=user_id, history=days[:-1], current=days[-1])

    edges = [(d['a'], d['b']) for d in read_ndjson(directory / 'social.ndjson')]
    social = SocialGraph.from_pairs(list(sequences), edges)
    log.info(f"Loaded corpus from {directory}: {len(sequences)} users, {len(catalog)} POIs")
    return Corpus(catalog=catalog, sequences=sequences, social=social, params=params)
