"""
Check-in corpus: TSV ingestion, 5-core filtering, region assignment, daily
sequences, chronological split and the per-aspect sequence views.

Note: If adding new public methods, please add them to __all__
at the top of the file and in data/__init__.py.
"""
import csv
import logging
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone, tzinfo
from functools import cached_property
from pathlib import Path
from typing import Any, Optional, Union
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np
import pandas as pd

from privpoi.core.calc.geo import RegionGrid, SpatialIndex, haversine
from privpoi.core.utils.errors import ConfigError, DatasetError

log = logging.getLogger('privpoi')

__all__ = [
    'DAY_NAMES',
    'PoiEntry',
    'CheckInRecord',
    'UserSequences',
    'SocialGraph',
    'EvalInstance',
    'DatasetSplit',
    'Dataset',
    'PoiCatalog',
    'Corpus',
    'DayView',
    'SequenceViews',
    'ingest',
    'five_core_filter',
    'assign_regions',
    'build_daily_sequences',
    'build_social_graph',
    'split_sizes',
    'chronological_split',
    'day_view',
    'derive_aux_sequences',
    'resolve_timezone',
    'build_corpus',
]

DAY_NAMES = ('Mon', 'Tue', 'Wed', 'Thu', 'Fri', 'Sat', 'Sun')

CHECKIN_COLUMNS = ('user_id', 'poi_id', 'timestamp')
POI_COLUMNS = ('poi_id', 'category', 'lat', 'lon')
SOCIAL_COLUMNS = ('user_a', 'user_b')

_EPOCH = re.compile(r'-?\d+(\.\d+)?')


## Domain types -------------------------------------------------------------#
@dataclass(frozen=True)
class PoiEntry:
    """One catalog venue. `category_id` is the category name itself."""
    poi_id: str
    category_id: str
    lat: float
    lon: float
    region_id: int = 0

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise DatasetError(f"POI '{self.poi_id}' has out-of-range coordinates")


@dataclass(frozen=True)
class CheckInRecord:
    """One visit. Calendar fields are in the dataset's local time zone."""
    user_id: str
    poi_id: str
    timestamp: datetime
    day_of_week: str
    hour_of_day: int
    category_id: str
    region_id: int
    distance_km: float

    def __post_init__(self) -> None:
        if self.distance_km < 0:
            raise ValueError("distance_km must be non-negative")


@dataclass(frozen=True)
class UserSequences:
    """Daily check-in sequences of one user, oldest first."""
    user_id: str
    history: tuple[tuple[CheckInRecord, ...], ...]
    current: tuple[CheckInRecord, ...]

    def __post_init__(self) -> None:
        if not self.current or any(not day for day in self.history):
            raise ValueError(f"User '{self.user_id}' has an empty daily sequence")

    @property
    def days(self) -> tuple[tuple[CheckInRecord, ...], ...]:
        return (*self.history, self.current)

    @property
    def n_checkins(self) -> int:
        return sum(len(day) for day in self.days)


@dataclass(frozen=True)
class SocialGraph:
    """Undirected friendship graph stored as an edge set of ordered pairs a < b."""
    users: tuple[str, ...]
    edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        known = set(self.users)
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"Self-loop on user '{a}'")
            if not a < b:
                raise ValueError(f"Edge ({a}, {b}) is not normalized")
            if a not in known or b not in known:
                raise ValueError(f"Edge ({a}, {b}) references an unknown user")

    @classmethod
    def from_pairs(
        cls,
        users: Sequence[str],
        pairs: Sequence[tuple[str, str]],
    ) -> 'SocialGraph':
        """Normalize raw pairs: drop self-loops and edges to unknown users."""
        known = set(users)
        edges = set()
        for a, b in pairs:
            if a == b or a not in known or b not in known:
                continue
            edges.add((a, b) if a < b else (b, a))
        return cls(users=tuple(sorted(known)), edges=frozenset(edges))

    @classmethod
    def from_matrix(cls, users: Sequence[str], matrix: np.ndarray) -> 'SocialGraph':
        """Build from a symmetric boolean adjacency matrix indexed like `users`."""
        rows, cols = np.nonzero(np.triu(np.asarray(matrix, dtype=bool), k=1))
        pairs = [(users[i], users[j]) for i, j in zip(rows, cols)]
        return cls.from_pairs(users, pairs)

    @cached_property
    def _adjacency(self) -> dict[str, tuple[str, ...]]:
        adj = {u: [] for u in self.users}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {u: tuple(sorted(v)) for u, v in adj.items()}

    def neighbors(self, user_id: str) -> tuple[str, ...]:
        """Sorted friends of `user_id` (empty for isolated or unknown users)."""
        return self._adjacency.get(user_id, ())

    def has_edge(self, a: str, b: str) -> bool:
        return ((a, b) if a < b else (b, a)) in self.edges

    def to_matrix(self) -> np.ndarray:
        """Symmetric boolean adjacency matrix over `users` (sorted order)."""
        pos = {u: i for i, u in enumerate(self.users)}
        matrix = np.zeros((len(self.users), len(self.users)), dtype=bool)
        for a, b in self.edges:
            matrix[pos[a], pos[b]] = True
            matrix[pos[b], pos[a]] = True
        return matrix


@dataclass(frozen=True)
class EvalInstance:
    """A held-out sequence: context (all but last record) and ground truth."""
    user_id: str
    context: tuple[CheckInRecord, ...]
    truth: CheckInRecord

    @property
    def query_time(self) -> tuple[str, int]:
        """(day, hour) of the moment being predicted."""
        return self.truth.day_of_week, self.truth.hour_of_day


@dataclass(frozen=True)
class DatasetSplit:
    """Per-user chronological 8:1:1 split of daily sequences."""
    train: dict[str, tuple[tuple[CheckInRecord, ...], ...]]
    validation: dict[str, tuple[EvalInstance, ...]]
    test: dict[str, tuple[EvalInstance, ...]]
    sizes: dict[str, tuple[int, int, int]]

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(sorted(self.train))

    def training_sequences(self, user_id: str) -> UserSequences:
        """Train-only sequences; the last train day acts as `current`."""
        days = self.train[user_id]
        return UserSequences(user_id=user_id, history=days[:-1], current=days[-1])

    def instances(self, which: str = 'test') -> list[EvalInstance]:
        """All evaluation instances of a bucket, ordered by user then time."""
        if which not in ('validation', 'test'):
            raise ValueError(f"Unknown split bucket '{which}'")
        bucket = getattr(self, which)
        return [inst for user in sorted(bucket) for inst in bucket[user]]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw tables after ingestion.

    checkins: user_id, poi_id, timestamp (UTC), sorted by user then time.
    pois: poi_id, category, lat, lon. social: user_a, user_b (a < b).
    """
    checkins: pd.DataFrame
    pois: pd.DataFrame
    social: pd.DataFrame

    @property
    def n_checkins(self) -> int:
        return len(self.checkins)

    @property
    def n_users(self) -> int:
        return int(self.checkins['user_id'].nunique())

    @property
    def n_pois(self) -> int:
        return len(self.pois)


class PoiCatalog:
    """All POIs with assigned regions, plus category/region vocabularies.

    Parameters
    ----------
    pois
        Catalog entries, region ids already assigned.
    grid
        Region grid the ids come from.
    bucket_km
        Edge of the spatial index buckets.
    """
    def __init__(
        self,
        pois: Sequence[PoiEntry],
        grid: RegionGrid,
        bucket_km: float = 2.0,
    ) -> None:
        self.pois = tuple(pois)
        self.grid = grid
        self.bucket_km = bucket_km
        self._by_id = {p.poi_id: p for p in self.pois}
        if len(self._by_id) != len(self.pois):
            raise DatasetError("POI catalog contains duplicate ids")
        if any(p.region_id < 1 for p in self.pois):
            raise DatasetError("POI catalog contains entries without a region")

        self.categories = tuple(sorted({p.category_id for p in self.pois}))
        self.regions = tuple(sorted({p.region_id for p in self.pois}))
        self._category_pos = {c: i for i, c in enumerate(self.categories)}
        self._region_pos = {r: i for i, r in enumerate(self.regions)}

    def __len__(self) -> int:
        return len(self.pois)

    def __iter__(self) -> Iterator[PoiEntry]:
        return iter(self.pois)

    def __contains__(self, poi_id: object) -> bool:
        return poi_id in self._by_id

    @cached_property
    def index(self) -> SpatialIndex:
        return SpatialIndex(self.pois, bucket_km=self.bucket_km)

    def get(self, poi_id: str) -> PoiEntry:
        try:
            return self._by_id[poi_id]
        except KeyError as e:
            raise DatasetError(f"POI '{poi_id}' is not in the catalog") from e

    def category_index(self, category: str) -> int:
        return self._category_pos[category]

    def region_index(self, region_id: int) -> int:
        return self._region_pos[region_id]


@dataclass(frozen=True, eq=False)
class Corpus:
    """Preprocessed dataset: catalog, per-user daily sequences, social graph."""
    catalog: PoiCatalog
    sequences: dict[str, UserSequences]
    social: SocialGraph
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(sorted(self.sequences))

    def statistics(self) -> dict[str, Union[int, float]]:
        """Counts reported for a preprocessed dataset."""
        n_users = len(self.sequences)
        visited = {r.poi_id for s in self.sequences.values() for d in s.days for r in d}
        n_checkins = sum(s.n_checkins for s in self.sequences.values())
        density = n_checkins / (n_users * len(visited)) if n_users and visited else 0.0
        return {
            'users': n_users,
            'pois': len(visited),
            'checkins': n_checkins,
            'categories': len(self.catalog.categories),
            'regions': len(self.catalog.regions),
            'sequences': sum(len(s.days) for s in self.sequences.values()),
            'social_edges': len(self.social.edges),
            'density': density,
        }


@dataclass(frozen=True)
class DayView:
    """Aligned per-aspect projections of one daily sequence."""
    pois: tuple[str, ...]
    categories: tuple[str, ...]
    regions: tuple[int, ...]
    distances: tuple[float, ...]
    days: tuple[str, ...]
    hours: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.pois)
        lengths = (
            len(self.categories), len(self.regions), len(self.distances),
            len(self.days), len(self.hours),
        )
        if any(length != n for length in lengths):
            raise ValueError("Sequence views are not aligned")

    def __len__(self) -> int:
        return len(self.pois)


@dataclass(frozen=True)
class SequenceViews:
    """L_u, C_u, R_u and D_u of one user as day views."""
    user_id: str
    history: tuple[DayView, ...]
    current: DayView

    @property
    def days(self) -> tuple[DayView, ...]:
        return (*self.history, self.current)


## Ingestion ----------------------------------------------------------------#
def _read_tsv(path: Union[Path, str], columns: Sequence[str]) -> pd.DataFrame:
    """Read a header-less TSV into string columns plus a 1-based `line` column.

    Blank lines are skipped; rows with a wrong field count or an empty field
    raise DatasetError carrying the line number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError("file not found", path=str(path))

    try:
        df = pd.read_csv(
            path,
            sep='\t',
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            quoting=csv.QUOTE_NONE,
            encoding='utf-8',
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame({c: pd.Series(dtype=str) for c in columns}).assign(
            line=pd.Series(dtype=np.int64),
        )
    except pd.errors.ParserError as e:
        match = re.search(r'line (\d+)', str(e))
        line = int(match.group(1)) if match else None
        raise DatasetError(
            f"expected {len(columns)} tab-separated fields", path=str(path), line=line,
        ) from e
    except UnicodeDecodeError as e:
        raise DatasetError("file is not valid UTF-8", path=str(path)) from e

    df = df.fillna('')
    df = df.apply(lambda s: s.str.strip())
    df['line'] = np.arange(1, len(df) + 1)
    values = df.drop(columns='line')
    df = df[~(values == '').all(axis=1)]
    values = df.drop(columns='line')

    n_fields = values.shape[1]
    if n_fields > len(columns):
        extra = (values.iloc[:, len(columns):] != '').any(axis=1)
        if extra.any():
            line = int(df.loc[extra.idxmax(), 'line'])
            raise DatasetError(
                f"expected {len(columns)} tab-separated fields", path=str(path), line=line,
            )
        values = values.iloc[:, :len(columns)]
    elif n_fields < len(columns) and len(df):
        raise DatasetError(
            f"expected {len(columns)} tab-separated fields, saw {n_fields}",
            path=str(path),
            line=int(df['line'].iloc[0]),
        )

    values.columns = list(columns)
    missing = (values == '').any(axis=1)
    if missing.any():
        line = int(df.loc[missing.idxmax(), 'line'])
        raise DatasetError("empty field", path=str(path), line=line)
    return values.assign(line=df['line'])


def _parse_timestamps(raw: pd.Series) -> pd.Series:
    """ISO-8601 (naive means UTC) or epoch seconds, normalized to UTC."""
    out = pd.Series(pd.NaT, index=raw.index, dtype='datetime64[ns, UTC]')
    epoch = raw.str.fullmatch(_EPOCH.pattern)
    if epoch.any():
        out.loc[epoch] = pd.to_datetime(
            raw[epoch].astype(np.float64), unit='s', utc=True, errors='coerce',
        )
    if (~epoch).any():
        out.loc[~epoch] = pd.to_datetime(
            raw[~epoch], utc=True, format='ISO8601', errors='coerce',
        )
    return out


def _load_pois(path: Union[Path, str]) -> pd.DataFrame:
    df = _read_tsv(path, POI_COLUMNS)
    lat = pd.to_numeric(df['lat'], errors='coerce')
    lon = pd.to_numeric(df['lon'], errors='coerce')
    bad = lat.isna() | lon.isna() | ~lat.between(-90, 90) | ~lon.between(-180, 180)
    if bad.any():
        row = df.loc[bad.idxmax()]
        raise DatasetError(
            f"invalid coordinates ({row['lat']}, {row['lon']})",
            path=str(path),
            line=int(row['line']),
        )
    dup = df['poi_id'].duplicated()
    if dup.any():
        row = df.loc[dup.idxmax()]
        raise DatasetError(
            f"duplicate POI id '{row['poi_id']}'", path=str(path), line=int(row['line']),
        )
    return pd.DataFrame({
        'poi_id': df['poi_id'],
        'category': df['category'],
        'lat': lat.astype(np.float64),
        'lon': lon.astype(np.float64),
    }).reset_index(drop=True)


def _load_checkins(path: Union[Path, str], known_pois: set[str]) -> pd.DataFrame:
    df = _read_tsv(path, CHECKIN_COLUMNS)
    ts = _parse_timestamps(df['timestamp'])
    if ts.isna().any():
        row = df.loc[ts.isna().idxmax()]
        raise DatasetError(
            f"unparseable timestamp '{row['timestamp']}'",
            path=str(path),
            line=int(row['line']),
        )
    unknown = ~df['poi_id'].isin(known_pois)
    if unknown.any():
        ids = sorted(df.loc[unknown, 'poi_id'].unique())
        shown = ', '.join(ids[:10]) + (' ...' if len(ids) > 10 else '')
        raise DatasetError(
            f"check-ins reference {len(ids)} unknown POI id(s): {shown}",
            path=str(path),
            line=int(df.loc[unknown.idxmax(), 'line']),
        )
    checkins = pd.DataFrame({
        'user_id': df['user_id'],
        'poi_id': df['poi_id'],
        'timestamp': ts,
    })
    return checkins.sort_values(['user_id', 'timestamp'], kind='stable').reset_index(drop=True)


def _load_social(path: Optional[Union[Path, str]]) -> pd.DataFrame:
    if path is None:
        return pd.DataFrame({c: pd.Series(dtype=str) for c in SOCIAL_COLUMNS})
    df = _read_tsv(path, SOCIAL_COLUMNS)
    ordered = df['user_a'] <= df['user_b']
    social = pd.DataFrame({
        'user_a': np.where(ordered, df['user_a'], df['user_b']),
        'user_b': np.where(ordered, df['user_b'], df['user_a']),
    })
    social = social[social['user_a'] != social['user_b']]
    return social.drop_duplicates().sort_values(['user_a', 'user_b']).reset_index(drop=True)


def ingest(
    checkin_path: Union[Path, str],
    poi_path: Union[Path, str],
    social_path: Optional[Union[Path, str]] = None,
) -> Dataset:
    """Parse the three raw TSV files.

    Parameters
    ----------
    checkin_path
        `user_id  poi_id  timestamp` per line (ISO-8601 or epoch seconds).
    poi_path
        `poi_id  category_name  lat  lon` per line.
    social_path
        Optional `user_id_a  user_id_b` undirected edges.

    Returns
    -------
    Dataset
        Check-ins sorted by user then UTC timestamp.
    """
    pois = _load_pois(poi_path)
    checkins = _load_checkins(checkin_path, set(pois['poi_id']))
    social = _load_social(social_path)
    log.info(
        f"Ingested {len(checkins)} check-ins, {checkins['user_id'].nunique()} users, "
        f"{len(pois)} POIs, {len(social)} social edges",
    )
    return Dataset(checkins=checkins, pois=pois, social=social)


## Preprocessing ------------------------------------------------------------#
def five_core_filter(dataset: Dataset, k: int = 5) -> Dataset:
    """Prune users and POIs with fewer than `k` check-ins until stable.

    Counts are check-ins (not distinct pairs). The POI table keeps only POIs
    that still have check-ins.
    """
    checkins = dataset.checkins
    rounds = 0
    while True:
        before = len(checkins)
        user_counts = checkins['user_id'].map(checkins['user_id'].value_counts())
        checkins = checkins[user_counts >= k]
        poi_counts = checkins['poi_id'].map(checkins['poi_id'].value_counts())
        checkins = checkins[poi_counts >= k]
        rounds += 1
        if len(checkins) == before:
            break

    checkins = checkins.reset_index(drop=True)
    pois = dataset.pois[dataset.pois['poi_id'].isin(set(checkins['poi_id']))]
    log.info(
        f"{k}-core filter converged after {rounds} round(s): "
        f"{dataset.n_checkins} -> {len(checkins)} check-ins",
    )
    return Dataset(checkins=checkins, pois=pois.reset_index(drop=True), social=dataset.social)


def assign_regions(
    dataset: Dataset,
    cell_km: float = 1.0,
    bucket_km: float = 2.0,
) -> PoiCatalog:
    """Build the POI catalog with grid regions over the POIs' bounding box."""
    pois = dataset.pois
    if len(pois):
        grid = RegionGrid.from_points(pois['lat'].to_numpy(), pois['lon'].to_numpy(), cell_km)
    else:
        grid = RegionGrid(0.0, 0.0, 0.0, 0.0, cell_km)
    entries = [
        PoiEntry(
            poi_id=row.poi_id,
            category_id=row.category,
            lat=float(row.lat),
            lon=float(row.lon),
            region_id=grid.cell_of(float(row.lat), float(row.lon)),
        )
        for row in pois.itertuples(index=False)
    ]
    catalog = PoiCatalog(entries, grid, bucket_km=bucket_km)
    log.info(
        f"Assigned {len(catalog)} POIs to {len(catalog.regions)} occupied regions "
        f"({grid.n_rows}x{grid.n_cols} grid, {cell_km} km cells)",
    )
    return catalog


def resolve_timezone(zone: Union[str, float, int, tzinfo, None]) -> tzinfo:
    """Time zone from an IANA name, a UTC offset in hours, or a tzinfo."""
    if zone is None:
        return timezone.utc
    if isinstance(zone, tzinfo):
        return zone
    if isinstance(zone, (int, float)):
        return timezone(timedelta(hours=float(zone)))
    if str(zone).upper() in ('UTC', 'Z'):
        return timezone.utc
    try:
        return ZoneInfo(str(zone))
    except (ZoneInfoNotFoundError, ValueError) as e:
        raise ConfigError(f"Unknown time zone '{zone}'") from e


def build_daily_sequences(
    dataset: Dataset,
    catalog: PoiCatalog,
    tz: Union[str, float, tzinfo, None] = 'UTC',
    min_sequences: int = 3,
) -> dict[str, UserSequences]:
    """Split each user's check-ins on local calendar days.

    Users with fewer than `min_sequences` days are dropped. The latest day is
    `current`, the rest `history`. Distances restart at 0 on every day.
    """
    zone = resolve_timezone(tz)
    df = dataset.checkins.assign(local=dataset.checkins['timestamp'].dt.tz_convert(zone))

    sequences = {}
    dropped = 0
    for user_id, group in df.groupby('user_id', sort=True):
        days: list[list[CheckInRecord]] = []
        prev_date = None
        prev_poi = None
        for row in group.itertuples(index=False):
            poi = catalog.get(row.poi_id)
            local = row.local
            if local.date() != prev_date:
                days.append([])
                prev_date = local.date()
                prev_poi = None
            dist = 0.0 if prev_poi is None else haversine(
                (prev_poi.lat, prev_poi.lon), (poi.lat, poi.lon),
            )
            days[-1].append(CheckInRecord(
                user_id=str(user_id),
                poi_id=poi.poi_id,
                timestamp=row.timestamp.to_pydatetime(),
                day_of_week=DAY_NAMES[local.weekday()],
                hour_of_day=int(local.hour),
                category_id=poi.category_id,
                region_id=poi.region_id,
                distance_km=dist,
            ))
            prev_poi = poi

        if len(days) < min_sequences:
            dropped += 1
            continue
        frozen = tuple(tuple(day) for day in days)
        sequences[str(user_id)] = UserSequences(
            user_id=str(user_id), history=frozen[:-1], current=frozen[-1],
        )

    log.info(
        f"Built daily sequences for {len(sequences)} users "
        f"({dropped} dropped with < {min_sequences} days)",
    )
    return sequences


def build_social_graph(dataset: Dataset, users: Sequence[str]) -> SocialGraph:
    """Social graph restricted to `users`."""
    pairs = list(zip(dataset.social['user_a'], dataset.social['user_b']))
    return SocialGraph.from_pairs(users, pairs)


def split_sizes(n: int) -> tuple[int, int, int]:
    """(train, validation, test) sequence counts for `n` sequences.

    Validation and test take floor(n / 10) each but at least one; train gets
    the remainder.
    """
    if n < 3:
        raise ValueError(f"Need at least 3 sequences to split, got {n}")
    n_val = max(1, n // 10)
    n_test = max(1, n // 10)
    return n - n_val - n_test, n_val, n_test


def _instances(user_id: str, days: Sequence[tuple[CheckInRecord, ...]]) -> tuple[EvalInstance, ...]:
    out = []
    for day in days:
        if len(day) < 2:
            log.debug(f"Skipping single check-in evaluation sequence of user {user_id}")
            continue
        out.append(EvalInstance(user_id=user_id, context=day[:-1], truth=day[-1]))
    return tuple(out)


def chronological_split(sequences: Mapping[str, UserSequences]) -> DatasetSplit:
    """Per-user chronological 8:1:1 split by sequence count.

    Validation and test sequences become (context, ground truth) instances;
    sequences with a single check-in have no context and yield no instance.
    """
    train, validation, test, sizes = {}, {}, {}, {}
    skipped = 0
    for user_id in sorted(sequences):
        days = sequences[user_id].days
        n_train, n_val, n_test = split_sizes(len(days))
        sizes[user_id] = (n_train, n_val, n_test)
        train[user_id] = days[:n_train]
        validation[user_id] = _instances(user_id, days[n_train:n_train + n_val])
        test[user_id] = _instances(user_id, days[n_train + n_val:])
        skipped += (n_val - len(validation[user_id])) + (n_test - len(test[user_id]))

    if skipped:
        log.info(f"Skipped {skipped} single check-in evaluation sequence(s)")
    return DatasetSplit(train=train, validation=validation, test=test, sizes=sizes)


def day_view(records: Sequence[CheckInRecord], catalog: PoiCatalog) -> DayView:
    """Project one daily sequence onto its POI/category/region/distance views."""
    pois = [catalog.get(r.poi_id) for r in records]
    distances = [0.0]
    for prev, cur in zip(pois, pois[1:]):
        distances.append(haversine((prev.lat, prev.lon), (cur.lat, cur.lon)))
    return DayView(
        pois=tuple(p.poi_id for p in pois),
        categories=tuple(p.category_id for p in pois),
        regions=tuple(p.region_id for p in pois),
        distances=tuple(distances[:len(pois)]),
        days=tuple(r.day_of_week for r in records),
        hours=tuple(r.hour_of_day for r in records),
    )


def derive_aux_sequences(user: UserSequences, catalog: PoiCatalog) -> SequenceViews:
    """Category, region and distance views aligned 1:1 with the POI view."""
    return SequenceViews(
        user_id=user.user_id,
        history=tuple(day_view(day, catalog) for day in user.history),
        current=day_view(user.current, catalog),
    )


def build_corpus(
    checkin_path: Union[Path, str],
    poi_path: Union[Path, str],
    social_path: Optional[Union[Path, str]] = None,
    config: Optional[dict[str, Any]] = None,
) -> Corpus:
    """Run ingest, 5-core filter, region assignment and daily sequencing.

    Parameters
    ----------
    checkin_path
        Check-in TSV.
    poi_path
        POI TSV.
    social_path
        Optional social edge TSV.
    config
        Optional overrides: core_k, cell_km, bucket_km, timezone, min_sequences.
    """
    core_k = 5
    cell_km = 1.0
    bucket_km = 2.0
    tz = 'UTC'
    min_sequences = 3
    if config is not None:
        # Overwrite defaults with config values.
        core_k = int(config.get('core_k', core_k))
        cell_km = float(config.get('cell_km', cell_km))
        bucket_km = float(config.get('bucket_km', bucket_km))
        tz = config.get('timezone', tz)
        min_sequences = int(config.get('min_sequences', min_sequences))

    dataset = five_core_filter(ingest(checkin_path, poi_path, social_path), k=core_k)
    catalog = assign_regions(dataset, cell_km=cell_km, bucket_km=bucket_km)
    sequences = build_daily_sequences(dataset, catalog, tz=tz, min_sequences=min_sequences)
    social = build_social_graph(dataset, list(sequences))
    params = {
        'core_k': core_k,
        'cell_km': cell_km,
        'bucket_km': bucket_km,
        'timezone': str(tz),
        'min_sequences': min_sequences,
    }
    return Corpus(catalog=catalog, sequences=sequences, social=social, params=params)
