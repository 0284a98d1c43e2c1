"""
Evaluation harness: candidate sampling, repeated runs and the results table.

Every run draws fresh candidate sets from its own seed; the release of each
query context depends only on the instance, so repeated runs of the same
instance show the LLM the same released context.

Note: If adding new public methods, please add them to __all__
at the top of the file and in evaluation/__init__.py.
"""
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from privpoi.core.calc.metrics import METRIC_NAMES, aggregate_metrics
from privpoi.core.utils.errors import EvaluationError, LlmError
from privpoi.core.utils.io import to_ndjson_line, write_ndjson
from privpoi.core.utils.utils import derive_rng
from privpoi.data.corpus import EvalInstance
from privpoi.llm.client import LlmClient

log = logging.getLogger('privpoi')

__all__ = [
    'RESULT_COLUMNS',
    'EvalRun',
    'sample_candidates',
    'run_eval',
    'results_frame',
    'write_results',
]

RESULT_COLUMNS = ('method', 'metric', 'mean', 'std', 'runs')


def sample_candidates(
    pois: Sequence[str],
    truth: str,
    k: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> list[str]:
    """The ground truth plus k - 1 distinct other POIs, shuffled.

    Parameters
    ----------
    pois
        All catalog POI ids.
    truth
        Ground-truth POI id; must be in `pois`.
    k
        Candidate set size.
    rng
        Randomness source.

    Raises
    ------
    EvaluationError
        If the catalog has fewer than `k` POIs or lacks the ground truth.
    """
    if rng is None:
        rng = np.random.default_rng()
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pois) < k:
        raise EvaluationError(f"Catalog has {len(pois)} POIs, fewer than the {k} candidates")
    others = [p for p in pois if p != truth]
    if len(others) == len(pois):
        raise EvaluationError(f"Ground truth '{truth}' is not in the catalog")

    chosen = rng.choice(len(others), size=k - 1, replace=False)
    candidates = [truth, *(others[i] for i in chosen)]
    return [candidates[i] for i in rng.permutation(k)]


@dataclass
class EvalRun:
    """Metric means of one method over repeated runs."""
    method: str
    per_run: list[dict[str, float]] = field(default_factory=list)
    seeds: list[tuple[int, int]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    skipped: int = 0

    @property
    def runs(self) -> int:
        return len(self.per_run)

    @property
    def metrics(self) -> dict[str, float]:
        """Mean of each metric across runs."""
        if not self.per_run:
            return dict.fromkeys(METRIC_NAMES, 0.0)
        return {m: float(np.mean([r[m] for r in self.per_run])) for m in METRIC_NAMES}

    @property
    def std(self) -> dict[str, float]:
        if not self.per_run:
            return dict.fromkeys(METRIC_NAMES, 0.0)
        return {m: float(np.std([r[m] for r in self.per_run])) for m in METRIC_NAMES}

    def rows(self) -> list[dict[str, Any]]:
        means, stds = self.metrics, self.std
        return [
            {'method': self.method, 'metric': m, 'mean': means[m], 'std': stds[m], 'runs': self.runs}
            for m in METRIC_NAMES
        ]


def _rank_one(method, instance: EvalInstance, candidates: list[str], rng) -> list[str]:
    try:
        return list(method.rank(instance, candidates, rng))
    except LlmError as e:
        log.warning(f"Ranking failed for user {instance.user_id}: {e}; scored as empty")
        return []


def run_eval(
    method,
    instances: Sequence[EvalInstance],
    pois: Sequence[str],
    runs: int = 10,
    seed: int = 0,
    k: int = 100,
    jobs: int = 1,
    client: Optional[LlmClient] = None,
    transcript_dir: Optional[Union[Path, str]] = None,
) -> EvalRun:
    """Evaluate a fitted method over `runs` resampled candidate sets.

    Parameters
    ----------
    method
        Fitted method with `name` and `rank(instance, candidates, rng)`.
    instances
        Evaluation instances.
    pois
        Catalog POI ids candidates are drawn from.
    runs
        Number of repetitions.
    seed
        Master seed; run r samples candidates from stream ('candidates', r).
    k
        Candidate set size.
    jobs
        Worker threads ranking instances in parallel.
    client
        LLM client whose transcript is written per run.
    transcript_dir
        Directory for transcripts/run-<r>.ndjson.
    """
    if runs < 1:
        raise EvaluationError("runs must be >= 1")
    if not instances:
        raise EvaluationError("No evaluation instances")

    name = getattr(method, 'name', type(method).__name__)
    result = EvalRun(method=name, config={'k': k, 'runs': runs, 'seed': seed})
    pois = sorted(pois)
    for run in range(runs):
        rng = derive_rng(seed, 'candidates', run)
        candidate_sets = [sample_candidates(pois, inst.truth.poi_id, k, rng) for inst in instances]
        context_rngs = [derive_rng(seed, 'views', i) for i in range(len(instances))]

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            rankings = list(pool.map(
                lambda args: _rank_one(method, *args),
                zip(instances, candidate_sets, context_rngs),
            ))

        result.skipped += sum(1 for r in rankings if not r)
        scores = aggregate_metrics(rankings, [inst.truth.poi_id for inst in instances])
        result.per_run.append(scores)
        result.seeds.append((seed, run))
        log.info(
            f"{name} run {run + 1}/{runs}: "
            + ', '.join(f"{m}={v:.4f}" for m, v in scores.items()),
        )

        if client is not None and transcript_dir is not None:
            entries = sorted(client.drain_transcript(), key=to_ndjson_line)
            write_ndjson(Path(transcript_dir) / f'run-{run}.ndjson', entries)
    return result


def results_frame(results: Sequence[EvalRun]) -> pd.DataFrame:
    """One row per (method, metric)."""
    rows = [row for r in results for row in r.rows()]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


def write_results(results: Sequence[EvalRun], path: Union[Path, str]) -> Path:
    """Write results.csv with fixed float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results_frame(results).to_csv(path, index=False, float_format='%.6f')
    log.info(f"Wrote {path}")
    return path
