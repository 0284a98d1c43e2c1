"""
Parameter sweeps and the privacy-utility study of neighbor retrieval.

Note: If adding new public methods, please add them to __all__
at the top of the file and in evaluation/__init__.py.
"""
import logging
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
import torch

from privpoi.core.calc.divergence import kl_matrix, smooth_distribution
from privpoi.core.utils.errors import ConfigError
from privpoi.core.utils.utils import derive_rng
from privpoi.evaluation.harness import RESULT_COLUMNS, EvalRun
from privpoi.modules.neighbors import CheckinDistribution

log = logging.getLogger('privpoi')

__all__ = [
    'SWEEP_PARAMETERS',
    'DEFAULT_GRIDS',
    'parse_grid',
    'nearest_indices',
    'neighbor_agreement',
    'sweep',
    'agreement_sweep',
    'write_sweep',
]

SWEEP_PARAMETERS = ('epsilon', 'm', 'n', 'participation', 'agreement')

DEFAULT_GRIDS = {
    'epsilon': (0.1, 0.3, 0.5, 0.7, 0.9),
    'm': (1, 2, 3, 4, 5),
    'n': (2, 3, 4, 5, 6, 7, 8),
    'participation': (0.25, 0.5, 0.75, 1.0),
    'agreement': (0.1, 0.3, 0.5, 0.7, 0.9),
}

SWEEP_COLUMNS = ('parameter', 'value', *RESULT_COLUMNS)


def parse_grid(parameter: str, grid: Union[str, Sequence[Any], None]) -> tuple:
    """Grid values of a sweep parameter.

    Accepts a comma list ('0.1,0.5'), a range 'start:stop:step' with an
    inclusive stop, a sequence, or None for the default grid.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"Unknown sweep parameter '{parameter}'")
    cast = int if parameter in ('m', 'n') else float
    if grid is None:
        return DEFAULT_GRIDS[parameter]
    if isinstance(grid, str):
        try:
            if ':' in grid:
                start, stop, step = (float(x) for x in grid.split(':'))
                count = int(round((stop - start) / step)) + 1
                values = [start + i * step for i in range(count)]
                return tuple(cast(round(v, 10)) for v in values)
            return tuple(cast(v) for v in grid.split(',') if v.strip())
        except ValueError as e:
            raise ConfigError(f"Invalid grid '{grid}' for {parameter}") from e
    return tuple(cast(v) for v in grid)


## Privacy-utility ----------------------------------------------------------#
def nearest_indices(kl: torch.Tensor) -> np.ndarray:
    """Row-wise argmin of a square KL matrix, excluding the diagonal.

    Ties go to the smallest column index.
    """
    scores = kl.clone()
    scores.fill_diagonal_(float('inf'))
    return torch.argmin(scores, dim=1).numpy()


def neighbor_agreement(
    distributions: Mapping[str, CheckinDistribution],
    epsilon: float,
    trials: int = 20,
    seed: int = 0,
    sensitivity: float = 1.0,
    alpha: float = 1e-6,
) -> tuple[float, float]:
    """Agreement of neighbor retrieval on perturbed vs true distributions.

    In every trial each distribution is Laplace-perturbed and the nearest
    neighbor retrieved on the perturbed set. A user agrees when that neighbor
    is, under the true distributions, as close as the true nearest neighbor.
    Trial t uses the stream ('agreement', t) at every budget, so budgets only
    rescale the same noise.

    Returns
    -------
    tuple
        Mean and standard deviation of the agreement rate over trials.
    """
    users = sorted(distributions)
    if len(users) < 2:
        raise ValueError("Neighbor agreement needs at least two users")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    probs = np.stack([distributions[u].probs for u in users])
    true_kl = kl_matrix(probs, probs)
    true_kl.fill_diagonal_(float('inf'))
    best = torch.min(true_kl, dim=1).values.numpy()
    true_np = true_kl.numpy()

    rates = []
    for trial in range(trials):
        rng = derive_rng(seed, 'agreement', trial)
        noisy = smooth_distribution(
            probs + rng.laplace(0.0, sensitivity / epsilon, size=probs.shape), alpha,
        )
        chosen = nearest_indices(kl_matrix(noisy, noisy))
        picked = true_np[np.arange(len(users)), chosen]
        rates.append(float(np.mean(picked <= best + 1e-12)))
    return float(np.mean(rates)), float(np.std(rates))


## Sweeps -------------------------------------------------------------------#
def sweep(
    parameter: str,
    grid: Sequence[Any],
    evaluate_point: Callable[[Any], Sequence[EvalRun]],
) -> pd.DataFrame:
    """Evaluate every grid value of `parameter`.

    Parameters
    ----------
    parameter
        One of SWEEP_PARAMETERS.
    grid
        Values to evaluate, in order.
    evaluate_point
        Runs the pipeline for one value and returns the EvalRuns.

    Returns
    -------
    pd.DataFrame
        One row per (value, method, metric).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"Unknown sweep parameter '{parameter}'")
    rows = []
    for value in grid:
        log.info(f"Sweep {parameter}={value}")
        for result in evaluate_point(value):
            rows += [{'parameter': parameter, 'value': value, **row} for row in result.rows()]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))


def agreement_sweep(
    distributions: Mapping[str, Mapping[str, CheckinDistribution]],
    grid: Sequence[float],
    trials: int = 20,
    seed: int = 0,
    sensitivity: float = 1.0,
) -> pd.DataFrame:
    """Neighbor agreement per budget, for regional and categorical retrieval."""
    rows = []
    for kind, method in (('region', 'geographical'), ('category', 'semantic')):
        per_user = {u: d[kind] for u, d in distributions.items()}
        for epsilon in grid:
            mean, std = neighbor_agreement(
                per_user, epsilon, trials=trials, seed=seed, sensitivity=sensitivity,
            )
            rows.append({
                'parameter': 'agreement', 'value': epsilon, 'method': method,
                'metric': 'agreement', 'mean': mean, 'std': std, 'runs': trials,
            })
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))


def write_sweep(frame: pd.DataFrame, path: Union[Path, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.6f')
    log.info(f"Wrote {path}")
    return path
