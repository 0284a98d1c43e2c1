"""
Note: If adding new public methods, please add them to __all__
at the top of the file and in calc/__init__.py.
"""
from collections.abc import Hashable, Sequence
from typing import Optional

import numpy as np

__all__ = [
    'rank_of',
    'acc_at_k',
    'mrr',
    'aggregate_metrics',
    'METRIC_NAMES',
]

METRIC_NAMES = ('acc@1', 'acc@5', 'acc@10', 'mrr')


def rank_of(ranked: Sequence[Hashable], truth: Hashable) -> Optional[int]:
    """1-based rank of `truth` in `ranked`, None if absent."""
    for i, item in enumerate(ranked, start=1):
        if item == truth:
            return i
    return None


def acc_at_k(ranked: Sequence[Hashable], truth: Hashable, k: int) -> int:
    """1 if `truth` is among the first `k` items, else 0.

    Parameters
    ----------
    ranked
        Ranked list, best first.
    truth
        Ground-truth item.
    k
        Cut-off, must be >= 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rank = rank_of(ranked, truth)
    return int(rank is not None and rank <= k)


def mrr(ranked: Sequence[Hashable], truth: Hashable) -> float:
    """Reciprocal rank of `truth`; 0 when it is absent from the list."""
    rank = rank_of(ranked, truth)
    return 0.0 if rank is None else 1.0 / rank


def aggregate_metrics(
    rankings: Sequence[Sequence[Hashable]],
    truths: Sequence[Hashable],
) -> dict[str, float]:
    """Mean ACC@1/5/10 and MRR over a batch of rankings.

    An empty batch yields zeros.
    """
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths differ in length")
    if not rankings:
        return dict.fromkeys(METRIC_NAMES, 0.0)

    table = np.array([
        [
            acc_at_k(r, t, 1),
            acc_at_k(r, t, 5),
            acc_at_k(r, t, 10),
            mrr(r, t),
        ]
        for r, t in zip(rankings, truths)
    ], dtype=np.float64)
    means = table.mean(axis=0)
    return {name: float(v) for name, v in zip(METRIC_NAMES, means)}
