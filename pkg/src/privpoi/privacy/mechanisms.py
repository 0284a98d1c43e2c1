"""
Local differential privacy mechanisms: optimized unary encoding, Laplace noise
on distributions, random flipping of social links, and the category coin used
by POI fuzzification.

Every function is pure given its explicit numpy Generator.
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from privpoi.data.corpus import SocialGraph
from privpoi.privacy.config import PrivacyConfig

log = logging.getLogger('privpoi')

__all__ = [
    'OneHotRecord',
    'cold_bit_probability',
    'oue_perturb',
    'decode_perturbed',
    'laplace_perturb',
    'flip_social_links',
    'random_flip',
]


@dataclass(frozen=True)
class OneHotRecord:
    """A token as a one-hot vector over a vocabulary of `size` entries."""
    size: int
    index: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("vocabulary size must be >= 1")
        if not 0 <= self.index < self.size:
            raise ValueError(f"index {self.index} outside vocabulary of size {self.size}")

    def to_bits(self) -> np.ndarray:
        bits = np.zeros(self.size, dtype=np.uint8)
        bits[self.index] = 1
        return bits


def cold_bit_probability(epsilon: float) -> float:
    """1 / (e^eps + 1), evaluated without overflow."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tail = math.exp(-epsilon)
    return tail / (1.0 + tail)


def oue_perturb(
    x: Union[OneHotRecord, np.ndarray],
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Optimized unary encoding of one or more one-hot vectors.

    The hot bit is reported with probability 1/2 and every cold bit with
    probability 1 / (e^eps + 1), independently.

    Parameters
    ----------
    x
        A OneHotRecord, a one-hot vector, or a 2D batch of one-hot rows.
    epsilon
        Privacy budget.
    rng
        Randomness source.

    Returns
    -------
    np.ndarray
        uint8 bit array of the same shape as the input bits.
    """
    bits = x.to_bits() if isinstance(x, OneHotRecord) else np.asarray(x)
    if bits.ndim not in (1, 2) or bits.shape[-1] == 0:
        raise ValueError("expected a one-hot vector or a 2D batch of them")
    if not np.isin(bits, (0, 1)).all() or not (bits.sum(axis=-1) == 1).all():
        raise ValueError("input is not one-hot")

    probs = np.where(bits == 1, 0.5, cold_bit_probability(epsilon))
    return (rng.random(bits.shape) < probs).astype(np.uint8)


def decode_perturbed(bits: np.ndarray, rng: np.random.Generator) -> int:
    """Turn a perturbed bit vector back into one vocabulary index.

    Picks uniformly among the set bits, or uniformly over the whole vocabulary
    when none is set.
    """
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("expected a non-empty bit vector")
    hot = np.flatnonzero(bits)
    if hot.size:
        return int(hot[rng.integers(hot.size)])
    return int(rng.integers(bits.size))


def laplace_perturb(
    p: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    sensitivity: float = 1.0,
) -> np.ndarray:
    """Add i.i.d. Laplace(0, sensitivity / eps) noise to a probability vector.

    The noisy vector is returned raw: entries may be negative and the sum is
    not 1. Consumers clamp, smooth and renormalize.
    """
    p = np.asarray(p, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("expected a probability vector summing to 1")
    return p + rng.laplace(0.0, sensitivity / epsilon, size=p.shape)


def flip_social_links(
    graph: SocialGraph,
    config: PrivacyConfig,
    rng: np.random.Generator,
) -> SocialGraph:
    """Randomly flip every unordered user pair once.

    An existing link survives with probability `flip_p`; a missing link is
    created with probability `flip_q`. Self-loops are never created.
    """
    p, q = config.flip_p, config.flip_q
    users = graph.users
    matrix = graph.to_matrix()
    edges = set()
    for i in range(len(users) - 1):
        existing = matrix[i, i + 1:]
        draws = rng.random(existing.shape[0])
        keep = np.where(existing, draws < p, draws < q)
        for j in np.flatnonzero(keep):
            edges.add((users[i], users[i + 1 + j]))

    log.debug(f"Flipped social graph: {len(graph.edges)} -> {len(edges)} links")
    return SocialGraph(users=users, edges=frozenset(edges))


def random_flip(epsilon: float, rng: np.random.Generator) -> int:
    """1 ("drop the category requirement") with probability 1 / (e^eps + 1)."""
    return int(rng.random() < cold_bit_probability(epsilon))
