"""
Note: If adding new public methods, please add them to __all__
at the top of the file and in calc/__init__.py.
"""
from collections.abc import Sequence
from typing import Union

import numpy as np
import torch

__all__ = [
    'smooth_distribution',
    'kl_divergence',
    'kl_to_many',
    'kl_matrix',
]

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


def _as_tensor(values: ArrayLike) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(torch.float64)
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def smooth_distribution(values: ArrayLike, alpha: float = 1e-6) -> np.ndarray:
    """Clamp negatives to zero, add `alpha` to every entry and renormalize.

    Accepts raw counts, probability vectors, or noisy (possibly negative)
    Laplace outputs, and always returns a strictly positive vector summing to 1.

    Parameters
    ----------
    values
        Vector (or batch of row vectors) of non-normalized mass.
    alpha
        Additive smoothing floor, must be positive.

    Returns
    -------
    np.ndarray
        Smoothed distribution(s) in float64.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = torch.clamp(_as_tensor(values), min=0.0) + alpha
    x = x / x.sum(dim=-1, keepdim=True)
    return x.numpy()


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """KL(p || q) in nats for two smoothed distributions.

    Parameters
    ----------
    p
        Reference distribution, all entries > 0.
    q
        Approximating distribution, all entries > 0.
    """
    p_t = _as_tensor(p)
    q_t = _as_tensor(q)
    if p_t.shape != q_t.shape or p_t.dim() != 1:
        raise ValueError(
            f"KL needs two vectors of equal length, got {tuple(p_t.shape)} "
            f"and {tuple(q_t.shape)}",
        )
    return float(torch.sum(p_t * (torch.log(p_t) - torch.log(q_t))))


def kl_to_many(p: ArrayLike, qs: ArrayLike) -> torch.Tensor:
    """KL(p || q_j) for every row q_j of `qs`.

    Rows equal to `p` give exactly 0.
    """
    p_t = _as_tensor(p)
    q_t = _as_tensor(qs)
    if q_t.dim() != 2 or q_t.shape[1] != p_t.shape[0]:
        raise ValueError(
            f"Shape mismatch: p {tuple(p_t.shape)} vs rows {tuple(q_t.shape)}",
        )
    return torch.sum(p_t * (torch.log(p_t) - torch.log(q_t)), dim=1)


def kl_matrix(ps: ArrayLike, qs: ArrayLike) -> torch.Tensor:
    """Pairwise KL(p_i || q_j) as an (n, m) float64 tensor."""
    p_t = _as_tensor(ps)
    q_t = _as_tensor(qs)
    if p_t.dim() != 2 or q_t.dim() != 2 or p_t.shape[1] != q_t.shape[1]:
        raise ValueError(
            f"Shape mismatch: {tuple(p_t.shape)} vs {tuple(q_t.shape)}",
        )
    log_p = torch.log(p_t)[:, None, :]
    log_q = torch.log(q_t)[None, :, :]
    return torch.sum(p_t[:, None, :] * (log_p - log_q), dim=-1)
