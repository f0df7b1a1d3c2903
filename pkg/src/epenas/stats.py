"""Tie-aware rank correlations.

Both statistics are computed from exact integer quantities (pair counts,
doubled average ranks) and divided once at the end, so the result is
reproducible to the last bit regardless of input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

_CHUNK = 2048


class UndefinedCorrelationError(ValueError):
    """One of the two variables is constant, so no rank correlation exists."""


@dataclass(frozen=True)
class RankStats:
    kendall_tau: float
    spearman_rho: float
    n: int

    def to_json(self) -> dict:
        return {"kendall_tau": self.kendall_tau, "spearman_rho": self.spearman_rho, "n": self.n}


def _tied_pairs(values: np.ndarray) -> int:
    _, counts = np.unique(values, return_counts=True)
    return int(sum(int(t) * (int(t) - 1) // 2 for t in counts))


def concordance_difference(x: np.ndarray, y: np.ndarray) -> int:
    """(concordant - discordant) over all pairs i < j, counted in row chunks."""
    n = x.size
    total = 0
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        sx = np.sign(x[start:stop, None] - x[None, :]).astype(np.int64)
        sy = np.sign(y[start:stop, None] - y[None, :]).astype(np.int64)
        prod = sx * sy
        # keep only j > i
        mask = np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        total += int(prod[mask].sum())
    return total


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    n0 = n * (n - 1) // 2
    dx, dy = n0 - _tied_pairs(x), n0 - _tied_pairs(y)
    if dx == 0 or dy == 0:
        raise UndefinedCorrelationError("Kendall tau is undefined for a constant variable")
    return concordance_difference(x, y) / math.sqrt(dx * dy)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    rx = [int(v) for v in np.rint(2 * rankdata(x, method="average")).astype(np.int64)]
    ry = [int(v) for v in np.rint(2 * rankdata(y, method="average")).astype(np.int64)]
    n = len(rx)
    sx, sy = sum(rx), sum(ry)
    vx = n * sum(a * a for a in rx) - sx * sx
    vy = n * sum(b * b for b in ry) - sy * sy
    if vx == 0 or vy == 0:
        raise UndefinedCorrelationError("Spearman rho is undefined for a constant variable")
    cov = n * sum(a * b for a, b in zip(rx, ry)) - sx * sy
    return cov / math.sqrt(vx * vy)


def rank_correlation(pairs: Iterable[Tuple[float, float]]) -> RankStats:
    """Kendall tau-b and Spearman rho between the two coordinates of ``pairs``."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise ValueError("rank_correlation needs at least two (score, accuracy) pairs")
    if not np.all(np.isfinite(arr)):
        raise ValueError("rank_correlation needs finite values")
    x, y = arr[:, 0], arr[:, 1]
    return RankStats(kendall_tau_b(x, y), spearman_rho(x, y), int(arr.shape[0]))
