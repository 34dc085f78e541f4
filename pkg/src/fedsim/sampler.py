"""Weighted sampling of distinct clients (Efraimidis-Spirakis A-Res).

Every index ``i`` draws ``u_i ~ U(0, 1]`` and gets the key ``u_i ** (1 / w_i)``;
the ``K`` largest keys win. Keys are compared in log space
(``log(u_i) / w_i``) so tiny weights do not underflow to a tie at zero.
"""

from __future__ import annotations

import heapq

import numpy as np

from fedsim.errors import InfeasibleSampleError

__all__ = ["sample_without_replacement", "inclusion_frequencies"]


def sample_without_replacement(weights, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` distinct indices with A-Res; returned sorted ascending.

    Zero-weight indices are never chosen. Equal keys favour the lower index.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if k < 0:
        raise ValueError("k must be non-negative")
    if np.count_nonzero(w > 0) < k:
        raise InfeasibleSampleError(
            f"cannot draw {k} distinct indices from {np.count_nonzero(w > 0)} positive weights"
        )
    u = 1.0 - rng.random(w.size)
    with np.errstate(divide="ignore", over="ignore"):
        log_keys = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)

    # reservoir of (key, -index): the heap root is the weakest member, and
    # among equal keys the higher index is evicted first
    reservoir: list[tuple[float, int]] = []
    for i, key in enumerate(log_keys):
        if len(reservoir) < k:
            heapq.heappush(reservoir, (key, -i))
        elif reservoir and key > reservoir[0][0]:
            heapq.heapreplace(reservoir, (key, -i))
    return np.sort(np.array([-i for _, i in reservoir], dtype=np.int64))


def inclusion_frequencies(weights, k: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical per-index selection frequency over ``trials`` independent draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    w = np.asarray(weights, dtype=float)
    hits = np.zeros(w.size)
    for _ in range(trials):
        hits[sample_without_replacement(w, k, rng)] += 1
    return hits / trials
