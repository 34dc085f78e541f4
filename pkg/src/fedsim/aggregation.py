"""Combining local models into a global model.

All aggregators sum in ascending ``client_id`` order, so the result is
bit-identical regardless of the order in which updates arrive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from fedsim.errors import DimensionError, EmptyCoalitionError, IdentityError

__all__ = [
    "LocalUpdate",
    "AggregationMode",
    "fedavg",
    "fedsgd",
    "aggregate",
    "leave_one_out",
    "subset_aggregate",
]

AggregationMode = Literal["fedavg", "fedsgd"]


@dataclass(frozen=True)
class LocalUpdate:
    client_id: int
    params: np.ndarray
    data_size: int

    def __post_init__(self):
        if self.data_size < 1:
            raise ValueError("data_size must be >= 1")


def _canonical(updates: Iterable[LocalUpdate]) -> list[LocalUpdate]:
    ordered = sorted(updates, key=lambda u: u.client_id)
    if not ordered:
        raise EmptyCoalitionError("nothing to aggregate")
    shape = ordered[0].params.shape
    for u in ordered[1:]:
        if u.params.shape != shape:
            raise DimensionError(f"client {u.client_id} params have shape {u.params.shape}, expected {shape}")
    return ordered


def _weighted_sum(updates: list[LocalUpdate], weights: list[float]) -> np.ndarray:
    out = np.zeros_like(updates[0].params, dtype=float)
    for u, w in zip(updates, weights):
        out += w * u.params
    return out


def fedavg(updates: Iterable[LocalUpdate]) -> np.ndarray:
    """Data-size weighted mean of the local models."""
    ordered = _canonical(updates)
    total = sum(u.data_size for u in ordered)
    return _weighted_sum(ordered, [u.data_size / total for u in ordered])


def fedsgd(updates: Iterable[LocalUpdate]) -> np.ndarray:
    """Unweighted mean of the local models."""
    ordered = _canonical(updates)
    k = len(ordered)
    return _weighted_sum(ordered, [1 / k] * k)


def aggregate(updates: Iterable[LocalUpdate], mode: AggregationMode = "fedavg") -> np.ndarray:
    if mode == "fedavg":
        return fedavg(updates)
    if mode == "fedsgd":
        return fedsgd(updates)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def subset_aggregate(
    updates: Sequence[LocalUpdate],
    subset: Iterable[int],
    mode: AggregationMode = "fedavg",
) -> Optional[np.ndarray]:
    """Aggregate only the clients in ``subset``; ``None`` for the empty coalition."""
    by_id = {u.client_id: u for u in updates}
    subset = set(subset)
    unknown = subset - by_id.keys()
    if unknown:
        raise IdentityError(f"unknown client id(s) {sorted(unknown)}")
    if not subset:
        return None
    return aggregate([by_id[i] for i in subset], mode)


def leave_one_out(
    updates: Sequence[LocalUpdate],
    excluded_id: int,
    mode: AggregationMode = "fedavg",
) -> np.ndarray:
    """Aggregate of everyone except ``excluded_id``."""
    ids = [u.client_id for u in updates]
    if excluded_id not in ids:
        raise IdentityError(f"client {excluded_id} is not among the updates")
    if len(ids) < 2:
        raise EmptyCoalitionError("leave-one-out needs at least two updates")
    return subset_aggregate(updates, set(ids) - {excluded_id}, mode)
