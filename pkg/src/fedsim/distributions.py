"""Class-distribution arithmetic used by FedEMD and the partition diagnostics.

A :class:`ClassDistribution` is a vector of per-class sample counts. Distances
are computed between the normalised probability vectors, so two holders with
the same class mix but different data sizes are at distance zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from fedsim.errors import (
    DimensionError,
    EmptyDistributionError,
    EmptyPopulationError,
    ReferenceClassEmptyError,
)

__all__ = [
    "ClassDistribution",
    "ClientProfile",
    "prob",
    "emd",
    "kld",
    "aggregate_global",
    "accumulate_current",
    "size_scaled_emd",
    "choose_ref_class",
]


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class sample counts of one data holder (a client, the population, ...)."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if counts.size and counts.min() < 0:
            raise ValueError("class counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, num_classes: int) -> "ClassDistribution":
        return cls(np.zeros(num_classes, dtype=np.int64))

    @classmethod
    def from_labels(cls, labels: Sequence[int], num_classes: int) -> "ClassDistribution":
        return cls(np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes))

    @property
    def num_classes(self) -> int:
        return int(self.counts.size)

    def total(self) -> int:
        return int(self.counts.sum())

    def prob(self) -> np.ndarray:
        return prob(self)

    def __add__(self, other: "ClassDistribution") -> "ClassDistribution":
        _check_same_length(self.counts, other.counts)
        return ClassDistribution(self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassDistribution):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self) -> int:
        return hash(self.counts.tobytes())


@dataclass(frozen=True)
class ClientProfile:
    """What the federator knows about a client: its class counts and Maverick flag."""

    id: int
    distribution: ClassDistribution
    is_maverick: bool = False

    @property
    def data_size(self) -> int:
        return self.distribution.total()

    @property
    def counts(self) -> np.ndarray:
        return self.distribution.counts


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def prob(d: ClassDistribution) -> np.ndarray:
    """Class probabilities ``counts / total``; the uniform vector when total is 0."""
    c = d.num_classes
    if c == 0:
        raise EmptyDistributionError("distribution has no classes")
    total = d.total()
    if total == 0:
        return np.full(c, 1.0 / c)
    return d.counts / total


def emd(a: ClassDistribution, b: ClassDistribution) -> float:
    """L1 distance between the class-probability vectors of ``a`` and ``b``.

    With the 0/1 ground metric on labels the Kantorovich distance is exactly
    half of this value. The result lies in ``[0, 2]``.
    """
    _check_same_length(a.counts, b.counts)
    return float(np.abs(prob(a) - prob(b)).sum())


def kld(p: Sequence[float], q: Sequence[float]) -> float:
    """Kullback-Leibler divergence ``sum p log(p/q)``; ``math.inf`` if ``p`` is not
    absolutely continuous with respect to ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_same_length(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    value = float(np.sum(p[support] * np.log(p[support] / q[support])))
    # rounding can produce -1e-17 for p == q
    return max(value, 0.0)


def aggregate_global(profiles: Iterable[ClientProfile]) -> ClassDistribution:
    """Population distribution: elementwise sum of all client counts."""
    profiles = list(profiles)
    if not profiles:
        raise EmptyPopulationError("cannot aggregate an empty client population")
    total = profiles[0].counts.copy()
    for p in profiles[1:]:
        _check_same_length(total, p.counts)
        total = total + p.counts
    return ClassDistribution(total)


def accumulate_current(
    dc: ClassDistribution, selected: Iterable[ClientProfile]
) -> ClassDistribution:
    """Return ``dc`` plus the counts of the clients just selected. ``dc`` is not mutated."""
    counts = dc.counts.copy()
    for p in selected:
        _check_same_length(counts, p.counts)
        counts += p.counts
    return ClassDistribution(counts)


def size_scaled_emd(
    profiles: Sequence[ClientProfile],
    reference: ClassDistribution,
    ref_class: int,
) -> np.ndarray:
    """EMD of every client to ``reference``, scaled by the client's relative size.

    Entry ``i`` is ``emd(D_i, reference) * n_i / sigma`` where ``sigma`` is the mean
    per-client population of ``ref_class``. Clients that are both skewed and large
    get the largest scores.
    """
    if not profiles:
        raise EmptyPopulationError("no clients")
    n = len(profiles)
    sigma = sum(int(p.counts[ref_class]) for p in profiles) / n
    if sigma <= 0:
        raise ReferenceClassEmptyError(f"class {ref_class} has no samples in the population")
    out = np.empty(n)
    for i, p in enumerate(profiles):
        out[i] = emd(p.distribution, reference) * (p.data_size / sigma)
    return out


def choose_ref_class(profiles: Sequence[ClientProfile]) -> int:
    """Lowest class index held by at least half of the clients.

    Falls back to the class held by the most clients when no class reaches
    half (many exclusive Mavericks). Never returns a class with zero population.
    """
    if not profiles:
        raise EmptyPopulationError("no clients")
    owners = np.sum([p.counts > 0 for p in profiles], axis=0)
    n = len(profiles)
    candidates = np.flatnonzero(2 * owners >= n)
    if candidates.size:
        return int(candidates[0])
    if owners.max() == 0:
        raise ReferenceClassEmptyError("population holds no samples")
    return int(np.argmax(owners))
