"""Client-selection strategies.

Each strategy is a :class:`Selector`. The orchestrator calls :meth:`Selector.select`
once per round and then :meth:`Selector.observe` with whatever feedback the
strategy asked for (Shapley values for SVB, local-model accuracy for TiFL).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from fedsim.distributions import (
    ClassDistribution,
    ClientProfile,
    accumulate_current,
    aggregate_global,
    choose_ref_class,
    size_scaled_emd,
)
from fedsim.errors import ConfigurationError, ScenarioError
from fedsim.sampler import sample_without_replacement

__all__ = [
    "Selection",
    "Selector",
    "RandomSelector",
    "FedEMDSelector",
    "SVBSelector",
    "TiFLSelector",
    "FedFastSelector",
    "FixedSelector",
    "STRATEGIES",
    "make_selector",
    "softmax",
    "fedemd_logits",
    "fedemd_probabilities",
    "select_random",
    "select_fixed",
    "farthest_point_kmeans",
    "DEFAULT_ALPHA",
    "DEFAULT_BETA",
    "DEFAULT_TIER_PROBS",
]

DEFAULT_ALPHA = 0.15
DEFAULT_BETA = 0.0015
DEFAULT_TIER_PROBS = (0.35, 0.25, 0.2, 0.12, 0.08)


@dataclass(frozen=True)
class Selection:
    ids: np.ndarray
    probabilities: Optional[np.ndarray] = None


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def fedemd_logits(emd_global, emd_current, t: int, alpha: float, beta: float) -> np.ndarray:
    return alpha * np.asarray(emd_global, dtype=float) - t * beta * np.asarray(emd_current, dtype=float)


def fedemd_probabilities(
    profiles: Sequence[ClientProfile],
    d_global: ClassDistribution,
    d_current: ClassDistribution,
    t: int,
    alpha: float,
    beta: float,
    ref_class: int,
) -> np.ndarray:
    """``softmax(alpha * emd_g - t * beta * emd_c)`` with size-scaled EMD vectors."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    emd_g = size_scaled_emd(profiles, d_global, ref_class)
    emd_c = size_scaled_emd(profiles, d_current, ref_class)
    return softmax(fedemd_logits(emd_g, emd_c, t, alpha, beta))


def select_random(num_clients: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 < k <= num_clients:
        raise ScenarioError(f"cannot select {k} of {num_clients} clients")
    return np.sort(rng.choice(num_clients, size=k, replace=False))


def select_fixed(
    policy: str,
    maverick_ids: Sequence[int],
    num_clients: int,
    k: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``mav-always``: every Maverick plus uniform others; ``mav-never``: non-Mavericks only."""
    mav = sorted(set(int(i) for i in maverick_ids))
    others = np.array([i for i in range(num_clients) if i not in mav], dtype=np.int64)
    if policy == "mav-always":
        if len(mav) > k or len(others) < k - len(mav):
            raise ScenarioError(f"mav-always cannot fit {len(mav)} Mavericks into {k} slots")
        rest = rng.choice(others, size=k - len(mav), replace=False)
        return np.sort(np.concatenate([np.array(mav, dtype=np.int64), rest]))
    if policy == "mav-never":
        if len(others) < k:
            raise ScenarioError(f"mav-never needs {k} non-Mavericks, only {len(others)} exist")
        return np.sort(rng.choice(others, size=k, replace=False))
    raise ScenarioError(f"unknown fixed policy {policy!r}")


class Selector:
    """Base class. Subclasses implement :meth:`select`."""

    name = "base"
    needs_shapley = False
    needs_local_accuracy = False

    def __init__(self, num_clients: int, k: int, rng: np.random.Generator):
        if not 0 < k <= num_clients:
            raise ConfigurationError(f"need 0 < K <= N, got K={k}, N={num_clients}", "K")
        self.num_clients = num_clients
        self.k = k
        self.rng = rng

    def select(self, t: int) -> Selection:
        raise NotImplementedError

    def observe(
        self,
        t: int,
        selected: Sequence[int],
        sv: Optional[Sequence[float]] = None,
        local_accuracy: Optional[Mapping[int, float]] = None,
    ) -> None:
        pass

    def params(self) -> dict:
        return {}


class RandomSelector(Selector):
    name = "random"

    def select(self, t):
        return Selection(select_random(self.num_clients, self.k, self.rng))


class FixedSelector(Selector):
    def __init__(self, policy: str, maverick_ids: Sequence[int], num_clients, k, rng):
        super().__init__(num_clients, k, rng)
        self.name = policy
        self.maverick_ids = tuple(maverick_ids)
        # fail at construction rather than in round 1
        select_fixed(policy, self.maverick_ids, num_clients, k, np.random.default_rng(0))

    def select(self, t):
        return Selection(select_fixed(self.name, self.maverick_ids, self.num_clients, self.k, self.rng))


class FedEMDSelector(Selector):
    """Distribution-aware selection: favour skewed, large clients early and damp
    them as the accumulated selection drifts towards their classes."""

    name = "fedemd"

    def __init__(
        self,
        profiles: Sequence[ClientProfile],
        k: int,
        rng: np.random.Generator,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
        ref_class: Optional[int] = None,
    ):
        super().__init__(len(profiles), k, rng)
        if alpha < 0 or beta < 0:
            raise ConfigurationError("alpha and beta must be non-negative", "alpha/beta")
        self.profiles = list(profiles)
        self.alpha = alpha
        self.beta = beta
        self.ref_class = choose_ref_class(self.profiles) if ref_class is None else ref_class
        self.d_global = aggregate_global(self.profiles)
        self.d_current = ClassDistribution.zeros(self.d_global.num_classes)
        self.emd_global = size_scaled_emd(self.profiles, self.d_global, self.ref_class)
        self.emd_current = size_scaled_emd(self.profiles, self.d_current, self.ref_class)
        self.proba = np.full(self.num_clients, 1.0 / self.num_clients)
        self.history: list[np.ndarray] = []

    def select(self, t):
        snapshot = self.proba.copy()
        ids = sample_without_replacement(self.proba, self.k, self.rng)
        self.history.append(ids)
        self.d_current = accumulate_current(self.d_current, [self.profiles[i] for i in ids])
        self.emd_current = size_scaled_emd(self.profiles, self.d_current, self.ref_class)
        self.proba = softmax(fedemd_logits(self.emd_global, self.emd_current, t, self.alpha, self.beta))
        return Selection(ids, snapshot)

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta, "ref_class": self.ref_class}


class SVBSelector(Selector):
    """Weighted selection by a moving average of each client's measured Shapley value."""

    name = "svb"
    needs_shapley = True

    def __init__(self, num_clients, k, rng, gamma: float = 0.5, epsilon: float = 1e-3):
        super().__init__(num_clients, k, rng)
        if not 0 < gamma <= 1 or epsilon <= 0:
            raise ConfigurationError("need 0 < gamma <= 1 and epsilon > 0", "gamma/epsilon")
        self.gamma = gamma
        self.epsilon = epsilon
        self.estimates = np.full(num_clients, 1.0 / num_clients)

    def weights(self) -> np.ndarray:
        return np.maximum(self.estimates, self.epsilon)

    def select(self, t):
        w = self.weights()
        return Selection(sample_without_replacement(w, self.k, self.rng), w / w.sum())

    def observe(self, t, selected, sv=None, local_accuracy=None):
        if sv is None:
            return
        for i, value in zip(selected, sv):
            self.estimates[i] = (1 - self.gamma) * self.estimates[i] + self.gamma * value

    def params(self):
        return {"gamma": self.gamma, "epsilon": self.epsilon}


class TiFLSelector(Selector):
    """Tiered selection that prefers clients whose local models scored lowest."""

    name = "tifl"
    needs_local_accuracy = True

    def __init__(self, num_clients, k, rng, tier_probs: Sequence[float] = DEFAULT_TIER_PROBS):
        super().__init__(num_clients, k, rng)
        probs = np.asarray(tier_probs, dtype=float)
        if probs.ndim != 1 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ConfigurationError("must be a probability vector", "tier_probs")
        self.tier_probs = probs / probs.sum()
        self.accuracy = np.full(num_clients, np.nan)

    def tiers(self, tiebreak: Optional[np.ndarray] = None) -> list[np.ndarray]:
        """Client ids split into tiers, lowest known accuracy first (unknown counts as 0).

        Equal accuracies are ordered by ``tiebreak`` (client id when omitted).
        """
        acc = np.nan_to_num(self.accuracy, nan=0.0)
        if tiebreak is None:
            tiebreak = np.arange(self.num_clients)
        order = np.lexsort((tiebreak, acc))
        return np.array_split(order, len(self.tier_probs))

    def draw_tier(self) -> int:
        return int(self.rng.choice(len(self.tier_probs), p=self.tier_probs))

    def select(self, t):
        # random tie-break, so clients with equal (or unknown) accuracy share tiers fairly
        tiers = self.tiers(self.rng.permutation(self.num_clients))
        tier = self.draw_tier()
        visit = sorted(range(len(tiers)), key=lambda i: (abs(i - tier), i))
        chosen: list[int] = []
        for i in visit:
            need = self.k - len(chosen)
            if need == 0:
                break
            members = tiers[i]
            if members.size:
                take = self.rng.choice(members, size=min(need, members.size), replace=False)
                chosen.extend(int(c) for c in take)
        return Selection(np.sort(np.array(chosen, dtype=np.int64)))

    def observe(self, t, selected, sv=None, local_accuracy=None):
        if local_accuracy:
            for i, acc in local_accuracy.items():
                self.accuracy[i] = acc

    def params(self):
        return {"tier_probs": self.tier_probs.tolist()}


def farthest_point_kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Lloyd's k-means seeded by farthest-point traversal. Returns cluster labels.

    The first centre is a seeded random point; each further centre is the point
    farthest from the centres so far (lowest index on ties). Empty clusters
    keep their centre.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    first = int(rng.integers(n))
    centres = [points[first]]
    dist = np.linalg.norm(points - centres[0], axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        centres.append(points[nxt])
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    centres = np.array(centres)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d = np.linalg.norm(points[:, None, :] - centres[None, :, :], axis=2)
        labels = np.argmin(d, axis=1)
        moved = centres.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                moved[c] = members.mean(axis=0)
        shift = np.max(np.linalg.norm(moved - centres, axis=1))
        centres = moved
        if shift < tol:
            break
    return labels


class FedFastSelector(Selector):
    """One client per k-means cluster of the clients' class distributions."""

    name = "fedfast"

    def __init__(self, profiles: Sequence[ClientProfile], k, rng):
        super().__init__(len(profiles), k, rng)
        points = np.array([p.distribution.prob() for p in profiles])
        self.labels = farthest_point_kmeans(points, k, rng)

    def select(self, t):
        chosen = []
        for c in range(self.k):
            members = np.flatnonzero(self.labels == c)
            if members.size:
                chosen.append(int(self.rng.choice(members)))
        if len(chosen) < self.k:
            rest = np.setdiff1d(np.arange(self.num_clients), chosen)
            chosen.extend(int(i) for i in self.rng.choice(rest, size=self.k - len(chosen), replace=False))
        return Selection(np.sort(np.array(chosen, dtype=np.int64)))


STRATEGIES = (
    "random", "fedemd", "svb", "tifl", "fedfast", "fedprox",
    "mav-always", "mav-never", "mav-random",
)


def make_selector(
    strategy: str,
    profiles: Sequence[ClientProfile],
    k: int,
    rng: np.random.Generator,
    maverick_ids: Sequence[int] = (),
    **params,
) -> Selector:
    """Build a selector by name. ``params`` are strategy hyperparameters."""
    n = len(profiles)
    allowed = {
        "fedemd": {"alpha", "beta", "ref_class"},
        "svb": {"gamma", "epsilon"},
        "tifl": {"tier_probs"},
    }.get(strategy, set())
    extra = set(params) - allowed
    if extra:
        raise ConfigurationError(f"not a parameter of strategy {strategy!r}", sorted(extra)[0])
    if strategy in ("random", "mav-random", "fedprox"):
        sel = RandomSelector(n, k, rng)
        sel.name = strategy
        return sel
    if strategy == "fedemd":
        return FedEMDSelector(profiles, k, rng, **params)
    if strategy == "svb":
        return SVBSelector(n, k, rng, **params)
    if strategy == "tifl":
        return TiFLSelector(n, k, rng, **params)
    if strategy == "fedfast":
        return FedFastSelector(profiles, k, rng)
    if strategy in ("mav-always", "mav-never"):
        return FixedSelector(strategy, maverick_ids, n, k, rng)
    raise ConfigurationError(f"unknown strategy {strategy!r}", "strategy")
