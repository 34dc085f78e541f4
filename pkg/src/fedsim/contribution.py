"""Contribution measurement for the clients selected in one round.

Values are federator losses, so lower is better. Contributions are reported as
loss *reductions*: a helpful client has a positive influence and Shapley value.

Coalitions are encoded as bit masks over the positions of the updates sorted
by client id; ``values[mask]`` is the loss of the model aggregated from that
coalition, and ``values[0]`` is the loss of the previous global model.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial
from typing import Callable, Optional, Sequence

import numpy as np

from fedsim.aggregation import AggregationMode, LocalUpdate, aggregate, leave_one_out, subset_aggregate
from fedsim.errors import CoalitionSizeError, EmptyCoalitionError, IdentityError
from fedsim.learner import evaluate
from fedsim.partition import LabeledDataset

__all__ = [
    "MAX_EXACT_PLAYERS",
    "ContributionRecord",
    "coalition_values",
    "shapley_from_values",
    "shapley",
    "influence",
    "relative_contribution",
    "data_ratio",
    "fairness_client",
    "fairness_system",
    "sv_difference_rhs",
    "sv_identity_residual",
    "sv_identity_residual_from_values",
]

MAX_EXACT_PLAYERS = 15

LossFn = Callable[[np.ndarray], float]


def _default_loss(eval_set: LabeledDataset) -> LossFn:
    return lambda params: evaluate(params, eval_set).loss


def coalition_values(
    updates: Sequence[LocalUpdate],
    eval_set: Optional[LabeledDataset],
    base_params: np.ndarray,
    mode: AggregationMode = "fedavg",
    loss_fn: Optional[LossFn] = None,
    workers: int = 1,
) -> np.ndarray:
    """Loss of every coalition of ``updates``, indexed by bit mask (length ``2**K``)."""
    ordered = sorted(updates, key=lambda u: u.client_id)
    k = len(ordered)
    if not 1 <= k <= MAX_EXACT_PLAYERS:
        raise CoalitionSizeError(f"exact enumeration supports 1..{MAX_EXACT_PLAYERS} clients, got {k}")
    loss = loss_fn or _default_loss(eval_set)
    ids = [u.client_id for u in ordered]

    def value(mask: int) -> float:
        members = [ids[i] for i in range(k) if mask >> i & 1]
        params = subset_aggregate(ordered, members, mode)
        return float(loss(base_params if params is None else params))

    masks = range(1 << k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(value, masks))
    else:
        out = [value(m) for m in masks]
    return np.array(out)


def _weights(k: int) -> np.ndarray:
    # weight of a coalition of size s that excludes the player: s!(k-s-1)!/k!
    return np.array([factorial(s) * factorial(k - s - 1) / factorial(k) for s in range(k)])


def shapley_from_values(values: Sequence[float], num_players: int) -> np.ndarray:
    """Exact Shapley values of the loss-reduction game defined by ``values``."""
    values = np.asarray(values, dtype=float)
    k = num_players
    if values.shape != (1 << k,):
        raise ValueError(f"expected {1 << k} coalition values, got {values.shape}")
    w = _weights(k)
    sv = np.zeros(k)
    for mask in range(1 << k):
        size = bin(mask).count("1")
        for i in range(k):
            if not mask >> i & 1:
                sv[i] += w[size] * (values[mask] - values[mask | 1 << i])
    return sv


def shapley(
    updates: Sequence[LocalUpdate],
    eval_set: Optional[LabeledDataset],
    base_params: np.ndarray,
    mode: AggregationMode = "fedavg",
    loss_fn: Optional[LossFn] = None,
    workers: int = 1,
) -> np.ndarray:
    """Shapley value of each update, in ascending client-id order."""
    v = coalition_values(updates, eval_set, base_params, mode, loss_fn, workers)
    return shapley_from_values(v, len(updates))


def influence(
    updates: Sequence[LocalUpdate],
    k: int,
    eval_set: Optional[LabeledDataset],
    mode: AggregationMode = "fedavg",
    loss_fn: Optional[LossFn] = None,
) -> float:
    """Leave-one-out influence of client ``k``: loss without it minus loss with everyone."""
    loss = loss_fn or _default_loss(eval_set)
    return float(loss(leave_one_out(updates, k, mode)) - loss(aggregate(updates, mode)))


def relative_contribution(sv: Sequence[float]) -> np.ndarray:
    """Project contributions onto the simplex: clamp negatives to 0 and renormalise.

    All-nonpositive input maps to the uniform vector.
    """
    sv = np.asarray(sv, dtype=float)
    if sv.size == 0:
        raise ValueError("empty contribution vector")
    pos = np.maximum(sv, 0.0)
    total = pos.sum()
    if total <= 0:
        return np.full(sv.size, 1.0 / sv.size)
    return pos / total


def data_ratio(sizes: Sequence[int]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    return sizes / sizes.sum()


def fairness_client(q: float, rc: float) -> float:
    return 1.0 - abs(q - rc)


@dataclass(frozen=True)
class ContributionRecord:
    """Contribution bookkeeping of one round, one entry per selected client."""

    round: int
    client_ids: tuple[int, ...]
    sv: np.ndarray
    rc: np.ndarray
    q: np.ndarray
    utility: np.ndarray

    @classmethod
    def from_shapley(cls, t: int, client_ids: Sequence[int], sv, sizes) -> "ContributionRecord":
        rc = relative_contribution(sv)
        q = data_ratio(sizes)
        utility = 1.0 - np.abs(q - rc)
        return cls(t, tuple(int(i) for i in client_ids), np.asarray(sv, dtype=float), rc, q, utility)


def fairness_system(records: Sequence[ContributionRecord], num_selected: Optional[int] = None) -> float:
    """System fairness: one minus the mean ``|q_k - rc_k|`` over all rounds and clients."""
    if not records:
        raise ValueError("no contribution records")
    k = num_selected or len(records[0].q)
    gaps = 0.0
    for r in records:
        if len(r.q) != k:
            raise ValueError(f"round {r.round} has {len(r.q)} entries, expected {k}")
        gaps += float(np.abs(r.q - r.rc).sum())
    return 1.0 - gaps / (len(records) * k)


def sv_difference_rhs(values: Sequence[float], num_players: int, k: int, j: int) -> float:
    """Right-hand side of the SV-difference decomposition for positions ``k`` and ``j``.

    ``SV_k - SV_j`` is rewritten as the singleton term, a sum over coalitions
    holding neither player, and the cross terms where the other player is
    already present. Each term is evaluated from the coalition table directly.
    """
    if k == j:
        raise ValueError("k and j must differ")
    values = np.asarray(values, dtype=float)
    n = num_players
    fk, fj = 1 << k, 1 << j

    def gain(mask: int, bit: int) -> float:
        return values[mask] - values[mask | bit]

    rest = [i for i in range(n) if i not in (k, j)]
    total = factorial(n - 1) * (gain(0, fk) - gain(0, fj))
    for r in range(1 << len(rest)):
        mask = 0
        for pos, i in enumerate(rest):
            if r >> pos & 1:
                mask |= 1 << i
        s = bin(mask).count("1")
        if s:
            total += factorial(s) * factorial(n - s - 1) * (gain(mask, fk) - gain(mask, fj))
        total += factorial(s + 1) * factorial(n - s - 2) * (gain(mask | fj, fk) - gain(mask | fk, fj))
    return total / factorial(n)


def sv_identity_residual_from_values(values: Sequence[float], num_players: int, k: int, j: int) -> float:
    sv = shapley_from_values(values, num_players)
    return abs((sv[k] - sv[j]) - sv_difference_rhs(values, num_players, k, j))


def sv_identity_residual(
    updates: Sequence[LocalUpdate],
    eval_set: Optional[LabeledDataset],
    base_params: np.ndarray,
    k: int,
    j: int,
    mode: AggregationMode = "fedavg",
    loss_fn: Optional[LossFn] = None,
) -> float:
    """``|(SV_k - SV_j) - rhs|`` for client ids ``k`` and ``j``."""
    ids = sorted(u.client_id for u in updates)
    if len(ids) > 10:
        raise CoalitionSizeError("identity check supports at most 10 clients")
    if len(ids) < 2:
        raise EmptyCoalitionError("identity check needs two clients")
    for c in (k, j):
        if c not in ids:
            raise IdentityError(f"client {c} is not among the updates")
    v = coalition_values(updates, eval_set, base_params, mode, loss_fn)
    return sv_identity_residual_from_values(v, len(ids), ids.index(k), ids.index(j))
