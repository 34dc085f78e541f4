"""The federated round loop and run-level metrics.

``run_simulation`` is a pure function of its config: per-client randomness is
keyed by ``(seed, round, client_id)`` and updates are always combined in
client-id order, so the worker count never changes the result.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from fedsim.aggregation import LocalUpdate, aggregate
from fedsim.config import SimulationConfig, config_digest
from fedsim.contribution import ContributionRecord, coalition_values, fairness_system, shapley_from_values
from fedsim.distributions import ClientProfile
from fedsim.errors import ComparabilityError, FedSimError
from fedsim.learner import Learner, SoftmaxRegression
from fedsim.partition import LabeledDataset, generate_synthetic, load_idx, partition_maverick, train_test_split
from fedsim.selection import make_selector

__all__ = [
    "RunError",
    "Federation",
    "RoundRecord",
    "RunResult",
    "NotReached",
    "ComparisonRow",
    "build_federation",
    "run_simulation",
    "r_at_threshold",
    "compare_runs",
]

log = logging.getLogger(__name__)

_SELECTION_STREAM = 0x5E1EC7


class RunError(FedSimError, RuntimeError):
    """A module failed mid-run; the message names the round and stage."""


@dataclass
class Federation:
    """Everything a run needs that does not change between rounds."""

    train: LabeledDataset
    test: LabeledDataset
    clients: list[LabeledDataset]
    profiles: list[ClientProfile]

    @property
    def maverick_ids(self) -> list[int]:
        return [p.id for p in self.profiles if p.is_maverick]


@dataclass
class RoundRecord:
    t: int
    selected: tuple[int, ...]
    loss: float
    accuracy: float
    per_class_recall: np.ndarray
    contribution: Optional[ContributionRecord] = None
    probabilities: Optional[np.ndarray] = None
    wall_time_ms: float = 0.0


@dataclass
class RunResult:
    config: SimulationConfig
    config_digest: str
    rounds: list[RoundRecord]
    final_params_digest: str
    fairness: Optional[float]
    maverick_ids: list[int]
    num_classes: int
    test_digest: str
    final_params: Optional[np.ndarray] = field(default=None, repr=False)
    strategy_params: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        return self.config.tag

    @property
    def seed(self) -> int:
        return self.config.seed

    def accuracy_series(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.rounds])

    def maverick_recall(self) -> np.ndarray:
        """Recall on the Maverick-owned classes, averaged, per round (NaN without Mavericks)."""
        classes = list(self.config.scenario.owned_classes)
        if not classes:
            return np.full(len(self.rounds), np.nan)
        return np.array([np.nanmean(r.per_class_recall[classes]) for r in self.rounds])


def build_federation(cfg: SimulationConfig) -> Federation:
    """Load or generate data, split off the federator test set and partition the rest."""
    d = cfg.data
    if d.source == "synthetic":
        full = generate_synthetic(d.num_classes, d.dim, d.per_class, d.spread, d.seed)
        train, test = train_test_split(full, cfg.eval_fraction, d.seed)
    else:
        train = load_idx(d.train_images, d.train_labels)
        test = load_idx(d.test_images, d.test_labels, num_classes=train.num_classes)
    clients, profiles = partition_maverick(train, cfg.scenario, cfg.seed)
    for k, ds in enumerate(clients):
        if len(ds) == 0:
            raise FedSimError(f"client {k} received no data; use fewer clients or more samples")
    return Federation(train, test, clients, profiles)


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()


def run_simulation(
    cfg: SimulationConfig,
    workers: int = 1,
    learner: Optional[Learner] = None,
    federation: Optional[Federation] = None,
) -> RunResult:
    """Run ``cfg.rounds`` rounds of select, train, aggregate, evaluate, measure."""
    fed = federation or build_federation(cfg)
    learner = learner or SoftmaxRegression(fed.train.num_classes, fed.train.dim, cfg.learner.init_scale)
    k = cfg.num_selected
    sel_rng = np.random.default_rng([cfg.seed, _SELECTION_STREAM])
    selector = make_selector(
        cfg.strategy, fed.profiles, k, sel_rng, fed.maverick_ids, **cfg.strategy_params
    )
    measure = cfg.shapley_enabled or selector.needs_shapley
    params = learner.init_params(cfg.seed)
    rounds: list[RoundRecord] = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def fmap(fn, items):
        return list(pool.map(fn, items)) if pool else [fn(x) for x in items]

    try:
        for t in range(1, cfg.rounds + 1):
            stage = "selection"
            try:
                start = time.perf_counter()
                selection = selector.select(t)
                ids = [int(i) for i in selection.ids]

                stage = "local training"
                base = params
                local = fmap(
                    lambda i: learner.local_train(base, fed.clients[i], cfg.learner, t, cfg.seed, i), ids
                )
                updates = [LocalUpdate(i, w, len(fed.clients[i])) for i, w in zip(ids, local)]

                stage = "aggregation"
                params = aggregate(updates, cfg.aggregation)

                stage = "evaluation"
                report = learner.evaluate(params, fed.test)
                elapsed = (time.perf_counter() - start) * 1e3

                contribution = None
                sv = None
                if measure:
                    stage = "contribution"
                    values = coalition_values(
                        updates, None, base, cfg.aggregation,
                        loss_fn=lambda w: learner.evaluate(w, fed.test).loss, workers=workers,
                    )
                    sv = shapley_from_values(values, len(updates))
                    contribution = ContributionRecord.from_shapley(
                        t, ids, sv, [u.data_size for u in updates]
                    )
                local_acc = None
                if selector.needs_local_accuracy:
                    stage = "local evaluation"
                    accs = fmap(lambda w: learner.evaluate(w, fed.test).accuracy, local)
                    local_acc = dict(zip(ids, accs))
                stage = "selector update"
                selector.observe(t, ids, sv=sv, local_accuracy=local_acc)
            except FedSimError as exc:
                raise RunError(f"round {t}, stage {stage}: {exc}") from exc
            except (ValueError, ArithmeticError) as exc:
                raise RunError(f"round {t}, stage {stage}: {exc}") from exc

            rounds.append(RoundRecord(
                t=t,
                selected=tuple(ids),
                loss=report.loss,
                accuracy=report.accuracy,
                per_class_recall=report.per_class_recall,
                contribution=contribution,
                probabilities=selection.probabilities,
                wall_time_ms=elapsed,
            ))
            log.debug("round %d selected=%s acc=%.4f loss=%.4f", t, ids, report.accuracy, report.loss)
    finally:
        if pool:
            pool.shutdown()

    records = [r.contribution for r in rounds if r.contribution is not None]
    return RunResult(
        config=cfg,
        config_digest=config_digest(cfg),
        rounds=rounds,
        final_params_digest=_digest(params),
        fairness=fairness_system(records, k) if cfg.shapley_enabled and records else None,
        maverick_ids=fed.maverick_ids,
        num_classes=fed.train.num_classes,
        test_digest=fed.test.digest(),
        final_params=params,
        strategy_params={**selector.params(), **({"prox_mu": cfg.learner.prox_mu} if cfg.learner.prox_mu else {})},
    )


@dataclass(frozen=True)
class NotReached:
    """Threshold not reached within ``horizon`` rounds; renders as ``>R``."""

    horizon: int

    def __str__(self) -> str:
        return f">{self.horizon}"


def r_at_threshold(series: Sequence[float], reference, fraction: float = 0.99):
    """First round (1-based) at which ``series`` reaches ``fraction`` of the
    reference run's best accuracy, or :class:`NotReached`.

    ``reference`` may be a :class:`RunResult` or a plain accuracy sequence.
    """
    ref = reference.accuracy_series() if isinstance(reference, RunResult) else np.asarray(reference, float)
    if ref.size == 0:
        raise ValueError("reference series is empty")
    threshold = fraction * float(np.max(ref))
    series = np.asarray(series, dtype=float)
    hits = np.flatnonzero(series >= threshold)
    if hits.size == 0:
        return NotReached(len(series))
    return int(hits[0]) + 1


@dataclass
class ComparisonRow:
    tag: str
    runs: int
    r_at_99: object  # float mean over reached replicates, or NotReached
    r_at_99_per_seed: list
    any_not_reached: bool
    final_accuracy: float
    final_maverick_recall: float
    fairness: Optional[float]
    wall_time_ms: float

    def r_at_99_text(self) -> str:
        if isinstance(self.r_at_99, NotReached):
            return str(self.r_at_99)
        text = f"{self.r_at_99:.1f}"
        return text + "*" if self.any_not_reached else text


def compare_runs(results: Sequence[RunResult], reference_tag: str = "random") -> list[ComparisonRow]:
    """Summarise runs per tag against the reference tag, matching replicates by seed.

    R@99 of a tag is the mean over replicates that reached the threshold; the
    row is flagged when some replicate did not.
    """
    if not results:
        raise ComparabilityError("no runs to compare")
    first = results[0]
    for r in results[1:]:
        if r.num_classes != first.num_classes or r.test_digest != first.test_digest:
            raise ComparabilityError(
                f"run {r.tag} (seed {r.seed}) used a different test set or class count"
            )
    refs = {r.seed: r for r in results if r.tag == reference_tag}
    if not refs:
        raise ComparabilityError(f"no reference run tagged {reference_tag!r}")

    groups: dict[str, list[RunResult]] = {}
    for r in results:
        groups.setdefault(r.tag, []).append(r)

    rows = []
    for tag, runs in groups.items():
        per_seed = []
        for r in sorted(runs, key=lambda r: r.seed):
            if r.seed not in refs:
                raise ComparabilityError(f"no {reference_tag!r} run with seed {r.seed}")
            per_seed.append(r_at_threshold(r.accuracy_series(), refs[r.seed]))
        reached = [v for v in per_seed if not isinstance(v, NotReached)]
        if reached:
            r99 = float(np.mean(reached))
        else:
            r99 = NotReached(max(len(r.rounds) for r in runs))
        fair = [r.fairness for r in runs if r.fairness is not None]
        mav = [r.maverick_recall()[-1] for r in runs]
        rows.append(ComparisonRow(
            tag=tag,
            runs=len(runs),
            r_at_99=r99,
            r_at_99_per_seed=per_seed,
            any_not_reached=len(reached) < len(per_seed),
            final_accuracy=float(np.mean([r.rounds[-1].accuracy for r in runs])),
            final_maverick_recall=float(np.mean(mav)) if not all(math.isnan(m) for m in mav) else math.nan,
            fairness=float(np.mean(fair)) if fair else None,
            wall_time_ms=float(np.mean([np.mean([x.wall_time_ms for x in r.rounds]) for r in runs])),
        ))
    return rows
