"""Self-checks that back the numerical claims of the library.

Each check draws its own random instances from a seeded generator and returns
a :class:`CheckResult`; :func:`run_checks` runs them all. The same functions
back the acceptance tests and the ``fedsim verify`` command.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from fedsim.contribution import shapley_from_values, sv_difference_rhs
from fedsim.distributions import ClassDistribution, emd, kld
from fedsim.learner import loss_and_gradient
from fedsim.partition import LabeledDataset
from fedsim.sampler import sample_without_replacement

__all__ = [
    "CheckResult",
    "shapley_permutation_oracle",
    "ares_pair_probability",
    "gradient_relative_error",
    "check_gradient",
    "check_shapley",
    "check_sv_identity",
    "check_sampler",
    "check_emd_metric",
    "check_kld",
    "run_checks",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    witness: Optional[str] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.detail}"
        return text if self.passed or not self.witness else f"{text} [witness: {self.witness}]"


# -- oracles ------------------------------------------------------------------

def shapley_permutation_oracle(values: np.ndarray, num_players: int) -> np.ndarray:
    """Average marginal loss reduction over all join orders (factorial cost)."""
    sv = np.zeros(num_players)
    perms = list(itertools.permutations(range(num_players)))
    for order in perms:
        mask = 0
        for i in order:
            sv[i] += values[mask] - values[mask | 1 << i]
            mask |= 1 << i
    return sv / len(perms)


def ares_pair_probability(weights, i: int, j: int) -> float:
    """P(A-Res keeps exactly {i, j}) for K = 2, by integrating over the largest rival key.

    Key ``l`` has CDF ``x ** w_l`` on [0, 1], so the best rival key has CDF
    ``m ** W`` with ``W`` the rivals' total weight.
    """
    w = np.asarray(weights, dtype=float)
    rivals = float(w.sum() - w[i] - w[j])
    if rivals == 0:
        return 1.0

    def integrand(m: float) -> float:
        return rivals * m ** (rivals - 1) * (1 - m ** w[i]) * (1 - m ** w[j])

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return value


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|)``, guarded against all-zero gradients."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _central_difference(f: Callable[[np.ndarray], float], w: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        step = np.zeros_like(w)
        step[idx] = h
        g[idx] = (f(w + step) - f(w - step)) / (2 * h)
    return g


# -- checks -------------------------------------------------------------------

def check_gradient(
    rng: np.random.Generator,
    instances: int = 100,
    tol: float = 1e-5,
    corrupt: bool = False,
) -> CheckResult:
    """Analytic cross-entropy (+ proximal) gradients against central differences."""
    worst, witness = 0.0, ""
    for n in range(instances):
        c, d, m = int(rng.integers(2, 6)), int(rng.integers(1, 7)), int(rng.integers(1, 9))
        batch = LabeledDataset(rng.normal(size=(m, d)), rng.integers(0, c, size=m), c)
        w = rng.normal(size=(c, d + 1))
        mu = float(rng.uniform(0.01, 1.0)) if n % 2 else 0.0
        center = rng.normal(size=w.shape) if mu else None
        _, grad = loss_and_gradient(w, batch, center, mu)
        if corrupt:
            grad = grad + 1e-3
        num = _central_difference(lambda p: loss_and_gradient(p, batch, center, mu)[0], w, 1e-5)
        err = gradient_relative_error(grad, num)
        if err > worst:
            worst, witness = err, f"C={c} d={d} batch={m} mu={mu:.3g}"
    return CheckResult(
        "gradient", worst < tol, f"max relative error {worst:.2e} over {instances} instances (< {tol:g})", witness
    )


def check_shapley(rng: np.random.Generator, instances: int = 50, tol: float = 1e-9) -> CheckResult:
    """Subset formula vs permutation oracle, plus efficiency, symmetry and dummy axioms."""
    worst, witness = 0.0, ""

    def note(err: float, what: str):
        nonlocal worst, witness
        if err > worst:
            worst, witness = err, what

    for n in range(instances):
        k = 1 + n % 5
        v = rng.normal(size=1 << k)
        sv = shapley_from_values(v, k)
        note(float(np.max(np.abs(sv - shapley_permutation_oracle(v, k)))), f"oracle K={k}")
        note(abs(sv.sum() - (v[0] - v[-1])), f"efficiency K={k}")

        # dummy: player 0 never changes the value
        dummy = v.copy()
        for mask in range(1 << k):
            dummy[mask] = v[mask & ~1]
        note(abs(shapley_from_values(dummy, k)[0]), f"dummy K={k}")

        if k >= 2:
            # symmetry: values invariant under swapping players 0 and 1
            sym = v.copy()
            for mask in range(1 << k):
                b0, b1 = mask & 1, mask >> 1 & 1
                swapped = (mask & ~3) | (b0 << 1) | b1
                sym[mask] = 0.5 * (v[mask] + v[swapped])
            s = shapley_from_values(sym, k)
            note(abs(s[0] - s[1]), f"symmetry K={k}")
    return CheckResult(
        "shapley", worst < tol, f"max deviation {worst:.2e} over {instances} instances (< {tol:g})", witness
    )


def check_sv_identity(rng: np.random.Generator, instances: int = 20, tol: float = 1e-9) -> CheckResult:
    """SV-difference decomposition residual over all ordered pairs."""
    worst, witness = 0.0, ""
    for n in range(instances):
        k = 2 + n % 4
        v = rng.normal(size=1 << k)
        sv = shapley_from_values(v, k)
        for a, b in itertools.permutations(range(k), 2):
            res = abs((sv[a] - sv[b]) - sv_difference_rhs(v, k, a, b))
            if res > worst:
                worst, witness = res, f"K={k} pair=({a},{b})"
    return CheckResult(
        "sv_identity",
        worst < tol,
        f"worst residual {worst:.2e} over {instances} instances, all pairs (< {tol:g})",
        witness,
    )


def check_sampler(
    rng: np.random.Generator,
    trials: int = 100_000,
    alpha: float = 0.01,
    weights=(0.1, 0.2, 0.3, 0.4),
) -> CheckResult:
    """Chi-square goodness of fit of A-Res draws: pairs for K=2 and singletons for K=1."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    pairs = list(itertools.combinations(range(n), 2))
    expected_pairs = np.array([ares_pair_probability(w, i, j) for i, j in pairs])
    index = {p: q for q, p in enumerate(pairs)}
    counts = np.zeros(len(pairs))
    for _ in range(trials):
        a, b = sample_without_replacement(w, 2, rng)
        counts[index[(int(a), int(b))]] += 1
    p2 = stats.chisquare(counts, expected_pairs / expected_pairs.sum() * trials).pvalue

    singles = np.zeros(n)
    for _ in range(trials):
        singles[sample_without_replacement(w, 1, rng)[0]] += 1
    p1 = stats.chisquare(singles, w / w.sum() * trials).pvalue

    ok = p2 > alpha and p1 > alpha
    return CheckResult(
        "sampler",
        ok,
        f"chi-square p-values K=2: {p2:.3f}, K=1: {p1:.3f} ({trials} trials each, alpha {alpha:g})",
        None if ok else f"weights={w.tolist()}",
    )


def check_emd_metric(rng: np.random.Generator, instances: int = 200, tol: float = 1e-12) -> CheckResult:
    failures = []
    for _ in range(instances):
        c = int(rng.integers(1, 8))
        a, b, z = (ClassDistribution(rng.integers(0, 20, size=c)) for _ in range(3))
        ab, ba = emd(a, b), emd(b, a)
        if ab < 0 or abs(ab - ba) > tol or ab > 2 + tol:
            failures.append(f"range/symmetry {a.counts.tolist()} {b.counts.tolist()}")
        if emd(a, a) != 0.0:
            failures.append(f"identity {a.counts.tolist()}")
        if ab > emd(a, z) + emd(z, b) + tol:
            failures.append(f"triangle {a.counts.tolist()} {b.counts.tolist()} {z.counts.tolist()}")
        if ab == 0.0 and not np.allclose(a.prob(), b.prob()):
            failures.append(f"indiscernibles {a.counts.tolist()} {b.counts.tolist()}")
    return CheckResult(
        "emd_metric",
        not failures,
        f"{instances} random triples, {len(failures)} violations",
        failures[0] if failures else None,
    )


def check_kld(rng: np.random.Generator, instances: int = 200) -> CheckResult:
    failures = []
    for _ in range(instances):
        c = int(rng.integers(1, 8))
        p = rng.dirichlet(np.ones(c))
        q = rng.dirichlet(np.ones(c))
        if kld(p, q) < 0:
            failures.append(f"negative {p.tolist()} {q.tolist()}")
        if abs(kld(p, p)) > 1e-12:
            failures.append(f"self {p.tolist()}")
    return CheckResult(
        "kld_gibbs",
        not failures,
        f"{instances} random pairs, {len(failures)} violations",
        failures[0] if failures else None,
    )


def run_checks(seed: int = 0, corrupt_gradient: bool = False, sampler_trials: int = 100_000) -> list[CheckResult]:
    """Run every check with generators derived from ``seed``."""
    streams = np.random.SeedSequence(seed).spawn(6)
    rngs = [np.random.default_rng(s) for s in streams]
    return [
        check_gradient(rngs[0], corrupt=corrupt_gradient),
        check_shapley(rngs[1]),
        check_sv_identity(rngs[2]),
        check_sampler(rngs[3], trials=sampler_trials),
        check_emd_metric(rngs[4]),
        check_kld(rngs[5]),
    ]
