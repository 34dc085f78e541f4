from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fedsim.distributions import ClassDistribution, ClientProfile, aggregate_global, choose_ref_class
from fedsim.errors import ConfigurationError, ScenarioError
from fedsim.orchestrator import build_federation
from fedsim.scenarios import desk_config
from fedsim.selection import (
    STRATEGIES,
    FedEMDSelector,
    FedFastSelector,
    RandomSelector,
    SVBSelector,
    TiFLSelector,
    farthest_point_kmeans,
    fedemd_logits,
    fedemd_probabilities,
    make_selector,
    select_fixed,
    select_random,
    softmax,
)

TRIALS = 100_000


def rng(seed=0):
    return np.random.default_rng(seed)


def maverick_profiles(n=10, c=4, per=30):
    """Client 0 owns all of class 0; everyone else splits the other classes."""
    profiles = [ClientProfile(0, ClassDistribution([per * (n - 1)] + [0] * (c - 1)), True)]
    profiles += [ClientProfile(i, ClassDistribution([0] + [per] * (c - 1))) for i in range(1, n)]
    return profiles


def frequencies(selector, rounds):
    hits = np.zeros(selector.num_clients)
    for t in range(1, rounds + 1):
        hits[selector.select(t).ids] += 1
    return hits / rounds


class TestFedEMDProbabilities:
    def test_hand_example(self):
        logits = fedemd_logits([2, 1], [1, 2], 1, 1.0, 0.5)
        np.testing.assert_allclose(logits, [1.5, 0.0])
        np.testing.assert_allclose(softmax(logits), [0.8176, 0.1824], atol=5e-5)

    def test_zero_coefficients_uniform(self):
        p = maverick_profiles()
        d = aggregate_global(p)
        np.testing.assert_allclose(fedemd_probabilities(p, d, d, 3, 0.0, 0.0, 1), 0.1)

    @given(st.floats(0.01, 5.0))
    def test_maverick_is_argmax_at_first_round(self, alpha):
        p = maverick_profiles()
        probs = fedemd_probabilities(p, aggregate_global(p), ClassDistribution.zeros(4), 1, alpha, 0.0, 1)
        assert np.argmax(probs) == 0 and probs[0] > np.sort(probs)[-2]

    def test_maverick_is_argmax_in_desk_federation(self):
        fed = build_federation(desk_config())
        probs = fedemd_probabilities(
            fed.profiles, aggregate_global(fed.profiles), ClassDistribution.zeros(4), 1, 0.15, 0.0,
            choose_ref_class(fed.profiles),
        )
        assert probs[0] > np.delete(probs, 0).max()

    def test_rounds_start_at_one(self):
        p = maverick_profiles()
        with pytest.raises(ValueError):
            fedemd_probabilities(p, aggregate_global(p), aggregate_global(p), 0, 1.0, 1.0, 1)

    def test_softmax_is_stable(self):
        np.testing.assert_allclose(softmax([1000.0, 1000.0]), [0.5, 0.5])


class TestFedEMDSelector:
    def test_state_invariants(self):
        profiles = maverick_profiles()
        sel = FedEMDSelector(profiles, 3, rng(1), alpha=0.5, beta=0.05)
        for t in range(1, 30):
            snap = sel.select(t)
            assert len(set(snap.ids.tolist())) == 3
            assert np.all(snap.probabilities > 0) and abs(snap.probabilities.sum() - 1) < 1e-9
            resum = sum((profiles[i].distribution for ids in sel.history for i in ids), ClassDistribution.zeros(4))
            assert sel.d_current == resum
            assert sel.d_current.total() == sum(profiles[i].data_size for ids in sel.history for i in ids)

    def test_first_round_is_uniform(self):
        sel = FedEMDSelector(maverick_profiles(), 2, rng(2))
        np.testing.assert_allclose(sel.select(1).probabilities, 0.1)

    def test_first_round_matches_random_statistically(self):
        hits = np.zeros(10)
        for s in range(4000):
            hits[FedEMDSelector(maverick_profiles(), 3, rng(s)).select(1).ids] += 1
        assert stats.chisquare(hits).pvalue > 0.01

    def test_maverick_damped_over_time(self):
        # with a strong current-distance weight the Maverick fades once it has been picked
        early = late = 0
        for s in range(20):
            sel = FedEMDSelector(maverick_profiles(), 3, rng(s), alpha=0.15, beta=0.05)
            picks = [0 in sel.select(t).ids for t in range(1, 61)]
            early += sum(picks[:12])
            late += sum(picks[48:])
        assert early > late

    def test_params_reported(self):
        sel = FedEMDSelector(maverick_profiles(), 2, rng(), alpha=0.2, beta=0.01)
        assert sel.params() == {"alpha": 0.2, "beta": 0.01, "ref_class": 1}

    def test_negative_coefficients_rejected(self):
        with pytest.raises(ConfigurationError):
            FedEMDSelector(maverick_profiles(), 2, rng(), alpha=-1)


class TestRandom:
    def test_k_equals_n(self):
        np.testing.assert_array_equal(select_random(4, 4, rng()), [0, 1, 2, 3])

    def test_uniform_frequencies(self):
        r = rng(3)
        hits = np.zeros(10)
        for _ in range(TRIALS):
            hits[select_random(10, 3, r)] += 1
        assert np.allclose(hits / TRIALS, 0.3, atol=0.01)
        assert stats.chisquare(hits).pvalue > 0.01

    def test_infeasible(self):
        with pytest.raises(ScenarioError):
            select_random(3, 4, rng())


class TestFixed:
    def test_always_and_never(self):
        r = rng(4)
        for _ in range(200):
            assert 0 in select_fixed("mav-always", [0], 50, 5, r)
            assert 0 not in select_fixed("mav-never", [0], 50, 5, r)

    def test_always_remainder_uniform(self):
        r = rng(5)
        n, k = 10, 3
        hits = np.zeros(n)
        for _ in range(TRIALS):
            hits[select_fixed("mav-always", [0], n, k, r)] += 1
        np.testing.assert_allclose(hits[1:] / TRIALS, (k - 1) / (n - 1), atol=0.01)
        assert stats.chisquare(hits[1:]).pvalue > 0.01

    def test_infeasible(self):
        with pytest.raises(ScenarioError):
            select_fixed("mav-always", [0, 1, 2], 10, 2, rng())
        with pytest.raises(ScenarioError):
            select_fixed("mav-never", [0, 1], 3, 2, rng())
        with pytest.raises(ScenarioError):
            select_fixed("mav-sometimes", [0], 3, 1, rng())


class TestSVB:
    def test_equal_estimates_uniform(self):
        hits = frequencies(SVBSelector(6, 2, rng(6)), 30_000)
        np.testing.assert_allclose(hits, 2 / 6, atol=0.015)

    def test_dominant_estimate(self):
        n = 5
        sel = SVBSelector(n, 1, rng(7))
        sel.estimates = np.full(n, 0.1)
        sel.estimates[2] = 1.0
        freq = frequencies(sel, TRIALS)
        assert abs(freq[2] - 10 / (10 + n - 1)) < 0.01

    def test_ema_update_and_floor(self):
        sel = SVBSelector(3, 2, rng(), gamma=0.5, epsilon=1e-3)
        sel.observe(1, [0, 2], sv=[-1.0, 0.5])
        np.testing.assert_allclose(sel.estimates, [(1 / 3 - 1) / 2, 1 / 3, (1 / 3 + 0.5) / 2])
        assert sel.weights().min() == 1e-3

    def test_bad_params(self):
        with pytest.raises(ConfigurationError):
            SVBSelector(3, 1, rng(), gamma=0)


class TestTiFL:
    def test_unknown_accuracies_behave_uniformly(self):
        hits = frequencies(TiFLSelector(10, 2, rng(8)), 30_000)
        np.testing.assert_allclose(hits, 0.2, atol=0.015)

    def test_low_accuracy_preferred(self):
        sel = TiFLSelector(10, 2, rng(9))
        sel.observe(1, [], local_accuracy={i: i / 10 for i in range(10)})
        hits = frequencies(sel, 20_000)
        assert hits[:2].mean() > hits[-2:].mean()

    def test_tiers_sorted_by_accuracy(self):
        sel = TiFLSelector(10, 2, rng())
        sel.observe(1, [], local_accuracy={i: 1 - i / 10 for i in range(10)})
        assert sel.tiers()[0].tolist() == [9, 8]

    def test_bad_probs(self):
        with pytest.raises(ConfigurationError):
            TiFLSelector(10, 2, rng(), tier_probs=(0.5, 0.6))


class TestFedFast:
    def test_outlier_is_singleton_cluster(self):
        profiles = maverick_profiles(n=50)
        for s in range(10):
            sel = FedFastSelector(profiles, 5, rng(s))
            assert np.sum(sel.labels == sel.labels[0]) == 1
            assert all(0 in sel.select(t).ids for t in range(1, 21))

    def test_identical_clients_backfill_uniform(self):
        profiles = [ClientProfile(i, ClassDistribution([3, 3])) for i in range(8)]
        hits = frequencies(FedFastSelector(profiles, 2, rng(10)), 20_000)
        np.testing.assert_allclose(hits, 0.25, atol=0.015)

    def test_kmeans_separates_blobs(self):
        pts = np.vstack([np.zeros((5, 2)), np.full((5, 2), 10.0)])
        labels = farthest_point_kmeans(pts, 2, rng())
        assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1 and labels[0] != labels[5]


class TestMakeSelector:
    @pytest.mark.parametrize("name", STRATEGIES)
    def test_every_strategy_returns_k_distinct(self, name):
        profiles = maverick_profiles()
        sel = make_selector(name, profiles, 3, rng(11), maverick_ids=[0])
        for t in range(1, 6):
            ids = sel.select(t).ids
            assert len(ids) == 3 == len(set(ids.tolist())) and all(0 <= i < 10 for i in ids)
            sel.observe(t, ids.tolist(), sv=[0.1, 0.2, 0.3], local_accuracy={int(i): 0.5 for i in ids})

    def test_same_seed_same_sequence(self):
        def seq():
            sel = make_selector("fedemd", maverick_profiles(), 3, rng(12))
            return [sel.select(t).ids.tolist() for t in range(1, 20)]

        assert seq() == seq()

    def test_rejects_unknown(self):
        with pytest.raises(ConfigurationError):
            make_selector("oracle", maverick_profiles(), 2, rng())
        with pytest.raises(ConfigurationError) as err:
            make_selector("random", maverick_profiles(), 2, rng(), alpha=0.1)
        assert err.value.field == "alpha"

    def test_k_bounds(self):
        with pytest.raises(ConfigurationError):
            RandomSelector(3, 0, rng())
