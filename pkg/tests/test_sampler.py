from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fedsim.errors import InfeasibleSampleError
from fedsim.sampler import inclusion_frequencies, sample_without_replacement
from fedsim.verify import ares_pair_probability

TRIALS = 100_000


def rng(seed=0):
    return np.random.default_rng(seed)


class TestSampleWithoutReplacement:
    def test_all_when_k_equals_n(self):
        np.testing.assert_array_equal(sample_without_replacement([0.1, 5, 2], 3, rng()), [0, 1, 2])

    def test_zero_weights_excluded(self):
        r = rng()
        for _ in range(200):
            np.testing.assert_array_equal(sample_without_replacement([1, 1, 0], 2, r), [0, 1])

    def test_infeasible(self):
        with pytest.raises(InfeasibleSampleError):
            sample_without_replacement([1, 0, 0], 2, rng())

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            sample_without_replacement([1, -1], 1, rng())
        with pytest.raises(ValueError):
            sample_without_replacement([1, np.inf], 1, rng())

    def test_deterministic(self):
        a = [sample_without_replacement([1, 2, 3, 4, 5], 2, r).tolist() for r in [rng(7)] * 20]
        b = [sample_without_replacement([1, 2, 3, 4, 5], 2, r).tolist() for r in [rng(7)] * 20]
        assert a == b

    def test_tiny_weights_do_not_tie(self):
        # u ** (1 / 1e-300) underflows to 0 for every index; log keys keep them apart
        picks = {tuple(sample_without_replacement([1e-300] * 4, 1, r)) for r in [rng(1)] * 200}
        assert len(picks) == 4

    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=12), st.data())
    def test_k_distinct_sorted(self, weights, data):
        k = data.draw(st.integers(0, len(weights)))
        out = sample_without_replacement(weights, k, rng(data.draw(st.integers(0, 99))))
        assert len(out) == k == len(set(out.tolist()))
        assert list(out) == sorted(out)


def _chi2_pvalue(counts, probs):
    return stats.chisquare(counts, np.asarray(probs) * np.sum(counts)).pvalue


class TestFrequencies:
    def test_proportional_when_k_is_one(self):
        freq = inclusion_frequencies([2, 1, 1, 1], 1, TRIALS, rng(11))
        assert abs(freq[0] - 0.4) < 0.01
        assert _chi2_pvalue(freq * TRIALS, [0.4, 0.2, 0.2, 0.2]) > 0.01

    def test_pairs_match_exact_distribution(self):
        w = np.array([0.1, 0.2, 0.3, 0.4])
        pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        exact = [ares_pair_probability(w, i, j) for i, j in pairs]
        assert sum(exact) == pytest.approx(1.0, abs=1e-12)
        r = rng(12)
        counts = np.zeros(len(pairs))
        for _ in range(TRIALS):
            counts[pairs.index(tuple(sample_without_replacement(w, 2, r)))] += 1
        assert _chi2_pvalue(counts, exact) > 0.01

    def test_uniform_weights(self):
        np.testing.assert_allclose(inclusion_frequencies([1, 1, 1, 1], 2, 20_000, rng(13)), 0.5, atol=0.02)

    def test_zero_weight_never_drawn(self):
        assert inclusion_frequencies([1, 0, 3], 1, 5_000, rng(14))[1] == 0.0

    @pytest.mark.slow
    def test_monotone_in_weight(self):
        low = inclusion_frequencies([1, 2, 3, 4], 2, TRIALS, rng(15))[0]
        high = inclusion_frequencies([2, 2, 3, 4], 2, TRIALS, rng(15))[0]
        assert high > low

    @pytest.mark.slow
    def test_scale_invariant(self):
        w = np.array([1.0, 2.0, 3.0, 4.0])
        a = inclusion_frequencies(w, 2, TRIALS, rng(16))
        b = inclusion_frequencies(7.5 * w, 2, TRIALS, rng(17))
        table = np.stack([a, b]) * TRIALS
        assert stats.chi2_contingency(table).pvalue > 0.01

    def test_trials_positive(self):
        with pytest.raises(ValueError):
            inclusion_frequencies([1, 1], 1, 0, rng())


def test_pair_probability_closed_form():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    for i, j in [(0, 1), (2, 3)]:
        total = w.sum()
        rest = total - w[i] - w[j]
        closed = 1 - rest / (rest + w[i]) - rest / (rest + w[j]) + rest / (rest + w[i] + w[j])
        assert ares_pair_probability(w, i, j) == pytest.approx(closed, abs=1e-10)
