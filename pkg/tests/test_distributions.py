from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsim.distributions import (
    ClassDistribution,
    ClientProfile,
    accumulate_current,
    aggregate_global,
    choose_ref_class,
    emd,
    kld,
    prob,
    size_scaled_emd,
)
from fedsim.errors import (
    DimensionError,
    EmptyDistributionError,
    EmptyPopulationError,
    ReferenceClassEmptyError,
)


def D(*counts) -> ClassDistribution:
    return ClassDistribution(np.array(counts))


def P(i, *counts, mav=False) -> ClientProfile:
    return ClientProfile(i, D(*counts), mav)


counts_st = st.lists(st.integers(0, 50), min_size=3, max_size=3)


class TestClassDistribution:
    def test_total_and_immutability(self):
        d = D(1, 2, 3)
        assert d.total() == 6 and d.num_classes == 3
        with pytest.raises(ValueError):
            d.counts[0] = 5

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            D(1, -1)

    def test_add_and_equality(self):
        assert D(1, 2) + D(3, 4) == D(4, 6)
        assert hash(D(1, 2)) == hash(D(1, 2))

    def test_from_labels(self):
        assert ClassDistribution.from_labels([0, 2, 2], 4) == D(1, 0, 2, 0)


class TestProb:
    @pytest.mark.parametrize(
        "counts, expected",
        [((2, 2), [0.5, 0.5]), ((0, 0), [0.5, 0.5]), ((1, 3), [0.25, 0.75])],
    )
    def test_examples(self, counts, expected):
        np.testing.assert_allclose(prob(D(*counts)), expected)

    def test_no_classes(self):
        with pytest.raises(EmptyDistributionError):
            prob(ClassDistribution(np.zeros(0)))

    @given(counts_st)
    def test_sums_to_one(self, counts):
        assert abs(prob(D(*counts)).sum() - 1.0) < 1e-12


class TestEmd:
    def test_examples(self):
        assert emd(D(3, 5), D(3, 5)) == 0.0
        assert emd(D(10, 0), D(0, 10)) == 2.0
        assert emd(D(1, 0), D(1, 1)) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            emd(D(1, 2), D(1, 2, 3))

    @given(counts_st, counts_st, counts_st)
    def test_metric(self, a, b, c):
        a, b, c = D(*a), D(*b), D(*c)
        assert emd(a, b) == pytest.approx(emd(b, a))
        assert 0.0 <= emd(a, b) <= 2.0 + 1e-12
        assert emd(a, c) <= emd(a, b) + emd(b, c) + 1e-12

    @given(counts_st, st.integers(1, 5))
    def test_scale_invariant(self, a, k):
        assert emd(D(*a), D(*[k * x for x in a])) == pytest.approx(0.0, abs=1e-12)


class TestKld:
    def test_examples(self):
        assert kld([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert kld([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
        assert kld([0.5, 0.5], [1, 0]) == math.inf

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            kld([1.0], [0.5, 0.5])

    @given(counts_st.filter(any), counts_st.filter(all))
    def test_gibbs(self, p, q):
        assert kld(prob(D(*p)), prob(D(*q))) >= 0.0


class TestAggregation:
    def test_aggregate_global(self):
        assert aggregate_global([P(0, 1, 0), P(1, 0, 1)]) == D(1, 1)
        assert aggregate_global([P(0, 3, 4)]) == D(3, 4)
        assert aggregate_global([P(0, 5, 0), P(1, 5, 0), P(2, 0, 10)]) == D(10, 10)
        with pytest.raises(EmptyPopulationError):
            aggregate_global([])

    def test_accumulate_current(self):
        assert accumulate_current(D(0, 0), [P(0, 2, 0)]) == D(2, 0)
        assert accumulate_current(D(2, 0), [P(0, 0, 3), P(1, 1, 1)]) == D(3, 4)
        assert accumulate_current(D(1, 1), []) == D(1, 1)

    def test_accumulate_does_not_mutate(self):
        dc = D(1, 1)
        accumulate_current(dc, [P(0, 5, 5)])
        assert dc == D(1, 1)

    def test_accumulate_dimension(self):
        with pytest.raises(DimensionError):
            accumulate_current(D(1, 1), [P(0, 1, 1, 1)])


class TestSizeScaledEmd:
    def test_identical_to_reference(self):
        profiles = [P(0, 1, 1), P(1, 5, 5), P(2, 2, 2)]
        np.testing.assert_array_equal(size_scaled_emd(profiles, D(3, 3), 0), 0.0)

    def test_doubling_invariant(self):
        profiles = [P(0, 10, 0), P(1, 2, 3), P(2, 1, 4)]
        doubled = [P(p.id, *(2 * p.counts)) for p in profiles]
        ref = aggregate_global(profiles)
        np.testing.assert_allclose(
            size_scaled_emd(profiles, ref, 1), size_scaled_emd(doubled, ref + ref, 1)
        )

    def test_hand_value(self):
        # sigma = mean of class 1 = (0 + 2 + 2) / 3; client 0: emd 1.0 (to [.5,.5]) * 10/sigma
        profiles = [P(0, 10, 0), P(1, 2, 2), P(2, 2, 2)]
        out = size_scaled_emd(profiles, D(1, 1), 1)
        np.testing.assert_allclose(out, [1.0 * 10 / (4 / 3), 0.0, 0.0])

    def test_empty_reference_class(self):
        with pytest.raises(ReferenceClassEmptyError):
            size_scaled_emd([P(0, 1, 0), P(1, 2, 0)], D(1, 0), 1)


class TestChooseRefClass:
    def test_lowest_majority_class(self):
        # class 0 belongs to the Maverick only; class 1 is held by everyone else
        profiles = [P(0, 9, 0, 0)] + [P(i, 0, 3, 3) for i in range(1, 5)]
        assert choose_ref_class(profiles) == 1

    def test_fallback_when_no_majority(self):
        profiles = [P(0, 1, 0, 0, 0), P(1, 0, 1, 0, 0), P(2, 0, 0, 1, 0), P(3, 0, 0, 1, 0), P(4, 0, 0, 0, 1)]
        assert choose_ref_class(profiles) == 2

    def test_errors(self):
        with pytest.raises(EmptyPopulationError):
            choose_ref_class([])
        with pytest.raises(ReferenceClassEmptyError):
            choose_ref_class([P(0, 0, 0)])
