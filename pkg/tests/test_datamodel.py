"""Split plan construction, nesting, and the core container invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pradas import Dataset, Metrics, ModelKind, make_split_plan, split_at
from pradas.errors import InvalidRatiosError


def _toy_linear(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    return Dataset(ModelKind.LINEAR, y, X)


class TestMakeSplitPlan:
    def test_balanced_halves(self):
        plan = make_split_plan(10, [0.5], seed=7)
        assert plan.first_size(0) == 5
        assert plan.second_rows(0).size == 5

    def test_paper_grid_sizes(self):
        # candidate grid 0.1..0.8 on n=20 cuts at 2, 4, ..., 16
        plan = make_split_plan(20, [0.1 * i for i in range(1, 9)], seed=1)
        assert [plan.first_size(t) for t in range(8)] == [2, 4, 6, 8, 10, 12, 14, 16]

    def test_coinciding_cuts_still_nest(self):
        # floor(0.9*4) = floor(0.95*4) = 3: cuts coincide, plan stays valid
        plan = make_split_plan(4, [0.9, 0.95], seed=3)
        first_a = set(plan.first_rows(0).tolist())
        first_b = set(plan.first_rows(1).tolist())
        assert first_a == first_b and len(first_a) == 3

    def test_determinism(self):
        a = make_split_plan(50, [0.3, 0.6], seed=11)
        b = make_split_plan(50, [0.3, 0.6], seed=11)
        assert np.array_equal(a.permutation, b.permutation)

    @pytest.mark.parametrize("ratios", [[0.5, 0.5], [0.6, 0.4], [0.0, 0.5], [1.0], []])
    def test_invalid_ratios(self, ratios):
        with pytest.raises(InvalidRatiosError):
            make_split_plan(10, ratios, seed=0)

    def test_empty_half_rejected(self):
        with pytest.raises(InvalidRatiosError):
            make_split_plan(5, [0.1], seed=0)  # floor(0.5) = 0

    @given(n=st.integers(4, 200), seed=st.integers(0, 2**32 - 1),
           k=st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_nesting_and_partition(self, n, seed, k):
        ratios = np.linspace(0.25, 0.75, k)
        plan = make_split_plan(n, ratios, seed=seed)
        prev: set[int] = set()
        for t in range(k):
            first = set(plan.first_rows(t).tolist())
            second = set(plan.second_rows(t).tolist())
            assert prev <= first            # chain under inclusion
            assert first | second == set(range(n))
            assert not first & second
            prev = first


class TestSplitAt:
    def test_identity_permutation_rows(self):
        data = _toy_linear(4, 2)
        plan = make_split_plan(4, [0.5], seed=0)
        object.__setattr__(plan, "permutation", np.arange(4))
        first, second = split_at(data, plan, 0)
        assert np.array_equal(first.design, data.design[:2])
        assert np.array_equal(second.design, data.design[2:])

    def test_nested_second_halves(self):
        data = _toy_linear(30, 3)
        plan = make_split_plan(30, [0.3, 0.7], seed=5)
        _, second_lo = split_at(data, plan, 0)
        _, second_hi = split_at(data, plan, 1)
        rows_lo = {tuple(r) for r in second_lo.design}
        rows_hi = {tuple(r) for r in second_hi.design}
        assert rows_hi <= rows_lo

    def test_round_trip_inverse_permutation(self):
        data = _toy_linear(17, 4, seed=3)
        plan = make_split_plan(17, [0.4], seed=9)
        first, second = split_at(data, plan, 0)
        stacked = np.vstack([first.design, second.design])
        restacked = np.empty_like(stacked)
        restacked[plan.permutation] = stacked
        assert np.array_equal(restacked, data.design)

    def test_index_out_of_range(self):
        data = _toy_linear(10, 2)
        plan = make_split_plan(10, [0.5], seed=0)
        with pytest.raises(IndexError):
            split_at(data, plan, 1)

    def test_normal_means_split_axis(self):
        rng = np.random.default_rng(0)
        data = Dataset(ModelKind.NORMAL_MEANS, rng.standard_normal((12, 7, 3)))
        plan = make_split_plan(12, [0.25], seed=2)
        first, second = split_at(data, plan, 0)
        assert first.response.shape == (3, 7, 3)
        assert second.response.shape == (9, 7, 3)


class TestDataset:
    def test_response_length_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(ModelKind.LINEAR, np.zeros(3), np.zeros((4, 2)))

    def test_logistic_requires_binary(self):
        with pytest.raises(ValueError):
            Dataset(ModelKind.LOGISTIC, np.array([0.0, 2.0, 1.0]), np.zeros((3, 1)))

    def test_arrays_read_only(self):
        data = _toy_linear(5, 2)
        with pytest.raises(ValueError):
            data.design[0, 0] = 1.0


class TestMetrics:
    def test_counts_and_rates(self):
        m = Metrics.from_selection(np.array([0, 1, 2]), np.array([1, 2, 3]))
        assert (m.tp, m.fp, m.fn) == (2, 1, 1)
        assert m.fdp == pytest.approx(1 / 3)
        assert m.power == pytest.approx(2 / 3)
        assert m.hamming == 2

    def test_empty_selection(self):
        m = Metrics.from_selection(np.array([]), np.array([4]))
        assert m.fdp == 0.0 and m.power == 0.0 and m.hamming == 1
