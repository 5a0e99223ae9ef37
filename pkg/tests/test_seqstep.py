"""Threshold selection against exhaustive search and the two-stage procedure."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pradas import MirrorKind, fdp_hat, select, select_two_stage
from pradas.datamodel import mirror_vector
from pradas.errors import InvalidLevelError, InvalidThresholdError


def brute_force_select(m, q):
    """Reference implementation: scan every candidate threshold directly."""
    m = np.asarray(m, dtype=float)
    cands = sorted(set(abs(v) for v in m if v != 0.0))
    for t in cands:
        neg = int((m <= -t).sum())
        pos = int((m >= t).sum())
        if neg / max(pos, 1) <= q:
            return set(np.flatnonzero(m >= t).tolist()), t
    return set(), None


class TestFdpHat:
    def test_counting_example(self):
        m = np.array([3.0, 2.0, -1.0, 0.5])
        assert fdp_hat(m, 0.5) == pytest.approx(1 / 3)

    def test_all_positive_zero(self):
        assert fdp_hat(np.array([1.0, 2.0]), 0.5) == 0.0

    def test_all_negative_at_least_one(self):
        assert fdp_hat(np.array([-1.0, -2.0]), 0.5) >= 1.0

    def test_nonpositive_threshold(self):
        with pytest.raises(InvalidThresholdError):
            fdp_hat(np.array([1.0]), 0.0)

    def test_inactive_features_excluded(self):
        mv = mirror_vector([3.0, 0.0, -1.0], MirrorKind.SIGN_SUM, 0.5,
                           active=np.array([True, False, True]))
        assert fdp_hat(mv, 0.5) == pytest.approx(1.0)


class TestSelect:
    def test_worked_example(self):
        m = np.array([3.0, 2.0, -1.0, 0.5])
        sel = select(m, 0.5)
        assert sel.tau_q == pytest.approx(0.5)
        assert set(sel.selected.tolist()) == {0, 1, 3}
        assert fdp_hat(m, sel.tau_q) == pytest.approx(1 / 3)

    def test_all_positive_selects_all(self):
        sel = select(np.array([1.0, 2.0, 3.0]), 0.1)
        assert set(sel.selected.tolist()) == {0, 1, 2}
        assert np.all(sel.fdp_hat_trace[:, 1] == 0.0)

    def test_all_negative_empty(self):
        sel = select(np.array([-1.0, -2.0]), 0.3)
        assert sel.n_selected == 0 and sel.tau_q is None

    def test_invalid_level(self):
        with pytest.raises(InvalidLevelError):
            select(np.array([1.0]), 0.0)

    def test_guarantee_at_threshold(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.standard_normal(rng.integers(1, 40))
            sel = select(m, 0.2)
            if sel.tau_q is not None:
                assert fdp_hat(m, sel.tau_q) <= 0.2

    def test_monotone_in_level(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = rng.standard_normal(30)
            s_lo = set(select(m, 0.05).selected.tolist())
            s_hi = set(select(m, 0.3).selected.tolist())
            assert s_lo <= s_hi

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12),
           st.sampled_from([0.05, 0.1, 0.2, 0.34, 0.5]))
    @settings(max_examples=300, deadline=None)
    def test_matches_brute_force(self, vals, q):
        m = np.asarray(vals)
        sel = select(m, q)
        ref_set, ref_tau = brute_force_select(m, q)
        assert set(sel.selected.tolist()) == ref_set
        if ref_tau is None:
            assert sel.tau_q is None
        else:
            assert sel.tau_q == pytest.approx(ref_tau)

    def test_two_stage_equivalence_random(self):
        rng = np.random.default_rng(7)
        for _ in range(400):
            m = rng.standard_normal(rng.integers(1, 13))
            q = rng.choice([0.05, 0.1, 0.25, 0.5])
            a = set(select(m, q).selected.tolist())
            b = set(select_two_stage(m, q).tolist())
            assert a == b
