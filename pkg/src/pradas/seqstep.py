"""Threshold selection from mirror statistics.

The estimated FDP at a cutoff counts the left tail against the right tail;
the data-driven cutoff is the smallest candidate threshold whose estimate
falls below the nominal level.  Candidates are the distinct nonzero
magnitudes, counted with weak inequalities: for continuous statistics this
agrees almost surely with the strict-inequality infimum while staying exactly
computable, and handles tied values deterministically.
"""

from __future__ import annotations

import numpy as np

from .datamodel import MirrorVector, SelectionResult, check_level
from .errors import InvalidThresholdError


def _active_values(values: MirrorVector | np.ndarray) -> np.ndarray:
    if isinstance(values, MirrorVector):
        return values.values[values.active]
    return np.asarray(values, dtype=float)


def fdp_hat(values: MirrorVector | np.ndarray, t: float) -> float:
    """#{M <= -t} / max(#{M >= t}, 1) over active features."""
    if not t > 0:
        raise InvalidThresholdError(f"threshold must be positive, got {t}")
    m = _active_values(values)
    return float((m <= -t).sum()) / max(int((m >= t).sum()), 1)


def select(values: MirrorVector | np.ndarray, q: float) -> SelectionResult:
    """Smallest cutoff with estimated FDP at most ``q``, and its selections.

    Scans the distinct magnitudes of the nonzero statistics in increasing
    order and returns the full (threshold, estimated FDP) trace.  When no
    candidate qualifies the selection is empty and the cutoff is ``None``.
    """
    q = check_level(q)
    m = _active_values(values)
    full = values.values if isinstance(values, MirrorVector) else np.asarray(values, dtype=float)

    cands = np.unique(np.abs(m[m != 0.0]))
    if cands.size == 0:
        return SelectionResult(selected=np.empty(0, dtype=np.intp), tau_q=None,
                               fdp_hat_trace=np.empty((0, 2)), q=q)
    pos = np.sort(m[m > 0.0])
    neg = np.sort(-m[m < 0.0])
    n_pos = pos.size - np.searchsorted(pos, cands, side="left")
    n_neg = neg.size - np.searchsorted(neg, cands, side="left")
    fdp = n_neg / np.maximum(n_pos, 1)
    trace = np.column_stack([cands, fdp])

    ok = np.flatnonzero(fdp <= q)
    if ok.size == 0:
        return SelectionResult(selected=np.empty(0, dtype=np.intp), tau_q=None,
                               fdp_hat_trace=trace, q=q)
    tau = float(cands[ok[0]])
    selected = np.flatnonzero(full >= tau)
    return SelectionResult(selected=selected, tau_q=tau, fdp_hat_trace=trace, q=q)


def select_two_stage(values: MirrorVector | np.ndarray, q: float) -> np.ndarray:
    """Exploration/confirmation form of the same rule.

    Ranks features by magnitude, walks down confirming signs, and keeps the
    largest examined prefix whose running miss ratio stays within ``q``;
    returns the confirmed features of that prefix.  Provided as an
    independent route for the equivalence guarantee with :func:`select`;
    assumes continuous statistics (distinct nonzero magnitudes).
    """
    q = check_level(q)
    full = values.values if isinstance(values, MirrorVector) else np.asarray(values, dtype=float)
    if isinstance(values, MirrorVector):
        idx = np.flatnonzero(values.active & (values.values != 0.0))
    else:
        idx = np.flatnonzero(full != 0.0)
    order = idx[np.argsort(-np.abs(full[idx]), kind="stable")]
    correct = full[order] > 0
    n_wrong = np.cumsum(~correct)
    n_right = np.cumsum(correct)
    fdp = n_wrong / np.maximum(n_right, 1)
    ok = np.flatnonzero(fdp <= q)
    if ok.size == 0:
        return np.empty(0, dtype=np.intp)
    k = ok[-1] + 1
    return np.sort(order[:k][correct[:k]])
