"""Benjamini-Hochberg and oracle local-FDR selection baselines."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .datamodel import Dataset, ModelKind, SpikeSlabPrior, check_level


def bh_select(pvalues: np.ndarray, q: float) -> np.ndarray:
    """Step-up rule: reject the k* smallest p-values with p_(k) <= k q / m."""
    q = check_level(q)
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return np.empty(0, dtype=np.intp)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    m = p.size
    ok = np.flatnonzero(p[order] <= q * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(order[: ok[-1] + 1])


def lfdr_select(lfdr: np.ndarray, q: float) -> np.ndarray:
    """Largest ascending-lfdr prefix whose running mean stays within ``q``.

    Ties are broken by original index, so the result is deterministic.
    """
    q = check_level(q)
    vals = np.asarray(lfdr, dtype=float)
    if np.any((vals < 0) | (vals > 1)):
        raise ValueError("local fdr values must lie in [0, 1]")
    order = np.argsort(vals, kind="stable")
    running = np.cumsum(vals[order]) / np.arange(1, vals.size + 1)
    ok = np.flatnonzero(running <= q)
    if ok.size == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(order[: ok[-1] + 1])


def lfdr_normal_means(data: Dataset, prior: SpikeSlabPrior) -> np.ndarray:
    """Oracle per-feature local fdr from the full-data sufficient statistic.

    ``lfdr_j = p0 f0(ybar_j) / (p0 f0(ybar_j) + (1 - p0) f1(ybar_j))`` with
    ``f0`` the null density of the feature mean and ``f1`` the slab marginal,
    both evaluated in log space.
    """
    if data.kind is not ModelKind.NORMAL_MEANS:
        raise ValueError("lfdr_normal_means requires normal-means data")
    n = data.n
    ybar = data.response.mean(axis=0)
    d = data.d
    with np.errstate(divide="ignore"):
        log_null = np.log(prior.p0) - 0.5 * d * np.log(1.0 / n) \
            - 0.5 * n * (ybar**2).sum(axis=1)
        parts = [log_null]
        for w_c, mu_c, tau2_c in prior.slab.components():
            var = tau2_c + 1.0 / n
            dist2 = ((ybar - mu_c) ** 2).sum(axis=1)
            parts.append(np.log1p(-prior.p0) + np.log(w_c)
                         - 0.5 * d * np.log(var) - dist2 / (2.0 * var))
    log_mix = logsumexp(np.stack(parts, axis=1), axis=1)
    return np.exp(np.minimum(log_null - log_mix, 0.0))
