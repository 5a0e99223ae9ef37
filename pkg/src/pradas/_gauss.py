"""Log-space Gaussian mixture machinery shared by the mirror statistics.

Every density ratio in the package reduces to a difference of two
log-sum-exps over the same mixture, evaluated at a statistic and at its
negation.  Expanding the squared distances lets both tails share all terms
except the sign of the cross term, which halves the work and keeps the
arithmetic identical between the two tails (exact antisymmetry).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

LOG_CLAMP = 700.0
_LOG_2PI = float(np.log(2.0 * np.pi))


def clamp_log(x: np.ndarray | float) -> np.ndarray | float:
    """Clip log-scale quantities to +-700 before any exponentiation."""
    return np.clip(x, -LOG_CLAMP, LOG_CLAMP)


def log_normal_pdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def mixture_log_ratio(s, log_w, means, variances):
    """log of [mixture density at s] / [mixture density at -s], scalar case.

    Parameters
    ----------
    s : array (...,)
        Observed second-half summary statistic.
    log_w, means, variances : arrays (..., C)
        Mixture weights (log scale, need not be normalized: the
        normalization cancels in the ratio), locations and variances,
        broadcastable against ``s[..., None]``.
    """
    s = np.asarray(s, dtype=float)[..., None]
    variances = np.asarray(variances, dtype=float)
    means = np.asarray(means, dtype=float)
    base = log_w - 0.5 * (_LOG_2PI + np.log(variances)) - (s**2 + means**2) / (2.0 * variances)
    cross = s * means / variances
    num = logsumexp(base + cross, axis=-1)
    den = logsumexp(base - cross, axis=-1)
    return np.asarray(clamp_log(num - den))


def mixture_log_ratio_iso(s, log_w, means, variances):
    """Same ratio for d-dimensional components with isotropic covariance.

    Parameters
    ----------
    s : array (..., d)
    log_w : array (..., C)
    means : array (..., C, d)
    variances : array (..., C)
        Per-component isotropic variance (covariance ``v * I_d``).
    """
    s = np.asarray(s, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    d = s.shape[-1]
    ss = np.einsum("...d,...d->...", s, s)[..., None]
    mm = np.einsum("...cd,...cd->...c", means, means)
    sm = np.einsum("...d,...cd->...c", s, means)
    base = log_w - 0.5 * d * (_LOG_2PI + np.log(variances)) - (ss + mm) / (2.0 * variances)
    cross = sm / variances
    num = logsumexp(base + cross, axis=-1)
    den = logsumexp(base - cross, axis=-1)
    return np.asarray(clamp_log(num - den))
