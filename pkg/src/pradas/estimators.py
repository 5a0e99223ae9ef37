"""Split-level summary statistics: OLS and logistic MLE over screened features.

These are the second-half summary statistics of the sign-flip construction:
under the null each coefficient estimate is (asymptotically) symmetric about
zero, so its negation serves as the mirror.  ``omega`` stores the
per-coordinate variance factor (inverse Gram diagonal for OLS, inverse
observed-information diagonal for the logistic MLE).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, ndtr
from scipy.stats import t as student_t

from .datamodel import Dataset, ModelKind
from .errors import ConvergenceError, SeparationError, SingularDesignError, TooFewRowsError

_COND_CAP = 1e12


@dataclass(frozen=True)
class SplitEstimate:
    """Coefficient estimates over a screened feature subset.

    ``screened_index[k]`` is the original feature id of position ``k``;
    ``omega`` is the variance factor of each coefficient (diagonal of the
    inverse Gram for OLS, of the inverse observed information for logistic).
    """

    beta_hat: np.ndarray
    omega: np.ndarray
    screened_index: np.ndarray
    n_rows: int
    sigma2_hat: float | None = None

    @property
    def m(self) -> int:
        return self.beta_hat.shape[0]


def _solve_gram(G: np.ndarray, rhs: np.ndarray):
    """Solve G x = rhs and return (solution, inverse diagonal), with jitter fallback.

    A ridge jitter of 1e-8 * trace/m is added once when the condition estimate
    exceeds 1e12 (with a warning); if factorization still fails the design is
    reported singular together with the condition estimate.
    """
    m = G.shape[0]
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > _COND_CAP:
        jitter = 1e-8 * np.trace(G) / m
        if jitter <= 0:
            raise SingularDesignError(f"Gram matrix singular (cond~{cond:.3e})", cond)
        warnings.warn(f"ill-conditioned Gram (cond~{cond:.3e}); adding ridge jitter {jitter:.3e}",
                      RuntimeWarning, stacklevel=3)
        G = G + jitter * np.eye(m)
    try:
        cho = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularDesignError(f"Gram factorization failed (cond~{cond:.3e})", cond) from exc
    sol = linalg.cho_solve(cho, rhs)
    inv_diag = np.diag(linalg.cho_solve(cho, np.eye(m)))
    return sol, inv_diag


def ols_fit(half: Dataset, features: np.ndarray | None = None) -> SplitEstimate:
    """Ordinary least squares on the selected columns of one split."""
    if half.kind is not ModelKind.LINEAR:
        raise ValueError("ols_fit requires linear-Gaussian data")
    if features is None:
        features = np.arange(half.p)
    features = np.asarray(features, dtype=np.intp)
    X = half.design[:, features]
    y = half.response
    n, m = X.shape
    if n < m + 1:
        raise TooFewRowsError(f"OLS with {m} features needs at least {m + 1} rows, got {n}")
    G = X.T @ X
    beta, inv_diag = _solve_gram(G, X.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (n - m)
    return SplitEstimate(beta_hat=beta, omega=np.asarray(inv_diag), screened_index=features,
                         n_rows=n, sigma2_hat=sigma2)


def _logistic_irls(X: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100,
                   beta_cap: float = 30.0):
    """Damped Newton iterations for the logistic log-likelihood."""
    n, m = X.shape
    beta = np.zeros(m)

    def loglik(b):
        eta = X @ b
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    ll = loglik(beta)
    for _ in range(max_iter):
        mu = expit(X @ beta)
        grad = X.T @ (y - mu)
        if np.max(np.abs(grad)) < tol:
            break
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        H = (X * w[:, None]).T @ X
        try:
            step = linalg.cho_solve(linalg.cho_factor(H, lower=True), grad)
        except linalg.LinAlgError as exc:
            raise SingularDesignError("observed information singular in logistic fit") from exc
        # halving line search keeps the likelihood nondecreasing
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = loglik(beta)
        if np.max(np.abs(beta)) > beta_cap:
            raise SeparationError(f"coefficients exceeded {beta_cap}; data look separable")
    else:
        raise ConvergenceError(f"logistic fit: gradient norm above {tol} after {max_iter} steps")
    mu = expit(X @ beta)
    w = np.maximum(mu * (1.0 - mu), 1e-12)
    H = (X * w[:, None]).T @ X
    _, inv_diag = _solve_gram(H, np.eye(m))
    return beta, np.asarray(inv_diag)


def logistic_mle(half: Dataset, features: np.ndarray | None = None,
                 beta_cap: float = 30.0) -> SplitEstimate:
    """Logistic MLE (with intercept) on the selected columns of one split.

    Only the feature coefficients are reported; ``omega`` is the matching
    block of the inverse observed-information diagonal.
    """
    if half.kind is not ModelKind.LOGISTIC:
        raise ValueError("logistic_mle requires binary-response data")
    if features is None:
        features = np.arange(half.p)
    features = np.asarray(features, dtype=np.intp)
    y = half.response
    if y.min() == y.max():
        raise SeparationError("both response classes must be present")
    Xf = half.design[:, features]
    n, m = Xf.shape
    if n < m + 2:
        raise TooFewRowsError(f"logistic fit with {m} features needs at least {m + 2} rows")
    keep = Xf.std(axis=0) > 0  # constant columns alias the intercept
    X = np.column_stack([np.ones(n), Xf[:, keep]])
    beta_full, inv_diag_full = _logistic_irls(X, y, beta_cap=beta_cap)
    beta = np.zeros(m)
    omega = np.full(m, np.inf)
    beta[keep] = beta_full[1:]
    omega[keep] = inv_diag_full[1:]
    omega[~keep] = 1.0  # dropped columns carry a zero estimate with unit scale
    return SplitEstimate(beta_hat=beta, omega=omega, screened_index=features,
                         n_rows=n, sigma2_hat=None)


@dataclass(frozen=True)
class PValueReport:
    """Two-sided p-values plus the fitting route that produced them."""

    pvalues: np.ndarray
    marginal: bool


def full_data_pvalues(data: Dataset) -> PValueReport:
    """Classical two-sided p-values on the full data, for the BH baseline.

    Linear data use the joint OLS t-tests when ``n > p + 1`` and fall back to
    per-feature marginal regressions otherwise (flagged via ``marginal``).
    Logistic data use Wald z-tests; normal-means use the chi-square test of
    the feature mean.
    """
    if data.kind is ModelKind.NORMAL_MEANS:
        from scipy.stats import chi2

        ybar = data.response.mean(axis=0)
        stat = data.n * (ybar**2).sum(axis=1)
        return PValueReport(pvalues=chi2.sf(stat, df=data.d), marginal=False)

    n, p = data.n, data.p
    if data.kind is ModelKind.LINEAR:
        if n > p + 1:
            X = np.column_stack([np.ones(n), data.design])
            beta, inv_diag = _solve_gram(X.T @ X, X.T @ data.response)
            resid = data.response - X @ beta
            dof = n - p - 1
            sigma2 = float(resid @ resid) / dof
            tstat = beta[1:] / np.sqrt(sigma2 * inv_diag[1:])
            return PValueReport(pvalues=2.0 * student_t.sf(np.abs(tstat), df=dof), marginal=False)
        pv = np.empty(p)
        y = data.response
        yc = y - y.mean()
        dof = n - 2
        for j in range(p):
            x = data.design[:, j]
            xc = x - x.mean()
            sxx = float(xc @ xc)
            if sxx == 0.0:
                pv[j] = 1.0
                continue
            b = float(xc @ yc) / sxx
            resid = yc - b * xc
            s2 = float(resid @ resid) / dof
            if s2 == 0.0:
                pv[j] = 0.0 if b != 0 else 1.0
                continue
            pv[j] = 2.0 * student_t.sf(abs(b) / np.sqrt(s2 / sxx), df=dof)
        return PValueReport(pvalues=pv, marginal=True)

    # logistic: Wald z from the joint fit when it is feasible, else marginal
    if n > 5 * (p + 1):
        est = logistic_mle(data)
        zstat = est.beta_hat / np.sqrt(est.omega)
        return PValueReport(pvalues=2.0 * (1.0 - ndtr(np.abs(zstat))), marginal=False)
    pv = np.empty(p)
    for j in range(p):
        sub = Dataset(ModelKind.LOGISTIC, data.response, data.design[:, [j]])
        est = logistic_mle(sub)
        zstat = est.beta_hat[0] / np.sqrt(est.omega[0])
        pv[j] = 2.0 * (1.0 - ndtr(abs(zstat)))
    return PValueReport(pvalues=pv, marginal=True)
