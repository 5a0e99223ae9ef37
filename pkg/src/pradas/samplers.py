"""Spike-and-slab posterior computation.

Three routes, matched to the model kinds:

* many normal-means: exact conjugate posterior per feature (finite Gaussian
  mixture), no Monte Carlo;
* linear regression: single-site Gibbs with inclusion odds computed on the
  partial residuals, optional conjugate hyperprior updates;
* logistic regression: the same sweep after a latent-variable reformulation
  that approximates the logistic error law by a scaled t distribution
  (``nu = 7.3``), realized as a per-observation normal scale mixture.

The Gibbs slab must be a point mass or a single Gaussian; the two-sided
mixture slab is handled exactly by the normal-means route only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import logsumexp, ndtr, ndtri

from .datamodel import Dataset, ModelKind, SlabKind, SpikeSlabPrior
from .errors import EmptyFirstHalfError
from ._gauss import LOG_CLAMP

# Scaled-t approximation to the logistic error distribution: degrees of
# freedom and the matching squared scale factor pi^2 (nu - 2) / (3 nu).
NU_LOGISTIC = 7.3
W2_LOGISTIC = np.pi**2 * (NU_LOGISTIC - 2.0) / (3.0 * NU_LOGISTIC)


@dataclass(frozen=True)
class NormalMeansPosterior:
    """Exact per-feature posterior for the replicated normal-means model.

    The posterior of each mean vector is a finite isotropic Gaussian mixture:
    component 0 is the spike (point mass at the origin), the remaining
    columns come from the slab.  ``log_w`` rows are normalized; ``variances``
    holds the isotropic posterior variance per component (0 for point
    masses).
    """

    n1: int
    log_w: np.ndarray      # (p, C)
    means: np.ndarray      # (p, C, d)
    variances: np.ndarray  # (C,)

    @property
    def p(self) -> int:
        return self.log_w.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[2]

    def spike_weight(self) -> np.ndarray:
        return np.exp(self.log_w[:, 0])

    def mean(self) -> np.ndarray:
        """Posterior mean of each feature's mean vector, (p, d)."""
        w = np.exp(self.log_w)
        return np.einsum("pc,pcd->pd", w, self.means)

    def total_variance(self) -> np.ndarray:
        """Trace of the posterior covariance per feature, (p,)."""
        w = np.exp(self.log_w)
        second = np.einsum("pc,pcd->pd", w, self.means**2).sum(axis=1)
        second += w @ (self.d * self.variances)
        return second - (self.mean() ** 2).sum(axis=1)

    def sample_means(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` posterior mean vectors per feature, (p, size, d)."""
        p, c, d = self.means.shape
        cum = np.cumsum(np.exp(self.log_w), axis=1)
        cum[:, -1] = 1.0
        u = rng.random((p, size))
        comp = (u[:, :, None] > cum[:, None, :]).sum(axis=2)
        out = np.take_along_axis(self.means, comp[:, :, None], axis=1)
        sd = np.sqrt(self.variances)[comp]
        if np.any(sd > 0):
            out = out + sd[:, :, None] * rng.standard_normal((p, size, d))
        return out


def _posterior_from_sufficient(ybar: np.ndarray, n1: int, prior: SpikeSlabPrior) -> NormalMeansPosterior:
    """Conjugate update from the first-half sample means (unit noise)."""
    if n1 < 1:
        raise EmptyFirstHalfError("posterior update requires at least one observation")
    p, d = ybar.shape
    comps = prior.slab.components()
    n_comp = 1 + len(comps)
    log_w = np.empty((p, n_comp))
    means = np.zeros((p, n_comp, d))
    variances = np.zeros(n_comp)

    ss = (ybar**2).sum(axis=1)
    with np.errstate(divide="ignore"):
        # spike: marginal likelihood N(ybar; 0, I/n1)
        log_w[:, 0] = np.log(prior.p0) - 0.5 * n1 * ss
        for c, (w_c, mu0, tau2) in enumerate(comps, start=1):
            loc = np.full(d, mu0)
            marg_var = tau2 + 1.0 / n1
            dist2 = ((ybar - loc) ** 2).sum(axis=1)
            # constants that differ across components must be kept
            log_w[:, c] = (np.log1p(-prior.p0) + np.log(w_c)
                           - 0.5 * d * np.log(marg_var * n1) - dist2 / (2.0 * marg_var))
            if tau2 > 0.0:
                v = 1.0 / (n1 + 1.0 / tau2)
                means[:, c, :] = v * (n1 * ybar + loc / tau2)
                variances[c] = v
            else:
                means[:, c, :] = loc
                variances[c] = 0.0
    log_w -= logsumexp(log_w, axis=1, keepdims=True)
    return NormalMeansPosterior(n1=n1, log_w=log_w, means=means, variances=variances)


def normal_means_posterior(first_half: Dataset, prior: SpikeSlabPrior) -> NormalMeansPosterior:
    """Exact spike-and-slab posterior given the first split of a normal-means dataset."""
    if first_half.kind is not ModelKind.NORMAL_MEANS:
        raise ValueError("normal_means_posterior requires normal-means data")
    ybar = first_half.response.mean(axis=0)
    return _posterior_from_sufficient(ybar, first_half.n, prior)


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained Gibbs draws. ``z[k, j] = 0`` forces ``beta[k, j] = 0`` exactly."""

    beta: np.ndarray            # (K, p)
    z: np.ndarray               # (K, p) in {0, 1}
    burn_in: int
    sigma2: np.ndarray | None = None
    tau2: np.ndarray | None = None
    theta: np.ndarray | None = None
    mu: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def sigma2_mean(self, fallback: float = 1.0) -> float:
        if self.sigma2 is None:
            return fallback
        return float(self.sigma2.mean())


def inclusion_rates(draws: PosteriorDraws) -> np.ndarray:
    """Per-feature posterior inclusion frequency across retained draws."""
    return draws.z.mean(axis=0)


@njit(cache=True)
def _spike_slab_sweep(XT, r, w, beta, z, order, u, gauss,
                      log_prior_odds, prior_mode, tau2, mu, point_slab):
    """One Gibbs sweep over features, weighted observations (w = 1/noise var).

    Updates ``beta``, ``z`` and the residual ``r`` in place; returns the
    number of log-odds clamps at +-700.
    """
    n = r.shape[0]
    n_clamped = 0
    for k in range(order.shape[0]):
        j = order[k]
        xj = XT[j]
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] += xj[i] * bj
        ssw = 0.0
        xrw = 0.0
        for i in range(n):
            xw = xj[i] * w[i]
            ssw += xw * xj[i]
            xrw += xw * r[i]
        if prior_mode == 1:
            include = True
        elif prior_mode == 2:
            include = False
        else:
            if point_slab:
                llr = mu * xrw - 0.5 * mu * mu * ssw
            else:
                q = 1.0 + tau2 * ssw
                t = xrw - mu * ssw
                llr = -0.5 * np.log(q) + mu * xrw - 0.5 * mu * mu * ssw \
                    + 0.5 * tau2 * t * t / q
            logit = log_prior_odds + llr
            if logit > LOG_CLAMP:
                logit = LOG_CLAMP
                n_clamped += 1
            elif logit < -LOG_CLAMP:
                logit = -LOG_CLAMP
                n_clamped += 1
            include = u[k] < 1.0 / (1.0 + np.exp(-logit))
        if include:
            if point_slab:
                bnew = mu
            else:
                prec = ssw + 1.0 / tau2
                bnew = (xrw + mu / tau2) / prec + gauss[k] / np.sqrt(prec)
            z[j] = 1
            beta[j] = bnew
            for i in range(n):
                r[i] -= xj[i] * bnew
        else:
            z[j] = 0
            beta[j] = 0.0
    return n_clamped


def _invgamma(rng: np.random.Generator, shape: float, rate: float) -> float:
    return rate / rng.gamma(shape)


def _check_gibbs_prior(prior: SpikeSlabPrior) -> bool:
    if prior.slab.kind is SlabKind.TWO_SIDED:
        raise ValueError("Gibbs samplers support point-mass or Gaussian slabs only")
    return prior.slab.kind is SlabKind.POINT_MASS


class _GibbsState:
    """Mutable chain state shared by the linear and logistic samplers."""

    def __init__(self, n: int, p: int, prior: SpikeSlabPrior, sigma2: float):
        self.prior = prior
        hyper = prior.hyper
        self.beta = np.zeros(p)
        self.z = np.zeros(p, dtype=np.uint8)
        self.theta = 1.0 - prior.p0
        if hyper is not None and hyper.theta_beta is not None:
            a, b = hyper.theta_beta
            self.theta = a / (a + b)
        self.tau2 = prior.slab.tau2
        self.mu = prior.slab.mu0
        self.sigma2 = sigma2
        self.n = n
        self.p = p

    @property
    def log_prior_odds(self) -> float:
        # log odds of inclusion; modes 1/2 bypass it for the degenerate priors
        if self.theta <= 0.0 or self.theta >= 1.0:
            return 0.0
        return float(np.log(self.theta) - np.log1p(-self.theta))

    @property
    def prior_mode(self) -> int:
        if self.theta >= 1.0:
            return 1
        if self.theta <= 0.0:
            return 2
        return 0

    def update_hypers(self, rng: np.random.Generator, resid_ss: float | None):
        hyper = self.prior.hyper
        if hyper is None:
            return
        k_in = int(self.z.sum())
        if hyper.theta_beta is not None:
            a, b = hyper.theta_beta
            self.theta = rng.beta(a + k_in, b + self.p - k_in)
        if hyper.tau2_invgamma is not None:
            b1, b2 = hyper.tau2_invgamma
            dev = float(((self.beta - self.mu) ** 2 * self.z).sum())
            self.tau2 = _invgamma(rng, b1 + 0.5 * k_in, b2 + 0.5 * dev)
        if hyper.mu_normal is not None:
            mu0, tau02 = hyper.mu_normal
            if k_in > 0:
                prec = 1.0 / tau02 + k_in / self.tau2
                mean = (mu0 / tau02 + self.beta[self.z == 1].sum() / self.tau2) / prec
                self.mu = mean + rng.standard_normal() / np.sqrt(prec)
            else:
                self.mu = mu0 + np.sqrt(tau02) * rng.standard_normal()
        if hyper.sigma2_invgamma is not None and resid_ss is not None:
            a1, a2 = hyper.sigma2_invgamma
            self.sigma2 = _invgamma(rng, a1 + 0.5 * self.n, a2 + 0.5 * resid_ss)


def _prior_only_draws(p: int, prior: SpikeSlabPrior, K: int, burn_in: int,
                      rng: np.random.Generator, with_sigma2: bool) -> PosteriorDraws:
    """With zero observations every conditional reduces to the prior."""
    point_slab = _check_gibbs_prior(prior)
    hyper = prior.hyper
    state = _GibbsState(0, p, prior, 1.0)
    beta_out = np.zeros((K, p))
    z_out = np.zeros((K, p), dtype=np.uint8)
    traces = {name: [] for name in ("sigma2", "tau2", "theta", "mu")}
    for it in range(burn_in + K):
        state.z = (rng.random(p) < state.theta).astype(np.uint8)
        if point_slab:
            state.beta = np.where(state.z == 1, state.mu, 0.0)
        else:
            noise = state.mu + np.sqrt(state.tau2) * rng.standard_normal(p)
            state.beta = np.where(state.z == 1, noise, 0.0)
        state.update_hypers(rng, resid_ss=0.0 if with_sigma2 else None)
        if it >= burn_in:
            k = it - burn_in
            beta_out[k] = state.beta
            z_out[k] = state.z
            traces["sigma2"].append(state.sigma2)
            traces["tau2"].append(state.tau2)
            traces["theta"].append(state.theta)
            traces["mu"].append(state.mu)
    return _pack_draws(beta_out, z_out, burn_in, traces, hyper, with_sigma2)


def _pack_draws(beta, z, burn_in, traces, hyper, with_sigma2) -> PosteriorDraws:
    def trace(name, active):
        return np.asarray(traces[name]) if active else None

    return PosteriorDraws(
        beta=beta, z=z, burn_in=burn_in,
        sigma2=trace("sigma2", with_sigma2 and hyper is not None and hyper.sigma2_invgamma is not None),
        tau2=trace("tau2", hyper is not None and hyper.tau2_invgamma is not None),
        theta=trace("theta", hyper is not None and hyper.theta_beta is not None),
        mu=trace("mu", hyper is not None and hyper.mu_normal is not None),
    )


def gibbs_linear(first_half: Dataset | None, prior: SpikeSlabPrior, K: int = 1000,
                 burn_in: int = 500, seed: int = 0, sigma2: float = 1.0,
                 *, p: int | None = None) -> PosteriorDraws:
    """Single-site Gibbs sampler for the linear spike-and-slab model.

    Features are visited in a fresh uniformly random order each sweep.  The
    noise variance stays fixed at ``sigma2`` unless the prior carries an
    inverse-gamma hyperprior for it.  Passing ``first_half=None`` (with an
    explicit ``p``) runs the prior-only chain.

    Parameters
    ----------
    first_half : Dataset or None
        Linear-Gaussian data used to condition the posterior.
    prior : SpikeSlabPrior
        Point-mass or Gaussian slab; two-sided slabs are not supported here.
    K, burn_in : int
        Retained draws and discarded warm-up sweeps.
    """
    rng = np.random.default_rng(seed)
    if first_half is None:
        if p is None:
            raise ValueError("p is required for the prior-only chain")
        return _prior_only_draws(p, prior, K, burn_in, rng, with_sigma2=True)
    if first_half.kind is not ModelKind.LINEAR:
        raise ValueError("gibbs_linear requires linear-Gaussian data")
    if K < 1:
        raise ValueError("need K >= 1 retained draws")

    point_slab = _check_gibbs_prior(prior)
    X = np.ascontiguousarray(first_half.design)
    y = first_half.response
    n, p_ = X.shape
    XT = np.ascontiguousarray(X.T)

    state = _GibbsState(n, p_, prior, sigma2)
    r = y.copy()
    beta_out = np.empty((K, p_))
    z_out = np.empty((K, p_), dtype=np.uint8)
    traces = {name: [] for name in ("sigma2", "tau2", "theta", "mu")}
    n_clamped = 0
    for it in range(burn_in + K):
        order = rng.permutation(p_)
        u = rng.random(p_)
        gauss = rng.standard_normal(p_)
        w = np.full(n, 1.0 / state.sigma2)
        n_clamped += _spike_slab_sweep(XT, r, w, state.beta, state.z, order, u, gauss,
                                       state.log_prior_odds, state.prior_mode,
                                       state.tau2, state.mu, point_slab)
        state.update_hypers(rng, resid_ss=float(r @ r))
        if it >= burn_in:
            k = it - burn_in
            beta_out[k] = state.beta
            z_out[k] = state.z
            traces["sigma2"].append(state.sigma2)
            traces["tau2"].append(state.tau2)
            traces["theta"].append(state.theta)
            traces["mu"].append(state.mu)
    if n_clamped:
        warnings.warn(f"clamped {n_clamped} inclusion log-odds at +-{LOG_CLAMP:.0f}",
                      RuntimeWarning, stacklevel=2)
    return _pack_draws(beta_out, z_out, burn_in, traces, prior.hyper, with_sigma2=True)


def _truncnorm_draw(m: np.ndarray, sd: np.ndarray, positive: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF truncated-normal draws on the half-line containing the label.

    Accurate in the far tails via the complementary form; the tail mass is
    floored at 1e-300, so draws degrade gracefully once |m|/sd exceeds the
    normal-CDF underflow point (around 38 standard deviations; beyond ~8 the
    conditional distribution is already essentially a point mass at 0).
    """
    v = rng.random(m.shape[0])
    sign = np.where(positive, 1.0, -1.0)
    # P(sign * draw > 0) = Phi(sign * m / sd)
    tail = np.maximum(ndtr(sign * m / sd), 1e-300)
    return m - sign * sd * ndtri(np.maximum((1.0 - v) * tail, 1e-300))


def gibbs_logistic(first_half: Dataset | None, prior: SpikeSlabPrior, K: int = 1000,
                   burn_in: int = 500, seed: int = 0, *, p: int | None = None) -> PosteriorDraws:
    """Gibbs sampler for logistic spike-and-slab via the scaled-t latent model.

    Each observation carries a latent scale ``sig2_i ~ InvGamma(nu/2,
    w^2 nu / 2)`` and a latent Gaussian response truncated to the half-line
    matching the 0/1 label; conditionally on both, the coefficient update is
    the weighted linear sweep.
    """
    rng = np.random.default_rng(seed)
    if first_half is None:
        if p is None:
            raise ValueError("p is required for the prior-only chain")
        return _prior_only_draws(p, prior, K, burn_in, rng, with_sigma2=False)
    if first_half.kind is not ModelKind.LOGISTIC:
        raise ValueError("gibbs_logistic requires binary-response data")
    if K < 1:
        raise ValueError("need K >= 1 retained draws")

    point_slab = _check_gibbs_prior(prior)
    X = np.ascontiguousarray(first_half.design)
    y = first_half.response
    n, p_ = X.shape
    XT = np.ascontiguousarray(X.T)
    positive = y > 0.5

    state = _GibbsState(n, p_, prior, 1.0)
    sig2 = np.full(n, W2_LOGISTIC)
    y_lat = np.where(positive, 0.5, -0.5)
    r = y_lat.copy()  # residual y_lat - X beta, beta = 0 initially
    beta_out = np.empty((K, p_))
    z_out = np.empty((K, p_), dtype=np.uint8)
    traces = {name: [] for name in ("sigma2", "tau2", "theta", "mu")}
    n_clamped = 0
    shape_post = 0.5 * (NU_LOGISTIC + 1.0)
    for it in range(burn_in + K):
        order = rng.permutation(p_)
        u = rng.random(p_)
        gauss = rng.standard_normal(p_)
        n_clamped += _spike_slab_sweep(XT, r, 1.0 / sig2, state.beta, state.z, order, u,
                                       gauss, state.log_prior_odds, state.prior_mode,
                                       state.tau2, state.mu, point_slab)
        # latent block: scales given residuals, then responses given scales
        m = y_lat - r
        rate_post = 0.5 * (W2_LOGISTIC * NU_LOGISTIC + r**2)
        sig2 = rate_post / rng.gamma(shape_post, size=n)
        y_lat = _truncnorm_draw(m, np.sqrt(sig2), positive, rng)
        r = y_lat - m
        state.update_hypers(rng, resid_ss=None)
        if it >= burn_in:
            k = it - burn_in
            beta_out[k] = state.beta
            z_out[k] = state.z
            traces["sigma2"].append(state.sigma2)
            traces["tau2"].append(state.tau2)
            traces["theta"].append(state.theta)
            traces["mu"].append(state.mu)
    if n_clamped:
        warnings.warn(f"clamped {n_clamped} inclusion log-odds at +-{LOG_CLAMP:.0f}",
                      RuntimeWarning, stacklevel=2)
    return _pack_draws(beta_out, z_out, burn_in, traces, prior.hyper, with_sigma2=False)
