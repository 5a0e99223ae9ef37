"""Adaptive data splitting as optional stopping over the split-ratio filtration.

Revealing first-half samples ratio by ratio turns the split ratio into a
stopping time.  For each feature and candidate ratio the reward is the
conditional expectation, given the revealed half, of a monotone weight of
the mirror magnitude (default: sigmoid), estimated by posterior-predictive
Monte Carlo.  Stopping rules:

* a fixed ratio (degenerate stopping time);
* first passage over a threshold in (0.5, 1);
* the hitting time of the Snell envelope, computed exactly on small trees
  and finite-state chains, and approximated for the real pipeline by
  Longstaff-Schwartz least squares across features-as-trajectories.

Decisions are computed in a forward pass that never reads responses beyond
the largest candidate ratio, so they remain adapted to the revealed data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .datamodel import (Dataset, MirrorKind, MirrorVector, ModelKind, SpikeSlabPrior,
                        SplitPlan, derive_seed, split_at)
from .errors import InvalidThresholdError, TreeTooLargeError
from ._gauss import mixture_log_ratio, mixture_log_ratio_iso
from .estimators import SplitEstimate, logistic_mle, ols_fit
from .mirrors import bayes_optimal
from .samplers import (NormalMeansPosterior, PosteriorDraws, _posterior_from_sufficient,
                       gibbs_linear, gibbs_logistic, inclusion_rates)

DEFAULT_RATIOS = tuple(np.round(np.arange(1, 9) * 0.1, 1))


@dataclass(frozen=True)
class RewardPath:
    """Per-feature reward and state trajectories across the candidate ratios.

    ``rewards[t, j]`` estimates the expected weighted mirror magnitude of
    feature ``j`` were it to stop at ratio index ``t``; ``state[t, j]``
    collects the regression covariates for the continuation-value fit
    (reward, posterior-mean summary, posterior-uncertainty summary).  The
    per-ratio posteriors and screens are cached for reuse at assembly time.
    """

    rewards: np.ndarray          # (T, p)
    state: np.ndarray            # (T, p, s)
    ratios: tuple[float, ...]
    k_pred: int
    seed: int
    posteriors: tuple = field(default=(), repr=False)
    screens: tuple = field(default=(), repr=False)

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_features(self) -> int:
        return self.rewards.shape[1]


@dataclass(frozen=True)
class StoppingDecision:
    """Per-feature stopping index into the candidate ratios."""

    tau: np.ndarray              # (p,) ratio indices
    rule: str
    ridge_fallback: bool = False

    @classmethod
    def fixed(cls, t: int, p: int) -> "StoppingDecision":
        return cls(tau=np.full(p, t, dtype=np.intp), rule=f"fixed@{t}")


def _reward_path_normal_means(data: Dataset, plan: SplitPlan, prior: SpikeSlabPrior,
                              omega: Callable, k_pred: int, seed: int) -> RewardPath:
    rng = np.random.default_rng(seed)
    perm_resp = data.response[plan.permutation]
    csum = np.cumsum(perm_resp, axis=0)
    p, d = data.p, data.d
    T = plan.n_ratios
    rewards = np.empty((T, p))
    state = np.empty((T, p, 3))
    posteriors = []
    for t in range(T):
        n1 = plan.first_size(t)
        n2 = data.n - n1
        ybar1 = csum[n1 - 1] / n1
        post = _posterior_from_sufficient(ybar1, n1, prior)
        posteriors.append(post)
        mu = post.sample_means(k_pred, rng)                       # (p, K, d)
        ybar2 = mu + rng.standard_normal((p, k_pred, d)) / np.sqrt(n2)
        m = mixture_log_ratio_iso(ybar2, post.log_w[:, None, :], post.means[:, None, :, :],
                                  post.variances[None, None, :] + 1.0 / n2)
        rewards[t] = omega(np.abs(m)).mean(axis=1)
        state[t, :, 0] = rewards[t]
        state[t, :, 1] = np.linalg.norm(post.mean(), axis=1)
        state[t, :, 2] = np.sqrt(np.maximum(post.total_variance(), 0.0))
    return RewardPath(rewards=rewards, state=state, ratios=plan.ratios, k_pred=k_pred,
                      seed=seed, posteriors=tuple(posteriors))


def _second_half_scale(data: Dataset, rows2: np.ndarray, screen: np.ndarray,
                       draws: PosteriorDraws) -> np.ndarray:
    """Adapted variance factors for the unseen second-half estimate.

    Uses the second-half design only: inverse Gram diagonal for linear data,
    inverse expected information at the posterior mean for logistic data
    (the responses of those rows stay hidden from the decision maker).
    """
    X2 = data.design[np.ix_(rows2, screen)]
    if data.kind is ModelKind.LINEAR:
        G = X2.T @ X2
    else:
        eta = X2 @ draws.beta[:, screen].mean(axis=0)
        w = np.maximum(expit(eta) * (1.0 - expit(eta)), 1e-6)
        G = (X2 * w[:, None]).T @ X2
    G = G + 1e-10 * np.trace(G) / max(G.shape[0], 1) * np.eye(G.shape[0])
    return np.diag(np.linalg.inv(G))


def _reward_path_regression(data: Dataset, plan: SplitPlan, prior: SpikeSlabPrior,
                            omega: Callable, k_pred: int, seed: int,
                            gibbs_draws: int, gibbs_burn: int) -> RewardPath:
    rng = np.random.default_rng(seed)
    p = data.p
    T = plan.n_ratios
    sampler = gibbs_linear if data.kind is ModelKind.LINEAR else gibbs_logistic
    rewards = np.full((T, p), 0.5)
    state = np.zeros((T, p, 3))
    posteriors, screens = [], []
    for t in range(T):
        first, _ = split_at(data, plan, t)
        rows2 = plan.second_rows(t)
        draws = sampler(first, prior, K=gibbs_draws, burn_in=gibbs_burn,
                        seed=derive_seed(seed, 1 + t))
        posteriors.append(draws)
        screen = prescreen(draws, n_keep=len(rows2) // 2)
        screens.append(screen)
        omega2 = _second_half_scale(data, rows2, screen, draws)
        sigma2 = draws.sigma2_mean(1.0)
        scale2 = sigma2 * omega2 if data.kind is ModelKind.LINEAR else omega2

        beta_s = draws.beta[:, screen]                            # (K, m)
        k_idx = np.arange(k_pred) % draws.n_draws
        pred = beta_s[k_idx].T + np.sqrt(scale2)[:, None] * rng.standard_normal(
            (screen.size, k_pred))                                # (m, K_pred)
        m_vals = np.empty_like(pred)
        log_w = np.zeros(draws.n_draws)
        for lo in range(0, k_pred, 64):                           # bound peak memory
            chunk = pred[:, lo:lo + 64]
            m_vals[:, lo:lo + 64] = mixture_log_ratio(
                chunk, log_w, beta_s.T[:, None, :],
                np.broadcast_to(scale2[:, None, None], (screen.size, 1, draws.n_draws)))
        rewards[t, screen] = omega(np.abs(m_vals)).mean(axis=1)
        state[t, screen, 0] = rewards[t, screen]
        state[t, :, 1] = np.abs(draws.beta.mean(axis=0))
        state[t, :, 2] = np.sqrt(draws.beta.var(axis=0))
        state[t, ~np.isin(np.arange(p), screen), 0] = 0.5
    return RewardPath(rewards=rewards, state=state, ratios=plan.ratios, k_pred=k_pred,
                      seed=seed, posteriors=tuple(posteriors), screens=tuple(screens))


def reward_path(data: Dataset, plan: SplitPlan, prior: SpikeSlabPrior,
                omega: Callable = expit, k_pred: int = 200, seed: int = 0,
                gibbs_draws: int = 300, gibbs_burn: int = 150) -> RewardPath:
    """Estimate the stopping rewards of every feature at every candidate ratio.

    At each ratio the posterior is refreshed on the revealed half, ``k_pred``
    second-half summary statistics are drawn from the posterior predictive,
    and the reward is the average of ``omega`` (monotone nondecreasing;
    default sigmoid) applied to the mirror magnitudes of those draws.
    """
    if data.kind is ModelKind.NORMAL_MEANS:
        return _reward_path_normal_means(data, plan, prior, omega, k_pred, seed)
    return _reward_path_regression(data, plan, prior, omega, k_pred, seed,
                                   gibbs_draws, gibbs_burn)


def prescreen(draws: PosteriorDraws, n_keep: int) -> np.ndarray:
    """Indices of the ``n_keep`` features with the highest inclusion rates.

    Ties break toward the smaller feature index; if fewer features exist
    they are all kept.
    """
    rates = inclusion_rates(draws)
    if n_keep >= rates.size:
        return np.arange(rates.size, dtype=np.intp)
    order = np.argsort(-rates, kind="stable")
    return np.sort(order[:n_keep])


def adms_threshold(path: RewardPath, ell: float) -> StoppingDecision:
    """First-passage rule: stop at the first ratio whose reward exceeds ``ell``."""
    if not 0.5 < ell < 1.0:
        raise InvalidThresholdError(f"threshold must lie in (0.5, 1), got {ell}")
    above = path.rewards > ell                                    # (T, p)
    hit = above.any(axis=0)
    tau = np.where(hit, above.argmax(axis=0), path.n_steps - 1).astype(np.intp)
    return StoppingDecision(tau=tau, rule=f"threshold@{ell:g}")


@dataclass(frozen=True)
class StoppingTree:
    """Finite filtration with explicit rewards and transition probabilities.

    Nodes are numbered so parents precede children (node 0 is the root);
    leaves have empty child lists.  ``probs[i]`` are the transition
    probabilities to ``children[i]`` and must sum to one.
    """

    rewards: np.ndarray
    children: tuple[tuple[int, ...], ...]
    probs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        if len(self.children) != self.rewards.shape[0] or len(self.probs) != len(self.children):
            raise ValueError("children and probs must align with rewards")
        for i, (kids, pr) in enumerate(zip(self.children, self.probs)):
            if len(kids) != len(pr):
                raise ValueError(f"node {i}: children/probs length mismatch")
            if kids and abs(sum(pr) - 1.0) > 1e-9:
                raise ValueError(f"node {i}: transition probabilities must sum to 1")
            if any(c <= i for c in kids):
                raise ValueError("nodes must be numbered parent-before-child")

    @property
    def n_nodes(self) -> int:
        return self.rewards.shape[0]


@dataclass(frozen=True)
class SnellSolution:
    """Envelope values, continuation values and the induced stopping rule."""

    q_values: np.ndarray
    continuation: np.ndarray
    stop: np.ndarray
    optimal_value: float


def snell_exact(tree: StoppingTree, max_nodes: int = 1_000_000) -> SnellSolution:
    """Exact backward induction of the smallest dominating supermartingale.

    ``q = max(reward, expected next q)`` node by node; the optimal rule stops
    at the first node whose reward attains its envelope value.
    """
    n = tree.n_nodes
    if n > max_nodes:
        raise TreeTooLargeError(f"tree has {n} nodes, cap is {max_nodes}")
    q = tree.rewards.copy()
    cont = np.full(n, -np.inf)
    for i in range(n - 1, -1, -1):
        kids = tree.children[i]
        if kids:
            cont[i] = sum(p_c * q[c] for c, p_c in zip(kids, tree.probs[i]))
            q[i] = max(tree.rewards[i], cont[i])
    stop = tree.rewards >= q
    value = np.empty(n)
    for i in range(n - 1, -1, -1):
        if stop[i]:
            value[i] = tree.rewards[i]
        else:
            value[i] = sum(p_c * value[c] for c, p_c in zip(tree.children[i], tree.probs[i]))
    return SnellSolution(q_values=q, continuation=cont, stop=stop,
                         optimal_value=float(value[0]))


def chain_envelope(transition: np.ndarray, rewards: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact envelope for a time-homogeneous finite-state chain.

    ``rewards[t, s]`` is the stopping reward in state ``s`` at step ``t``.
    Returns (q_values, continuation) of shape (T, S); the optimal expected
    reward from an initial distribution ``pi`` is ``pi @ q_values[0]``.
    """
    P = np.asarray(transition, dtype=float)
    R = np.asarray(rewards, dtype=float)
    T, _ = R.shape
    q = R.copy()
    cont = np.full_like(R, -np.inf)
    for t in range(T - 2, -1, -1):
        cont[t] = P @ q[t + 1]
        q[t] = np.maximum(R[t], cont[t])
    return q, cont


def simulate_chain_path(transition: np.ndarray, rewards: np.ndarray, init: np.ndarray,
                        n_traj: int, seed: int = 0) -> tuple[RewardPath, np.ndarray]:
    """Sample trajectories of a finite-state chain as a reward path.

    The single state feature is the state id; returns the path and the
    (T, n_traj) state index array for exact-rule evaluations.
    """
    rng = np.random.default_rng(seed)
    P = np.asarray(transition, dtype=float)
    R = np.asarray(rewards, dtype=float)
    T, n_states = R.shape
    states = np.empty((T, n_traj), dtype=np.intp)
    states[0] = rng.choice(n_states, size=n_traj, p=init)
    cum = np.cumsum(P, axis=1)
    for t in range(1, T):
        u = rng.random(n_traj)
        states[t] = (u[:, None] > cum[states[t - 1]]).sum(axis=1)
    path_rewards = R[np.arange(T)[:, None], states]
    state_feats = states[:, :, None].astype(float)
    path = RewardPath(rewards=path_rewards, state=state_feats,
                      ratios=tuple(np.linspace(0.1, 0.9, T)), k_pred=0, seed=seed)
    return path, states


def _poly_basis(state_t: np.ndarray) -> np.ndarray:
    """Affine-plus-squares feature map (intercept added by the fitter)."""
    return np.concatenate([state_t, state_t**2], axis=1)


def _lasso_cd(X: np.ndarray, y: np.ndarray, lam: float, n_iter: int = 1000,
              tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Coordinate descent for ||y - b0 - X b||^2 + lam * ||b||_1 (b0 free)."""
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    ss = (Xc**2).sum(axis=0)
    live = ss > 0.0
    beta = np.zeros(X.shape[1])
    r = yc.copy()
    for _ in range(n_iter):
        delta = 0.0
        for j in np.flatnonzero(live):
            rho = Xc[:, j] @ r + ss[j] * beta[j]
            bj = np.sign(rho) * max(abs(rho) - 0.5 * lam, 0.0) / ss[j]
            step = bj - beta[j]
            if step != 0.0:
                r -= step * Xc[:, j]
                beta[j] = bj
                delta = max(delta, abs(step))
        if delta < tol:
            break
    return beta, float(ym - xm @ beta)


def _fit_continuation(design: np.ndarray, target: np.ndarray,
                      lam: float) -> tuple[np.ndarray, bool]:
    """Fitted continuation values; falls back to ridge if unpenalized and rank-deficient."""
    if lam > 0.0:
        beta, b0 = _lasso_cd(design, target, lam)
        return design @ beta + b0, False
    Xd = np.column_stack([np.ones(design.shape[0]), design])
    sol, res, rank, _ = np.linalg.lstsq(Xd, target, rcond=None)
    if rank < Xd.shape[1]:
        G = Xd.T @ Xd
        G += 1e-8 * np.trace(G) / G.shape[0] * np.eye(G.shape[0])
        sol = np.linalg.solve(G, Xd.T @ target)
        return Xd @ sol, True
    return Xd @ sol, False


def adms_snell(path: RewardPath, basis: Callable[[np.ndarray], np.ndarray] | None = None,
               l1_penalty: float = 1.0) -> StoppingDecision:
    """Longstaff-Schwartz approximation of the envelope hitting time.

    Features act as the Monte-Carlo trajectories.  Backwards from the last
    ratio, the next-step value is projected onto basis functions of the
    current state by L1-penalized least squares, the value is the max of the
    immediate reward and the fitted continuation, and the forward pass stops
    each feature the first time its reward reaches the fitted continuation.
    """
    if basis is None:
        basis = _poly_basis
    R = path.rewards
    T, p = R.shape
    q_hat = R[T - 1].copy()
    cont = np.full((T, p), -np.inf)
    fallback = False
    for t in range(T - 2, -1, -1):
        design = basis(path.state[t])
        cont[t], used_ridge = _fit_continuation(design, q_hat, l1_penalty)
        fallback = fallback or used_ridge
        q_hat = np.maximum(R[t], cont[t])
    stop = R >= cont
    tau = stop.argmax(axis=0).astype(np.intp)  # stop[T-1] is all True
    return StoppingDecision(tau=tau, rule="snell", ridge_fallback=fallback)


def _normal_means_mirror_at(data: Dataset, plan: SplitPlan, prior: SpikeSlabPrior,
                            t: int, cached: NormalMeansPosterior | None) -> np.ndarray:
    first, second = split_at(data, plan, t)
    post = cached if cached is not None else _posterior_from_sufficient(
        first.response.mean(axis=0), first.n, prior)
    return bayes_optimal(post, second).values


def assemble_adaptive_mirror(data: Dataset, plan: SplitPlan, prior: SpikeSlabPrior,
                             decision: StoppingDecision,
                             path: RewardPath | None = None,
                             sigma2: float | None = None) -> MirrorVector:
    """Bayes-optimal mirror statistic of each feature at its own stopping index.

    At most one posterior/second-half fit per distinct stopping index is
    performed and shared across the features that stop there (reusing the
    cached per-ratio posteriors of ``path`` when provided).  For regression
    kinds a feature outside the screen at its stopping index keeps value 0.
    """
    p = data.p
    tau = np.asarray(decision.tau, dtype=np.intp)
    values = np.zeros(p)
    ratio_used = np.asarray(plan.ratios, dtype=float)[tau]
    active = np.ones(p, dtype=bool)
    approx = data.kind is ModelKind.LOGISTIC

    for t in np.unique(tau):
        members = np.flatnonzero(tau == t)
        if data.kind is ModelKind.NORMAL_MEANS:
            cached = path.posteriors[t] if path is not None and path.posteriors else None
            values[members] = _normal_means_mirror_at(data, plan, prior, int(t), cached)[members]
            continue
        first, second = split_at(data, plan, int(t))
        if path is not None and path.posteriors:
            draws = path.posteriors[t]
            screen = path.screens[t]
        else:
            sampler = gibbs_linear if data.kind is ModelKind.LINEAR else gibbs_logistic
            draws = sampler(first, prior, K=300, burn_in=150,
                            seed=derive_seed(plan.seed, 1 + int(t)))
            screen = prescreen(draws, n_keep=second.n // 2)
        fit = ols_fit if data.kind is ModelKind.LINEAR else logistic_mle
        est = fit(second, screen)
        mv = bayes_optimal(draws, est, sigma2=sigma2, p_total=p)
        values[members] = mv.values[members]
        active[members] &= mv.active[members]

    values[~active] = 0.0
    return MirrorVector(values=values, kind=MirrorKind.ADAPTIVE, ratio_used=ratio_used,
                        active=active, approx_likelihood=approx)
