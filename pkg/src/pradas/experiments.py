"""Data generators, end-to-end selection pipelines and Monte-Carlo studies.

Scenario presets mirror the simulation designs used throughout: replicated
normal-means problems with well-specified and misspecified working priors,
block-correlated linear and logistic regressions, and sparse-signal
(rare/weak) designs for the Hamming-error comparisons.  Replications run
concurrently with derived seeds; aggregation is a deterministic reduction
independent of completion order.
"""

from __future__ import annotations

import enum
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import adms, baselines, mirrors, seqstep
from .datamodel import (Dataset, Metrics, ModelKind, SlabKind, SlabSpec, SpikeSlabPrior,
                        check_level, derive_seed, make_split_plan, split_at)
from .errors import InvalidSpecError
from .estimators import full_data_pvalues, logistic_mle, ols_fit
from .samplers import gibbs_linear, gibbs_logistic, normal_means_posterior


class Scenario(enum.Enum):
    NORMAL_MEANS_ONE_SIDED = "NormalMeansOneSided"
    NORMAL_MEANS_TWO_SIDED = "NormalMeansTwoSided"
    NORMAL_MEANS_P0_MIS = "NormalMeansP0Mis"
    NORMAL_MEANS_MU_MIS = "NormalMeansMuMis"
    LINEAR_BLOCK = "LinearBlock"
    LOGISTIC_BLOCK = "LogisticBlock"
    RARE_WEAK_BLOCK = "RareWeakBlock"
    RARE_WEAK_GROUPED = "RareWeakGrouped"
    RARE_WEAK_MISSPECIFIED = "RareWeakMisspecified"


_NORMAL_MEANS_SCENARIOS = {
    Scenario.NORMAL_MEANS_ONE_SIDED, Scenario.NORMAL_MEANS_TWO_SIDED,
    Scenario.NORMAL_MEANS_P0_MIS, Scenario.NORMAL_MEANS_MU_MIS,
}
_RARE_WEAK_SCENARIOS = {
    Scenario.RARE_WEAK_BLOCK, Scenario.RARE_WEAK_GROUPED, Scenario.RARE_WEAK_MISSPECIFIED,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to draw one replication of a scenario."""

    scenario: Scenario
    n: int = 20
    p: int = 1000
    d: int = 5
    rho: float = 0.0
    block_size: int = 10
    true_prior: SpikeSlabPrior | None = None
    working_prior: SpikeSlabPrior | None = None
    delta: float = 3.0
    delta_mu: float = 0.0
    expected_signals: int = 100
    theta_rw: float = 0.5
    r_rw: float = 1.5
    r_rw_working: float | None = None
    seed: int = 0

    def __post_init__(self):
        if abs(self.rho) >= 1.0:
            raise InvalidSpecError(f"|rho| must be below 1, got {self.rho}")
        if self.scenario in _RARE_WEAK_SCENARIOS and not (0.0 < self.theta_rw < 1.0):
            raise InvalidSpecError("rare/weak sparsity exponent must lie in (0, 1)")

    @property
    def eps_p(self) -> float:
        return self.p ** (-self.theta_rw)

    @property
    def tau_p(self) -> float:
        return float(np.sqrt(2.0 * self.r_rw * np.log(self.p)))

    @property
    def tau_p_working(self) -> float:
        r = self.r_rw if self.r_rw_working is None else self.r_rw_working
        return float(np.sqrt(2.0 * r * np.log(self.p)))


def scenario_spec(scenario: Scenario | str, **overrides) -> GeneratorSpec:
    """Preset generator spec for a named scenario (fields overridable)."""
    if isinstance(scenario, str):
        scenario = Scenario(scenario)
    base: dict = {"scenario": scenario}
    if scenario is Scenario.NORMAL_MEANS_ONE_SIDED:
        prior = SpikeSlabPrior(0.7, SlabSpec(SlabKind.GAUSSIAN, 0.4, 0.1**2))
        base.update(n=20, p=1000, d=5, true_prior=prior, working_prior=prior)
    elif scenario is Scenario.NORMAL_MEANS_TWO_SIDED:
        prior = SpikeSlabPrior(0.8, SlabSpec(SlabKind.TWO_SIDED, 0.6, 0.1**2))
        base.update(n=20, p=1000, d=5, true_prior=prior, working_prior=prior)
    elif scenario is Scenario.NORMAL_MEANS_P0_MIS:
        true = SpikeSlabPrior(0.85, SlabSpec(SlabKind.TWO_SIDED, 0.6, 0.15**2))
        work = SpikeSlabPrior(0.6, SlabSpec(SlabKind.TWO_SIDED, 0.6, 0.15**2))
        base.update(n=20, p=1000, d=5, true_prior=true, working_prior=work)
    elif scenario is Scenario.NORMAL_MEANS_MU_MIS:
        true = SpikeSlabPrior(0.8, SlabSpec(SlabKind.TWO_SIDED, 0.8, 0.15**2))
        work = SpikeSlabPrior(0.8, SlabSpec(SlabKind.TWO_SIDED, 0.5, 0.15**2))
        base.update(n=20, p=1000, d=5, true_prior=true, working_prior=work)
    elif scenario is Scenario.LINEAR_BLOCK:
        base.update(n=1200, p=2000, rho=0.5, expected_signals=100, delta=3.0, delta_mu=0.0)
    elif scenario is Scenario.LOGISTIC_BLOCK:
        base.update(n=400, p=400, rho=0.5, expected_signals=30, delta=1.5, delta_mu=0.0)
    else:
        base.update(p=2000, theta_rw=0.5, r_rw=1.5)
        if scenario is Scenario.RARE_WEAK_BLOCK:
            base.update(rho=0.7)
    base.update(overrides)
    return GeneratorSpec(**base)


def _regression_priors(spec: GeneratorSpec) -> SpikeSlabPrior:
    """Spike-and-slab prior implied by the regression signal scales."""
    p0 = 1.0 - spec.expected_signals / spec.p
    if spec.scenario is Scenario.LOGISTIC_BLOCK:
        return SpikeSlabPrior(p0, SlabSpec(SlabKind.GAUSSIAN, 0.0, spec.delta**2))
    unit = float(np.sqrt(np.log(spec.p) / spec.n))
    loc = spec.delta_mu * unit
    sd = spec.delta * unit
    if sd == 0.0:
        if loc == 0.0:
            raise InvalidSpecError("need delta > 0 or delta_mu != 0 for a nontrivial slab")
        return SpikeSlabPrior(p0, SlabSpec(SlabKind.POINT_MASS, loc))
    return SpikeSlabPrior(p0, SlabSpec(SlabKind.GAUSSIAN, loc, sd**2))


def _block_covariance(p: int, rho: float, block: int) -> np.ndarray:
    lag = np.abs(np.subtract.outer(np.arange(block), np.arange(block)))
    cov = rho * np.maximum(0.0, 1.0 - lag / block)
    np.fill_diagonal(cov, 1.0)
    return cov


def _sample_block_design(rng: np.random.Generator, n: int, p: int, rho: float,
                         block: int) -> np.ndarray:
    X = rng.standard_normal((n, p))
    if rho == 0.0:
        return X
    cov = _block_covariance(p, rho, min(block, p))
    L = linalg.cholesky(cov, lower=True)
    b = cov.shape[0]
    for start in range(0, p, b):
        stop = min(start + b, p)
        X[:, start:stop] = X[:, start:stop] @ L[: stop - start, : stop - start].T
    return X


def _draw_slab(rng: np.random.Generator, slab: SlabSpec, size: int) -> np.ndarray:
    vals = np.full(size, slab.mu0)
    if slab.kind is SlabKind.TWO_SIDED:
        vals = vals * rng.choice((-1.0, 1.0), size=size)
    if slab.kind is not SlabKind.POINT_MASS:
        vals = vals + np.sqrt(slab.tau2) * rng.standard_normal(size)
    return vals


def generate(spec: GeneratorSpec) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Draw one dataset: returns (data, true support indices, true coefficients).

    Rare/weak scenarios operate at the level of half-data coefficient
    estimates with idealized Grams; use :func:`draw_rare_weak` for those.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.scenario in _NORMAL_MEANS_SCENARIOS:
        prior = spec.true_prior
        if prior is None:
            raise InvalidSpecError("normal-means scenarios need an explicit true prior")
        signal = rng.random(spec.p) >= prior.p0
        mu = np.zeros((spec.p, spec.d))
        idx = np.flatnonzero(signal)
        if idx.size:
            slab = prior.slab
            loc = np.full(idx.size, slab.mu0)
            if slab.kind is SlabKind.TWO_SIDED:
                loc = loc * rng.choice((-1.0, 1.0), size=idx.size)
            mu[idx] = loc[:, None]
            if slab.kind is not SlabKind.POINT_MASS:
                mu[idx] += np.sqrt(slab.tau2) * rng.standard_normal((idx.size, spec.d))
        y = mu[None, :, :] + rng.standard_normal((spec.n, spec.p, spec.d))
        data = Dataset(ModelKind.NORMAL_MEANS, y)
        return data, idx, mu

    if spec.scenario in (Scenario.LINEAR_BLOCK, Scenario.LOGISTIC_BLOCK):
        prior = spec.true_prior or _regression_priors(spec)
        X = _sample_block_design(rng, spec.n, spec.p, spec.rho, spec.block_size)
        signal = rng.random(spec.p) < (1.0 - prior.p0)
        beta = np.zeros(spec.p)
        idx = np.flatnonzero(signal)
        if idx.size:
            beta[idx] = _draw_slab(rng, prior.slab, idx.size)
        if spec.scenario is Scenario.LINEAR_BLOCK:
            y = X @ beta + rng.standard_normal(spec.n)
            data = Dataset(ModelKind.LINEAR, y, X)
        else:
            from scipy.special import expit

            y = (rng.random(spec.n) < expit(X @ beta)).astype(float)
            data = Dataset(ModelKind.LOGISTIC, y, X)
        return data, idx, beta

    raise InvalidSpecError(
        f"{spec.scenario.value} generates estimate pairs, not raw data; use draw_rare_weak")


def draw_rare_weak(spec: GeneratorSpec, rng: np.random.Generator):
    """Half-data coefficient estimates under the idealized rare/weak designs.

    Each half Gram is fixed at its idealized form (I/2, or (1/2) diag(B, ...)
    for the block scenario), under which the OLS estimates of the two halves
    are exactly ``N(beta, 2 G_unit^{-1})`` and can be drawn directly.
    Returns ``(beta, beta1_hat, beta2_hat)``.
    """
    if spec.scenario not in _RARE_WEAK_SCENARIOS:
        raise InvalidSpecError("draw_rare_weak requires a rare/weak scenario")
    p = spec.p
    if p % 2 != 0:
        raise InvalidSpecError("rare/weak designs use feature pairs; p must be even")
    eps, tau = spec.eps_p, spec.tau_p
    if spec.scenario is Scenario.RARE_WEAK_GROUPED:
        pair = (rng.random(p // 2) < eps) * tau
        beta = np.repeat(pair, 2)
    else:
        beta = (rng.random(p) < eps) * tau
    if spec.scenario is Scenario.RARE_WEAK_BLOCK and spec.rho != 0.0:
        B = np.array([[1.0, spec.rho], [spec.rho, 1.0]])
        L = linalg.cholesky(2.0 * np.linalg.inv(B), lower=True)
        z1 = rng.standard_normal((p // 2, 2)) @ L.T
        z2 = rng.standard_normal((p // 2, 2)) @ L.T
        return beta, beta + z1.ravel(), beta + z2.ravel()
    s = np.sqrt(2.0)
    return beta, beta + s * rng.standard_normal(p), beta + s * rng.standard_normal(p)


@dataclass(frozen=True)
class MethodSpec:
    """A selection method plus its tuning parameters."""

    name: str
    ratio: float | None = None
    ell: float | None = None

    _VALID = ("SignSum", "OMS", "ADMSThr", "ADMSSnell", "BH", "Lfdr")

    def __post_init__(self):
        if self.name not in self._VALID:
            raise InvalidSpecError(f"unknown method {self.name!r}; expected one of {self._VALID}")
        if self.name in ("SignSum", "OMS") and self.ratio is None:
            object.__setattr__(self, "ratio", 0.5)
        if self.name == "ADMSThr" and self.ell is None:
            object.__setattr__(self, "ell", 0.7)

    @property
    def label(self) -> str:
        if self.name in ("SignSum", "OMS"):
            return f"{self.name}({self.ratio:g})"
        if self.name == "ADMSThr":
            return f"ADMSThr({self.ell:g})"
        return self.name


@dataclass(frozen=True)
class RunOptions:
    """Sampler and stopping-rule settings shared by a batch of runs."""

    gibbs_draws: int = 1000
    gibbs_burn: int = 500
    k_pred: int = 200
    ratios: tuple[float, ...] = adms.DEFAULT_RATIOS
    l1_penalty: float = 1.0
    adms_gibbs_draws: int = 300
    adms_gibbs_burn: int = 150


@dataclass(frozen=True)
class ReplicationResult:
    """Outcome of one method on one replication."""

    method: str
    metrics: Metrics
    selected: np.ndarray
    tau_q: float | None
    wall_ms: float
    stopping_ratios: np.ndarray | None = None
    rep: int = 0


def _fixed_split_mirror(data, prior, method, seed, options):
    plan = make_split_plan(data.n, [method.ratio], derive_seed(seed, 0))
    first, second = split_at(data, plan, 0)
    if data.kind is ModelKind.NORMAL_MEANS:
        if method.name == "SignSum":
            return mirrors.sign_sum_means(first.response.mean(axis=0),
                                          second.response.mean(axis=0), method.ratio)
        post = normal_means_posterior(first, prior)
        return mirrors.bayes_optimal(post, second)

    sampler = gibbs_linear if data.kind is ModelKind.LINEAR else gibbs_logistic
    draws = sampler(first, prior, K=options.gibbs_draws, burn_in=options.gibbs_burn,
                    seed=derive_seed(seed, 1))
    screen = adms.prescreen(draws, n_keep=second.n // 2)
    fit = ols_fit if data.kind is ModelKind.LINEAR else logistic_mle
    est2 = fit(second, screen)
    if method.name == "SignSum":
        est1 = fit(first, screen)
        return mirrors.sign_sum(est1, est2, p_total=data.p)
    return mirrors.bayes_optimal(draws, est2, p_total=data.p)


def run_method(data: Dataset, support: np.ndarray, method: MethodSpec,
               prior: SpikeSlabPrior, q: float, seed: int,
               options: RunOptions = RunOptions()) -> ReplicationResult:
    """Full pipeline for one method on one dataset, scored against ``support``.

    Mirror methods split (fixed or adaptive), prescreen regression features
    by first-half inclusion rates, fit both halves, form the mirror
    statistic and apply the threshold search; BH and Lfdr run their
    respective baselines.
    """
    check_level(q)
    t0 = time.perf_counter()
    stopping_ratios = None
    tau_q: float | None = None

    if method.name == "BH":
        report = full_data_pvalues(data)
        selected = baselines.bh_select(report.pvalues, q)
    elif method.name == "Lfdr":
        if data.kind is not ModelKind.NORMAL_MEANS:
            raise InvalidSpecError("the oracle Lfdr baseline requires normal-means data")
        # benchmark on the balanced inference half, like the split-based methods
        plan = make_split_plan(data.n, [0.5], derive_seed(seed, 0))
        first, _ = split_at(data, plan, 0)
        selected = baselines.lfdr_select(baselines.lfdr_normal_means(first, prior), q)
    elif method.name in ("SignSum", "OMS"):
        mv = _fixed_split_mirror(data, prior, method, seed, options)
        sel = seqstep.select(mv, q)
        selected, tau_q = sel.selected, sel.tau_q
    else:
        plan = make_split_plan(data.n, options.ratios, derive_seed(seed, 0))
        path = adms.reward_path(data, plan, prior, k_pred=options.k_pred,
                                seed=derive_seed(seed, 2),
                                gibbs_draws=options.adms_gibbs_draws,
                                gibbs_burn=options.adms_gibbs_burn)
        if method.name == "ADMSThr":
            decision = adms.adms_threshold(path, method.ell)
        else:
            decision = adms.adms_snell(path, l1_penalty=options.l1_penalty)
        mv = adms.assemble_adaptive_mirror(data, plan, prior, decision, path=path)
        stopping_ratios = mv.ratio_used
        sel = seqstep.select(mv, q)
        selected, tau_q = sel.selected, sel.tau_q

    wall_ms = (time.perf_counter() - t0) * 1e3
    return ReplicationResult(method=method.label,
                             metrics=Metrics.from_selection(selected, support),
                             selected=np.asarray(selected, dtype=np.intp),
                             tau_q=tau_q, wall_ms=wall_ms,
                             stopping_ratios=stopping_ratios)


def _thread_cap(requested: int | None) -> int:
    cap = os.environ.get("PRADAS_THREADS")
    n = requested if requested is not None else min(os.cpu_count() or 1, 8)
    if cap is not None:
        n = min(n, max(int(cap), 1))
    return max(n, 1)


def run_many(spec: GeneratorSpec, methods: list[MethodSpec], q: float, replications: int,
             seed: int, options: RunOptions = RunOptions(),
             n_threads: int | None = None) -> list[ReplicationResult]:
    """Replicated runs of several methods on fresh datasets, in parallel.

    Each replication draws its own dataset from a derived seed and runs every
    method on it; method seeds derive from the replication seed and the
    method label, so results do not depend on scheduling or method order.
    """

    def one_rep(rep: int) -> list[ReplicationResult]:
        rep_seed = derive_seed(seed, rep)
        data, support, _ = generate(replace(spec, seed=rep_seed))
        out = []
        for m in methods:
            mseed = derive_seed(rep_seed, zlib.crc32(m.label.encode()))
            res = run_method(data, support, m, spec.working_prior or _regression_priors(spec),
                             q, mseed, options)
            out.append(replace(res, rep=rep))
        return out

    workers = _thread_cap(n_threads)
    if workers == 1 or replications == 1:
        batches = [one_rep(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(one_rep, range(replications)))
    return [res for batch in batches for res in batch]


def aggregate(results: list[ReplicationResult]) -> list[dict]:
    """Per-method means and standard errors of FDP and power, sorted by label."""
    by_method: dict[str, list[ReplicationResult]] = {}
    for res in results:
        by_method.setdefault(res.method, []).append(res)

    def mean_se(vals: np.ndarray) -> tuple[float, float]:
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        return m, se

    rows = []
    for label in sorted(by_method):
        group = by_method[label]
        fdp_m, fdp_se = mean_se(np.array([g.metrics.fdp for g in group]))
        pow_m, pow_se = mean_se(np.array([g.metrics.power for g in group]))
        rows.append({
            "method": label, "n_reps": len(group),
            "fdp_mean": fdp_m, "fdp_se": fdp_se,
            "power_mean": pow_m, "power_se": pow_se,
            "n_selected_mean": float(np.mean([g.metrics.tp + g.metrics.fp for g in group])),
        })
    return rows


_RW_THRESHOLD_SCALE = {"sign_sum": 0.5, "marginal": 1.0, "bayes": 1.0}


def _rw_statistic(kind: str, spec: GeneratorSpec, beta1, beta2) -> np.ndarray:
    if kind == "sign_sum":
        return np.sign(beta1 * beta2) * (np.abs(beta1) + np.abs(beta2))
    eps = spec.eps_p
    tau = spec.tau_p_working
    if kind == "marginal" or spec.scenario is Scenario.RARE_WEAK_MISSPECIFIED:
        omega = 1.0 / (1.0 - spec.rho**2) if spec.scenario is Scenario.RARE_WEAK_BLOCK else 1.0
        lo = np.log(eps) - np.log1p(-eps) - tau * (tau - 2.0 * beta1) / (4.0 * omega)
        return (np.logaddexp(0.0, lo - tau * (tau - 2.0 * beta2) / (4.0 * omega))
                - np.logaddexp(0.0, lo - tau * (tau + 2.0 * beta2) / (4.0 * omega)))
    if spec.scenario is Scenario.RARE_WEAK_GROUPED:
        return mirrors.grouped_closed_form(beta1, beta2, eps, tau).values
    return mirrors.blockwise_closed_form(beta1, beta2, spec.rho, eps, tau).values


@dataclass(frozen=True)
class HammingCurve:
    """Mean Hamming error across a threshold grid, plus per-rep values at the min."""

    u_grid: np.ndarray
    mean_curve: np.ndarray
    u_star: float
    hamm_star: float
    se_star: float
    per_rep_at_star: np.ndarray


def hamming_study(spec: GeneratorSpec, statistics: tuple[str, ...] = ("sign_sum", "marginal", "bayes"),
                  u_grid: np.ndarray | None = None, reps: int = 200,
                  seed: int = 0) -> dict[str, HammingCurve]:
    """Monte-Carlo minimal Hamming error per statistic on a rare/weak design.

    For each statistic the selection thresholds sweep ``t(u) = sqrt(2 u log
    p)`` (sign-sum scale) or ``t(u) = 2 u log p`` (log-ratio scale); the mean
    Hamming error over replications is minimized over the grid.  A common
    seed sequence keeps the per-rep values paired across statistics.
    """
    if spec.scenario not in _RARE_WEAK_SCENARIOS:
        raise InvalidSpecError("hamming_study requires a rare/weak scenario")
    if u_grid is None:
        u_grid = np.linspace(0.0, 5.0, 201)
    u_grid = np.asarray(u_grid, dtype=float)
    logp = np.log(spec.p)
    thresholds = {
        name: np.sqrt(2.0 * u_grid * logp) if _RW_THRESHOLD_SCALE[name] == 0.5
        else 2.0 * u_grid * logp
        for name in statistics
    }
    per_rep = {name: np.empty((reps, u_grid.size)) for name in statistics}
    for rep in range(reps):
        rng = np.random.default_rng(derive_seed(seed, rep))
        beta, b1, b2 = draw_rare_weak(spec, rng)
        is_signal = beta != 0.0
        for name in statistics:
            w = _rw_statistic(name, spec, b1, b2)
            sig_sorted = np.sort(w[is_signal])
            null_sorted = np.sort(w[~is_signal])
            t = thresholds[name]
            fp = null_sorted.size - np.searchsorted(null_sorted, t, side="left")
            fn = np.searchsorted(sig_sorted, t, side="left")
            per_rep[name][rep] = fp + fn
    out = {}
    for name in statistics:
        curve = per_rep[name].mean(axis=0)
        k = int(np.argmin(curve))
        vals = per_rep[name][:, k]
        se = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
        out[name] = HammingCurve(u_grid=u_grid, mean_curve=curve, u_star=float(u_grid[k]),
                                 hamm_star=float(curve[k]), se_star=se, per_rep_at_star=vals)
    return out
