"""Core domain types: datasets, split plans, priors, mirror vectors, metrics.

All containers are frozen dataclasses holding read-only numpy arrays, so
instances can be shared freely across concurrent workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLevelError, InvalidRatiosError


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a)
    if out.flags.writeable:
        out = out.copy()
        out.setflags(write=False)
    return out


def derive_seed(seed: int, index: int) -> int:
    """Stable 64-bit seed for sub-stream `index` of master `seed` (splitmix64)."""
    z = (seed ^ (index * 0x9E3779B97F4A7C15)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class ModelKind(enum.Enum):
    NORMAL_MEANS = "normal_means"
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class Dataset:
    """Observations for one of the three supported models.

    For :attr:`ModelKind.NORMAL_MEANS` the response is an ``(n, p, d)`` tensor
    of replicated observations and ``design`` is ``None``.  For the regression
    kinds, ``design`` is ``(n, p)`` and ``response`` is ``(n,)``; logistic
    responses must be 0/1.
    """

    kind: ModelKind
    response: np.ndarray
    design: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        resp = _readonly(np.asarray(self.response, dtype=float))
        object.__setattr__(self, "response", resp)
        if self.kind is ModelKind.NORMAL_MEANS:
            if self.design is not None:
                raise ValueError("normal-means data carry no design matrix")
            if resp.ndim != 3:
                raise ValueError("normal-means response must have shape (n, p, d)")
        else:
            if self.design is None:
                raise ValueError(f"{self.kind.value} data require a design matrix")
            design = _readonly(np.asarray(self.design, dtype=float))
            object.__setattr__(self, "design", design)
            if design.ndim != 2:
                raise ValueError("design must be an (n, p) matrix")
            if resp.ndim != 1 or resp.shape[0] != design.shape[0]:
                raise ValueError("response length must match the number of rows")
            if self.kind is ModelKind.LOGISTIC:
                if not np.isin(resp, (0.0, 1.0)).all():
                    raise ValueError("logistic responses must be 0/1")
        # whole datasets carry n >= 2; split halves may hold a single row
        if self.n < 1 or self.p < 1:
            raise ValueError("need n >= 1 rows and p >= 1 features")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != self.p:
                raise ValueError("feature_names length must equal p")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.response.shape[0]

    @property
    def p(self) -> int:
        if self.kind is ModelKind.NORMAL_MEANS:
            return self.response.shape[1]
        return self.design.shape[1]

    @property
    def d(self) -> int:
        """Replicate dimension (normal-means only)."""
        if self.kind is not ModelKind.NORMAL_MEANS:
            raise ValueError("d is defined only for normal-means data")
        return self.response.shape[2]

    def take_rows(self, rows: np.ndarray) -> "Dataset":
        if self.kind is ModelKind.NORMAL_MEANS:
            return Dataset(self.kind, self.response[rows], None, self.feature_names)
        return Dataset(self.kind, self.response[rows], self.design[rows], self.feature_names)


@dataclass(frozen=True)
class SplitPlan:
    """A permutation of rows plus nested prefix cuts at the candidate ratios.

    One permutation realizes the whole filtration: the first half at ratio
    ``r_t`` is the first ``floor(r_t * n)`` permuted rows, so first halves are
    nested by construction and the stopping-time bookkeeping stays valid.
    """

    n: int
    permutation: np.ndarray
    ratios: tuple[float, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "permutation", _readonly(np.asarray(self.permutation, dtype=np.intp)))

    @property
    def n_ratios(self) -> int:
        return len(self.ratios)

    def first_size(self, t: int) -> int:
        if not 0 <= t < len(self.ratios):
            raise IndexError(f"ratio index {t} out of range [0, {len(self.ratios)})")
        return int(np.floor(self.ratios[t] * self.n))

    def first_rows(self, t: int) -> np.ndarray:
        return self.permutation[: self.first_size(t)]

    def second_rows(self, t: int) -> np.ndarray:
        return self.permutation[self.first_size(t):]


def make_split_plan(n: int, ratios, seed: int) -> SplitPlan:
    """Draw the row permutation and validate the candidate split ratios.

    Raises
    ------
    InvalidRatiosError
        If the ratios are not strictly increasing within (0, 1), or if any
        cut would leave an empty half.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) == 0:
        raise InvalidRatiosError("need at least one split ratio")
    if any(not 0.0 < r < 1.0 for r in ratios):
        raise InvalidRatiosError(f"ratios must lie strictly inside (0, 1): {ratios}")
    if any(b <= a for a, b in zip(ratios, ratios[1:])):
        raise InvalidRatiosError(f"ratios must be strictly increasing: {ratios}")
    if int(np.floor(ratios[0] * n)) < 1:
        raise InvalidRatiosError(f"first cut floor({ratios[0]} * {n}) is empty")
    if n - int(np.floor(ratios[-1] * n)) < 1:
        raise InvalidRatiosError(f"last cut floor({ratios[-1]} * {n}) leaves no second half")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitPlan(n=n, permutation=perm, ratios=ratios, seed=seed)


def split_at(data: Dataset, plan: SplitPlan, t: int) -> tuple[Dataset, Dataset]:
    """Partition rows into the first half at ratio index ``t`` and the rest."""
    if plan.n != data.n:
        raise ValueError(f"plan built for n={plan.n}, data has n={data.n}")
    return data.take_rows(plan.first_rows(t)), data.take_rows(plan.second_rows(t))


class SlabKind(enum.Enum):
    POINT_MASS = "point_mass"
    GAUSSIAN = "gaussian"
    TWO_SIDED = "two_sided"


@dataclass(frozen=True)
class SlabSpec:
    """Slab component of a spike-and-slab prior.

    ``POINT_MASS`` puts all slab mass at ``mu0`` (``tau2`` ignored),
    ``GAUSSIAN`` is ``N(mu0, tau2)`` and ``TWO_SIDED`` the equal mixture
    ``0.5 N(mu0, tau2) + 0.5 N(-mu0, tau2)``.  In multivariate settings the
    location is ``mu0 * 1_d`` with isotropic covariance ``tau2 * I_d``.
    """

    kind: SlabKind
    mu0: float
    tau2: float = 0.0

    def __post_init__(self):
        if self.kind is not SlabKind.POINT_MASS and self.tau2 <= 0.0:
            raise ValueError("Gaussian slab components need tau2 > 0")
        if self.kind is SlabKind.POINT_MASS and self.tau2 != 0.0:
            raise ValueError("point-mass slab takes tau2 = 0")

    def components(self) -> tuple[tuple[float, float, float], ...]:
        """Slab mixture as (weight, location, variance) triples."""
        if self.kind is SlabKind.TWO_SIDED:
            return ((0.5, self.mu0, self.tau2), (0.5, -self.mu0, self.tau2))
        return ((1.0, self.mu0, self.tau2),)


@dataclass(frozen=True)
class Hyperpriors:
    """Optional conjugate hyperpriors for the Gibbs samplers.

    Any entry left as ``None`` keeps the corresponding parameter fixed at the
    value implied by the base prior.
    """

    theta_beta: tuple[float, float] | None = None       # theta ~ Beta(A, B)
    sigma2_invgamma: tuple[float, float] | None = None  # sigma2 ~ InvGamma(a1, a2)
    tau2_invgamma: tuple[float, float] | None = None    # tau2 ~ InvGamma(b1, b2)
    mu_normal: tuple[float, float] | None = None        # mu ~ N(mu0, tau0^2)

    def __post_init__(self):
        for name in ("theta_beta", "sigma2_invgamma", "tau2_invgamma"):
            pair = getattr(self, name)
            if pair is not None and (pair[0] <= 0 or pair[1] <= 0):
                raise ValueError(f"{name} hyperparameters must be strictly positive")
        if self.mu_normal is not None and self.mu_normal[1] <= 0:
            raise ValueError("mu hyperprior variance must be strictly positive")


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Spike weight ``p0`` on the point mass at zero plus a slab component."""

    p0: float
    slab: SlabSpec
    hyper: Hyperpriors | None = None

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"spike probability must lie in [0, 1], got {self.p0}")


class MirrorKind(enum.Enum):
    SIGN_SUM = "sign_sum"
    MARGINAL_OPTIMAL = "marginal_optimal"
    BAYES_OPTIMAL = "bayes_optimal"
    BLOCKWISE_CLOSED_FORM = "blockwise_closed_form"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class MirrorVector:
    """Per-feature mirror statistics with provenance.

    ``ratio_used`` records the split ratio behind each entry (uniform for
    fixed splits, per-feature for adaptive stopping).  Features removed by
    prescreening carry ``active = False`` and a value of exactly 0; they are
    excluded from both tails of the estimated-FDP count.
    """

    values: np.ndarray
    kind: MirrorKind
    ratio_used: np.ndarray
    active: np.ndarray
    approx_likelihood: bool = False

    def __post_init__(self):
        values = _readonly(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ratio_used", _readonly(np.asarray(self.ratio_used, dtype=float)))
        object.__setattr__(self, "active", _readonly(np.asarray(self.active, dtype=bool)))
        if not np.isfinite(values).all():
            raise ValueError("mirror statistics must be finite")
        if not (values.shape == self.ratio_used.shape == self.active.shape):
            raise ValueError("values, ratio_used and active must share one shape")
        if values[~self.active].any():
            raise ValueError("prescreened-out features must carry value exactly 0")

    @property
    def p(self) -> int:
        return self.values.shape[0]


def mirror_vector(values, kind: MirrorKind, ratio: float | np.ndarray,
                  active: np.ndarray | None = None, approx: bool = False) -> MirrorVector:
    values = np.asarray(values, dtype=float)
    ratio_used = np.broadcast_to(np.asarray(ratio, dtype=float), values.shape).copy()
    if active is None:
        active = np.ones(values.shape, dtype=bool)
    return MirrorVector(values=values, kind=kind, ratio_used=ratio_used,
                        active=np.asarray(active, dtype=bool), approx_likelihood=approx)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of the threshold search: selected set, cutoff and FDP trace."""

    selected: np.ndarray
    tau_q: float | None
    fdp_hat_trace: np.ndarray   # (k, 2) rows of (threshold, estimated FDP)
    q: float

    def __post_init__(self):
        object.__setattr__(self, "selected", _readonly(np.asarray(self.selected, dtype=np.intp)))
        object.__setattr__(self, "fdp_hat_trace", _readonly(np.asarray(self.fdp_hat_trace, dtype=float)))

    @property
    def n_selected(self) -> int:
        return int(self.selected.shape[0])


@dataclass(frozen=True)
class Metrics:
    """Selection quality against a known support."""

    tp: int
    fp: int
    fn: int
    fdp: float
    power: float

    @property
    def hamming(self) -> int:
        return self.fp + self.fn

    @classmethod
    def from_selection(cls, selected: np.ndarray, support: np.ndarray) -> "Metrics":
        sel = set(int(j) for j in np.asarray(selected).ravel())
        true = set(int(j) for j in np.asarray(support).ravel())
        tp = len(sel & true)
        fp = len(sel - true)
        fn = len(true - sel)
        return cls(tp=tp, fp=fp, fn=fn,
                   fdp=fp / max(tp + fp, 1),
                   power=tp / max(len(true), 1))


def check_level(q: float) -> float:
    q = float(q)
    if not 0.0 < q < 1.0:
        raise InvalidLevelError(f"nominal FDR level must lie in (0, 1), got {q}")
    return q
