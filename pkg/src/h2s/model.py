"""Model specification, densities and sufficient statistics.

The nested model is Normal at every location level and Inverse-Gamma at
every variance level.  Inverse-Gamma is parameterized by shape ``a`` and
rate ``b`` with density proportional to ``x**-(a + 1) * exp(-b / x)``;
this is the convention used by BUGS/JAGS for ``dgamma`` on a precision,
and every prior in this package follows it.

All density work happens in log space.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, InputError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise InputError(f"NormalPrior fields must be finite, got {self}")
        if self.variance <= 0:
            raise InputError(f"NormalPrior variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class InvGammaPrior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and math.isfinite(self.rate)):
            raise InputError(f"InvGammaPrior fields must be finite, got {self}")
        if self.shape <= 0 or self.rate <= 0:
            raise InputError(f"InvGammaPrior shape and rate must be > 0, got {self}")


# (depth, split_level) pairs with a worked-out two-stage scheme.
SUPPORTED_SPLITS = {3: 2, 4: 3}


@dataclass(frozen=True)
class ModelSpec:
    """Depth, split level and every prior of the nested model.

    Defaults reproduce the simulation model: ``mu ~ N(0, 1e6)``,
    ``tau2 ~ IG(0.1, 0.1)``, ``sigma2_i ~ IG(0.01, 0.01)``, ``eta2_ij ~
    IG(0.1, 0.1)`` and a detached ``theta_i ~ N(0, 1e6)`` for stage 1.
    """

    depth: int = 3
    split_level: int | None = None
    hyper_mu: NormalPrior = NormalPrior(0.0, 1e6)
    hyper_tau2: InvGammaPrior = InvGammaPrior(0.1, 0.1)
    prior_sigma2: InvGammaPrior = InvGammaPrior(0.01, 0.01)
    prior_eta2: InvGammaPrior = InvGammaPrior(0.1, 0.1)
    stage1_theta_prior: NormalPrior = NormalPrior(0.0, 1e6)

    def __post_init__(self):
        if self.depth not in (3, 4):
            raise InputError(f"depth must be 3 or 4, got {self.depth}")
        if self.split_level is None:
            object.__setattr__(self, "split_level", SUPPORTED_SPLITS[self.depth])
        if not 1 <= self.split_level < self.depth:
            raise InputError(
                f"split_level must satisfy 1 <= split_level < depth, got {self.split_level}"
            )
        if self.split_level != SUPPORTED_SPLITS[self.depth]:
            raise InputError(
                f"split_level {self.split_level} is not implemented for depth {self.depth}; "
                f"only {SUPPORTED_SPLITS[self.depth]} is supported"
            )
        for name in ("hyper_mu", "stage1_theta_prior"):
            if not isinstance(getattr(self, name), NormalPrior):
                raise InputError(f"{name} must be a NormalPrior")
        for name in ("hyper_tau2", "prior_sigma2", "prior_eta2"):
            if not isinstance(getattr(self, name), InvGammaPrior):
                raise InputError(f"{name} must be an InvGammaPrior")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        kw = dict(d)
        for name in ("hyper_mu", "stage1_theta_prior"):
            if name in kw and isinstance(kw[name], Mapping):
                kw[name] = NormalPrior(**kw[name])
        for name in ("hyper_tau2", "prior_sigma2", "prior_eta2"):
            if name in kw and isinstance(kw[name], Mapping):
                kw[name] = InvGammaPrior(**kw[name])
        return cls(**kw)


@dataclass
class GroupData:
    """Observations of one group.

    Depth 3 fills ``values``; depth 4 fills ``cells`` (cell id -> values).
    """

    group_id: int
    values: np.ndarray | None = None
    cells: dict[int, np.ndarray] | None = None

    def __post_init__(self):
        if (self.values is None) == (self.cells is None):
            raise InputError(f"group {self.group_id}: exactly one of values/cells is required")
        if self.values is not None:
            self.values = _as_obs(self.values, f"group {self.group_id}")
        else:
            if not self.cells:
                raise InputError(f"group {self.group_id} has no cells")
            self.cells = {
                int(j): _as_obs(v, f"group {self.group_id} cell {j}")
                for j, v in sorted(self.cells.items())
            }

    @property
    def depth(self) -> int:
        return 3 if self.values is not None else 4

    @property
    def n_obs(self) -> int:
        if self.values is not None:
            return len(self.values)
        return sum(len(v) for v in self.cells.values())


def _as_obs(values, what) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InputError(f"{what} is empty")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True)
class GroupStats:
    count: int
    sum: float
    sum_sq: float

    @property
    def mean(self) -> float:
        return self.sum / self.count

    @property
    def centered_ss(self) -> float:
        """Sum of squared deviations from the sample mean, clipped at 0."""
        return max(self.sum_sq - self.sum * self.sum / self.count, 0.0)


def _stats_of(values: np.ndarray) -> GroupStats:
    if len(values) == 0:
        raise InputError("cannot compute statistics of an empty sequence")
    v = np.asarray(values, dtype=np.float64)
    return GroupStats(int(v.size), math.fsum(v.tolist()), math.fsum((v * v).tolist()))


def compute_stats(data: GroupData) -> GroupStats | dict[int, GroupStats]:
    """Sufficient statistics of a group, or of each cell for depth-4 data."""
    if data.values is not None:
        return _stats_of(data.values)
    return {j: _stats_of(v) for j, v in data.cells.items()}


@dataclass
class ChainState:
    """One joint parameter value; also the record of generating values."""

    mu: float
    tau2: float
    theta: dict[int, float] = field(default_factory=dict)
    sigma2: dict[int, float] = field(default_factory=dict)
    delta: dict[tuple[int, int], float] = field(default_factory=dict)
    eta2: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for name, val in self._scalars():
            if not math.isfinite(val):
                raise InputError(f"{name} is not finite")
        for name, val in self._scalars(variances_only=True):
            if val <= 0:
                raise InputError(f"{name} must be > 0, got {val}")

    def _scalars(self, variances_only=False):
        if not variances_only:
            yield "mu", self.mu
            yield from ((f"theta[{i}]", v) for i, v in self.theta.items())
            yield from ((f"delta[{i},{j}]", v) for (i, j), v in self.delta.items())
        yield "tau2", self.tau2
        yield from ((f"sigma2[{i}]", v) for i, v in self.sigma2.items())
        yield from ((f"eta2[{i},{j}]", v) for (i, j), v in self.eta2.items())

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "tau2": self.tau2,
            "theta": {str(i): v for i, v in self.theta.items()},
            "sigma2": {str(i): v for i, v in self.sigma2.items()},
            "delta": {f"{i},{j}": v for (i, j), v in self.delta.items()},
            "eta2": {f"{i},{j}": v for (i, j), v in self.eta2.items()},
        }


def log_normal_density(x, mean, variance):
    """Log of the Normal(mean, variance) density; broadcasts over arrays."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(~(variance > 0)):
        raise DomainError(f"variance must be > 0, got {variance}")
    d = np.asarray(x, dtype=np.float64) - mean
    out = -0.5 * (LOG_2PI + np.log(variance)) - d * d / (2.0 * variance)
    return out if out.ndim else float(out)


def log_invgamma_density(x, shape, rate):
    """Log of the Inverse-Gamma(shape, rate) density; broadcasts over arrays."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise DomainError(f"Inverse-Gamma support is x > 0, got {x}")
    if np.any(~(np.asarray(shape) > 0)) or np.any(~(np.asarray(rate) > 0)):
        raise DomainError(f"shape and rate must be > 0, got {shape}, {rate}")
    out = shape * np.log(rate) - gammaln(shape) - (shape + 1.0) * np.log(x) - rate / x
    return out if np.ndim(out) else float(out)


def log_group_likelihood(stats: GroupStats, theta, sigma2):
    """Sum of Normal(theta, sigma2) log-densities over a group, from its stats."""
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(~(sigma2 > 0)):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    resid = stats.centered_ss + stats.count * (stats.mean - np.asarray(theta)) ** 2
    out = -0.5 * stats.count * (LOG_2PI + np.log(sigma2)) - resid / (2.0 * sigma2)
    return out if np.ndim(out) else float(out)


# Conjugate conditional parameters.  These are shared by the direct
# single-draw functions and by the vectorized sampler loops.

def normal_mean_conditional(n, total, variance, prior_mean, prior_variance):
    """Posterior (mean, variance) of a Normal location.

    ``n`` observations summing to ``total`` each have known ``variance``;
    the location has a Normal(prior_mean, prior_variance) prior.
    Broadcasts over arrays.
    """
    precision = n / variance + 1.0 / prior_variance
    post_var = 1.0 / precision
    post_mean = post_var * (total / variance + prior_mean / prior_variance)
    return post_mean, post_var


def invgamma_variance_conditional(n, ssr, prior: InvGammaPrior):
    """Posterior (shape, rate) of a variance given ``n`` residuals with sum of squares ``ssr``."""
    return prior.shape + 0.5 * n, prior.rate + 0.5 * ssr
