"""Stage 2: Metropolis-Hastings-within-Gibbs over the stage-1 banks.

``mu`` and ``tau2`` get conjugate Gibbs draws.  Each group block is
updated by an independence MH step whose proposal is a uniformly chosen
bank row.  The proposal density is the detached stage-1 posterior and the
target is the full-model conditional; they differ only in the prior on
``theta_i``, so the acceptance ratio needs nothing but ``theta``:

    log r = [log N(theta*; mu, tau2) - log p1(theta*)]
          - [log N(theta;  mu, tau2) - log p1(theta)]

with ``p1`` the stage-1 prior ("exact" mode).  "uniform" mode drops the
``p1`` terms.  No data and no likelihood term is ever touched here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bank import SampleBank
from .chains import ChainStore, check_run_lengths, retained_count
from .errors import InputError
from .full import cell_names, theta_names
from .model import ModelSpec, NormalPrior, log_normal_density, normal_mean_conditional

log = logging.getLogger(__name__)

CHUNK = 1024
TAU2_INIT_FLOOR = 1e-6
LOW_ACCEPTANCE = 0.01
MODES = ("exact", "uniform")


@dataclass
class MHStats:
    group_ids: list[int]
    proposals: np.ndarray
    accepts: np.ndarray

    @property
    def acceptance_rate(self) -> np.ndarray:
        return self.accepts / np.maximum(self.proposals, 1)

    def to_dict(self) -> dict:
        rates = self.acceptance_rate
        return {
            "groups": {
                str(g): {
                    "proposals": int(p),
                    "accepts": int(a),
                    "acceptance_rate": float(r),
                }
                for g, p, a, r in zip(self.group_ids, self.proposals, self.accepts, rates)
            },
            "mean_acceptance_rate": float(rates.mean()),
            "low_acceptance_groups": [
                g for g, r in zip(self.group_ids, rates) if r < LOW_ACCEPTANCE
            ],
        }


def log_accept_ratio(
    theta_cand,
    theta_prev,
    mu: float,
    tau2: float,
    stage1_prior: NormalPrior,
    mode: str = "exact",
):
    """Log MH ratio for replacing ``theta_prev`` by ``theta_cand``; broadcasts."""
    return _log_ratio(theta_cand, theta_prev, mu, tau2, stage1_prior.mean, stage1_prior.variance, mode)


def _log_ratio(cand, prev, mu, tau2, p1_mean, p1_var, mode):
    if mode == "exact":
        # log R(x) = log target(x) - log proposal(x); identical inputs give exactly 0.
        log_R_cand = log_normal_density(cand, mu, tau2) - log_normal_density(cand, p1_mean, p1_var)
        log_R_prev = log_normal_density(prev, mu, tau2) - log_normal_density(prev, p1_mean, p1_var)
        return log_R_cand - log_R_prev
    if mode == "uniform":
        return log_normal_density(cand, mu, tau2) - log_normal_density(prev, mu, tau2)
    raise InputError(f"mode must be one of {MODES}, got {mode!r}")


def _log_uniform(u):
    with np.errstate(divide="ignore"):
        return np.log(u)


def stage1_prior_of(bank: SampleBank, spec: ModelSpec) -> NormalPrior:
    p = bank.meta.get("stage1_theta_prior")
    return NormalPrior(**p) if p else spec.stage1_theta_prior


def mh_group_update(
    row: np.ndarray,
    bank: SampleBank,
    mu: float,
    tau2: float,
    spec: ModelSpec,
    rng: np.random.Generator,
    mode: str = "exact",
) -> tuple[np.ndarray, bool]:
    """One MH step for a group block (a row in the bank's column layout).

    The whole candidate row replaces the block on acceptance, so ``theta``
    and the variance components always move together.
    """
    if bank.A < 1:
        raise InputError(f"bank {bank.group_id} is empty")
    if not tau2 > 0:
        raise InputError(f"tau2 must be > 0, got {tau2}")
    p1 = stage1_prior_of(bank, spec)
    cand = bank.draws[rng.integers(bank.A)]
    logr = _log_ratio(cand[0], row[0], mu, tau2, p1.mean, p1.variance, mode)
    if _log_uniform(rng.random()) < logr:
        return cand.copy(), True
    return row, False


def _check_banks(banks: Sequence[SampleBank], spec: ModelSpec):
    if not banks:
        raise InputError("stage 2 needs at least one bank")
    ids = [b.group_id for b in banks]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate group ids among banks")
    for b in banks:
        if b.depth != spec.depth:
            raise InputError(
                f"bank {b.group_id} has a depth-{b.depth} layout {b.columns[:4]}, "
                f"model is depth {spec.depth}"
            )
        meta_depth = b.meta.get("depth")
        if meta_depth is not None and meta_depth != spec.depth:
            raise InputError(f"bank {b.group_id} metadata says depth {meta_depth}")
        checks = [("prior_sigma2", spec.prior_sigma2)]
        if spec.depth == 4:
            checks.append(("prior_eta2", spec.prior_eta2))
        for key, prior in checks:
            got = b.meta.get(key)
            if got is not None and (got["shape"], got["rate"]) != (prior.shape, prior.rate):
                raise InputError(
                    f"bank {b.group_id} used {key}={got}, model has {prior}; "
                    "stage-1 and full-model priors must agree below the split level"
                )


def run_stage2(
    banks: Sequence[SampleBank],
    spec: ModelSpec,
    T: int,
    burn_in: int | None = None,
    thin: int = 1,
    seed: int = 0,
    mode: str = "exact",
    fix_mu: float | None = None,
    fix_tau2: float | None = None,
) -> tuple[ChainStore, MHStats]:
    """Reconstruct the full-model posterior from the banks alone.

    ``fix_mu`` / ``fix_tau2`` clamp the hyperparameters instead of drawing
    them, which is the point-mass-hyperprior limit.
    """
    if burn_in is None:
        burn_in = T // 10
    check_run_lengths(T, burn_in, thin)
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    if fix_tau2 is not None and not fix_tau2 > 0:
        raise InputError(f"fix_tau2 must be > 0, got {fix_tau2}")
    _check_banks(banks, spec)
    n = len(banks)
    rng = np.random.default_rng(seed)

    A = np.array([b.A for b in banks], dtype=np.int64)
    offset = np.concatenate([[0], np.cumsum(A)[:-1]])
    theta_flat = np.concatenate([b.theta for b in banks])
    priors = [stage1_prior_of(b, spec) for b in banks]
    p1_mean = np.array([p.mean for p in priors])
    p1_var = np.array([p.variance for p in priors])
    hm, ht = spec.hyper_mu, spec.hyper_tau2
    tau_shape = ht.shape + 0.5 * n

    idx = rng.integers(0, A)
    theta = theta_flat[offset + idx]
    tau2 = max(float(np.var(theta, ddof=1)) if n > 1 else 0.0, TAU2_INIT_FLOOR)
    if fix_tau2 is not None:
        tau2 = float(fix_tau2)

    R = retained_count(T, burn_in, thin)
    mu_hist = np.empty((R, 1))
    tau_hist = np.empty((R, 1))
    idx_hist = np.empty((R, n), dtype=np.int64)
    accepts = np.zeros(n, dtype=np.int64)
    k = 0
    for start in range(0, T, CHUNK):
        size = min(CHUNK, T - start)
        z_mu = rng.standard_normal(size)
        g_tau = rng.standard_gamma(tau_shape, size)
        cand = rng.integers(0, A, size=(size, n))
        log_u = _log_uniform(rng.random((size, n)))
        for r in range(size):
            if fix_mu is None:
                m, v = normal_mean_conditional(n, theta.sum(), tau2, hm.mean, hm.variance)
                mu = m + math.sqrt(v) * z_mu[r]
            else:
                mu = float(fix_mu)
            if fix_tau2 is None:
                d = theta - mu
                tau2 = (ht.rate + 0.5 * float(d @ d)) / g_tau[r]
            theta_c = theta_flat[offset + cand[r]]
            logr = _log_ratio(theta_c, theta, mu, tau2, p1_mean, p1_var, mode)
            acc = log_u[r] < logr
            idx = np.where(acc, cand[r], idx)
            theta = np.where(acc, theta_c, theta)
            accepts += acc
            t = start + r
            if t >= burn_in and (t - burn_in) % thin == 0:
                mu_hist[k, 0] = mu
                tau_hist[k, 0] = tau2
                idx_hist[k] = idx
                k += 1

    stats = MHStats([b.group_id for b in banks], np.full(n, T, dtype=np.int64), accepts)
    for g, rate in zip(stats.group_ids, stats.acceptance_rate):
        if rate < LOW_ACCEPTANCE:
            log.warning("group %s: stage-2 acceptance rate %.4f is below 1%%", g, rate)

    gids = [b.group_id for b in banks]
    tn, sn = theta_names(gids)
    draws = {
        "mu": mu_hist,
        "tau2": tau_hist,
        "theta": np.column_stack([b.draws[idx_hist[:, i], 0] for i, b in enumerate(banks)]),
        "sigma2": np.column_stack([b.draws[idx_hist[:, i], 1] for i, b in enumerate(banks)]),
    }
    columns = {"mu": ["mu"], "tau2": ["tau2"], "theta": tn, "sigma2": sn}
    if spec.depth == 4:
        pairs, deltas, etas = [], [], []
        for i, b in enumerate(banks):
            c = len(b.cell_ids)
            rows = b.draws[idx_hist[:, i]]
            deltas.append(rows[:, 2 : 2 + c])
            etas.append(rows[:, 2 + c :])
            pairs.extend((b.group_id, j) for j in b.cell_ids)
        draws["delta"] = np.hstack(deltas)
        draws["eta2"] = np.hstack(etas)
        columns["delta"], columns["eta2"] = cell_names(pairs)

    meta = {
        "sampler": "two-stage",
        "depth": spec.depth,
        "ratio_mode": mode,
        "bank_sizes": {str(g): int(a) for g, a in zip(gids, A)},
        "fix_mu": fix_mu,
        "fix_tau2": fix_tau2,
        "init": "uniform bank row per group; tau2 = var(theta0) floored at 1e-6; mu drawn first",
        "model": spec.to_dict(),
    }
    return ChainStore(draws, columns, T, burn_in, thin, seed, meta), stats
