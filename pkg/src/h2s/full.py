"""Reference Gibbs sampler on the complete data.

Every block has a conjugate full conditional.  The scan order is fixed:
``mu``, ``tau2``, then the group blocks.  Group blocks are conditionally
independent given ``(mu, tau2)``, so they are updated together as arrays;
this is distributionally identical to visiting them one at a time.

Inverse-Gamma draws are ``rate / Gamma(shape, 1)``.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .chains import ChainStore, check_run_lengths, retained_count
from .errors import DomainError, InputError, NumericalError
from .model import (
    GroupData,
    GroupStats,
    InvGammaPrior,
    ModelSpec,
    NormalPrior,
    compute_stats,
    invgamma_variance_conditional,
    normal_mean_conditional,
)
from .simulate import dataset_depth

log = logging.getLogger(__name__)

CHUNK = 1024
INIT_VAR_FLOOR = 1e-6


def sample_invgamma(shape, rate, rng: np.random.Generator, size=None):
    return rate / rng.standard_gamma(shape, size)


def draw_mu(thetas, tau2: float, prior: NormalPrior, rng, size=None):
    """Draw mu from its Normal full conditional given the group means."""
    if not tau2 > 0:
        raise DomainError(f"tau2 must be > 0, got {tau2}")
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.size == 0:
        raise InputError("thetas is empty")
    mean, var = normal_mean_conditional(
        thetas.size, thetas.sum(), tau2, prior.mean, prior.variance
    )
    return mean + math.sqrt(var) * rng.standard_normal(size)


def draw_tau2(thetas, mu: float, prior: InvGammaPrior, rng, size=None):
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.size == 0:
        raise InputError("thetas is empty")
    shape, rate = invgamma_variance_conditional(thetas.size, np.sum((thetas - mu) ** 2), prior)
    return sample_invgamma(shape, rate, rng, size)


def draw_theta_i(stats: GroupStats, sigma2: float, mu: float, tau2: float, rng, size=None):
    """Draw a group mean from Normal(data) x Normal(mu, tau2)."""
    if not (sigma2 > 0 and tau2 > 0):
        raise DomainError(f"variances must be > 0, got sigma2={sigma2}, tau2={tau2}")
    mean, var = normal_mean_conditional(stats.count, stats.sum, sigma2, mu, tau2)
    return mean + math.sqrt(var) * rng.standard_normal(size)


def draw_sigma2_i(stats: GroupStats, theta: float, prior: InvGammaPrior, rng, size=None):
    ssr = stats.centered_ss + stats.count * (stats.mean - theta) ** 2
    shape, rate = invgamma_variance_conditional(stats.count, ssr, prior)
    return sample_invgamma(shape, rate, rng, size)


def theta_names(gids):
    return [f"theta[{g}]" for g in gids], [f"sigma2[{g}]" for g in gids]


def cell_names(pairs):
    return [f"delta[{g},{j}]" for g, j in pairs], [f"eta2[{g},{j}]" for g, j in pairs]


class _Cells:
    """Flattened per-cell statistics for depth-4 data."""

    def __init__(self, dataset: Sequence[GroupData]):
        pairs, owner, counts, sums, ssc = [], [], [], [], []
        for gi, g in enumerate(dataset):
            for j, st in compute_stats(g).items():
                pairs.append((g.group_id, j))
                owner.append(gi)
                counts.append(st.count)
                sums.append(st.sum)
                ssc.append(st.centered_ss)
        self.pairs = pairs
        self.owner = np.array(owner, dtype=np.intp)
        self.count = np.array(counts, dtype=np.float64)
        self.sum = np.array(sums, dtype=np.float64)
        self.ssc = np.array(ssc, dtype=np.float64)
        self.mean = self.sum / self.count
        self.per_group = np.bincount(self.owner, minlength=len(dataset)).astype(np.float64)


def _init_variance(ssc, count):
    var = np.where(count > 1, ssc / np.maximum(count - 1, 1), 1.0)
    return np.where(var > INIT_VAR_FLOOR, var, 1.0)


def _group_var(x, owner, per_group, means):
    ss = np.bincount(owner, weights=(x - means[owner]) ** 2, minlength=len(per_group))
    var = np.where(per_group > 1, ss / np.maximum(per_group - 1, 1), 1.0)
    return np.where(var > INIT_VAR_FLOOR, var, 1.0)


def run_full_gibbs(
    dataset: Sequence[GroupData],
    spec: ModelSpec,
    T: int,
    burn_in: int | None = None,
    thin: int = 1,
    seed: int = 0,
) -> ChainStore:
    """Systematic-scan Gibbs on the full model; returns post-burn-in, thinned draws."""
    if burn_in is None:
        burn_in = T // 10
    check_run_lengths(T, burn_in, thin)
    depth = dataset_depth(dataset)
    if depth != spec.depth:
        raise InputError(f"dataset depth {depth} does not match model depth {spec.depth}")
    rng = np.random.default_rng(seed)
    if depth == 3:
        draws, columns = _gibbs3(dataset, spec, T, burn_in, thin, rng)
    else:
        draws, columns = _gibbs4(dataset, spec, T, burn_in, thin, rng)
    meta = {
        "sampler": "full-gibbs",
        "depth": depth,
        "scan_order": ["mu", "tau2", "groups in index order"],
        "init": "group sample means/variances; tau2 = var(theta0) floored at 1e-6; mu drawn first",
        "model": spec.to_dict(),
    }
    return ChainStore(draws, columns, T, burn_in, thin, seed, meta)


def _check_finite(t0, **blocks):
    for name, arr in blocks.items():
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))
            raise NumericalError(
                f"non-finite {name} draw near iteration {t0} (indices {bad[:5].ravel().tolist()})"
            )


def _gibbs3(dataset, spec: ModelSpec, T, burn_in, thin, rng):
    n = len(dataset)
    stats = [compute_stats(g) for g in dataset]
    count = np.array([s.count for s in stats], dtype=np.float64)
    total = np.array([s.sum for s in stats])
    ssc = np.array([s.centered_ss for s in stats])
    ybar = total / count

    hm, ht, ps = spec.hyper_mu, spec.hyper_tau2, spec.prior_sigma2
    tau_shape = ht.shape + 0.5 * n
    sig_shape = ps.shape + 0.5 * count

    theta = ybar.copy()
    sigma2 = _init_variance(ssc, count)
    tau2 = max(float(np.var(theta, ddof=1)) if n > 1 else 0.0, INIT_VAR_FLOOR)
    mu = 0.0

    R = retained_count(T, burn_in, thin)
    out = {
        "mu": np.empty((R, 1)),
        "tau2": np.empty((R, 1)),
        "theta": np.empty((R, n)),
        "sigma2": np.empty((R, n)),
    }
    k = 0
    for start in range(0, T, CHUNK):
        size = min(CHUNK, T - start)
        z_mu = rng.standard_normal(size)
        g_tau = rng.standard_gamma(tau_shape, size)
        z_th = rng.standard_normal((size, n))
        g_sig = rng.standard_gamma(sig_shape, (size, n))
        for r in range(size):
            m, v = normal_mean_conditional(n, theta.sum(), tau2, hm.mean, hm.variance)
            mu = m + math.sqrt(v) * z_mu[r]
            d = theta - mu
            tau2 = (ht.rate + 0.5 * float(d @ d)) / g_tau[r]
            m, v = normal_mean_conditional(count, total, sigma2, mu, tau2)
            theta = m + np.sqrt(v) * z_th[r]
            sigma2 = (ps.rate + 0.5 * (ssc + count * (ybar - theta) ** 2)) / g_sig[r]
            t = start + r
            if t >= burn_in and (t - burn_in) % thin == 0:
                out["mu"][k, 0] = mu
                out["tau2"][k, 0] = tau2
                out["theta"][k] = theta
                out["sigma2"][k] = sigma2
                k += 1
        _check_finite(start, mu=mu, tau2=tau2, theta=theta, sigma2=sigma2)
    gids = [g.group_id for g in dataset]
    tn, sn = theta_names(gids)
    columns = {"mu": ["mu"], "tau2": ["tau2"], "theta": tn, "sigma2": sn}
    return out, columns


def _gibbs4(dataset, spec: ModelSpec, T, burn_in, thin, rng):
    n = len(dataset)
    cells = _Cells(dataset)
    C = len(cells.pairs)
    own, mg = cells.owner, cells.per_group

    hm, ht, ps, pe = spec.hyper_mu, spec.hyper_tau2, spec.prior_sigma2, spec.prior_eta2
    tau_shape = ht.shape + 0.5 * n
    sig_shape = ps.shape + 0.5 * mg
    eta_shape = pe.shape + 0.5 * cells.count

    delta = cells.mean.copy()
    eta2 = _init_variance(cells.ssc, cells.count)
    theta = np.bincount(own, weights=delta, minlength=n) / mg
    sigma2 = _group_var(delta, own, mg, theta)
    tau2 = max(float(np.var(theta, ddof=1)) if n > 1 else 0.0, INIT_VAR_FLOOR)
    mu = 0.0

    R = retained_count(T, burn_in, thin)
    out = {
        "mu": np.empty((R, 1)),
        "tau2": np.empty((R, 1)),
        "theta": np.empty((R, n)),
        "sigma2": np.empty((R, n)),
        "delta": np.empty((R, C)),
        "eta2": np.empty((R, C)),
    }
    k = 0
    for start in range(0, T, CHUNK):
        size = min(CHUNK, T - start)
        z_mu = rng.standard_normal(size)
        g_tau = rng.standard_gamma(tau_shape, size)
        z_th = rng.standard_normal((size, n))
        g_sig = rng.standard_gamma(sig_shape, (size, n))
        z_de = rng.standard_normal((size, C))
        g_eta = rng.standard_gamma(eta_shape, (size, C))
        for r in range(size):
            m, v = normal_mean_conditional(n, theta.sum(), tau2, hm.mean, hm.variance)
            mu = m + math.sqrt(v) * z_mu[r]
            d = theta - mu
            tau2 = (ht.rate + 0.5 * float(d @ d)) / g_tau[r]
            dsum = np.bincount(own, weights=delta, minlength=n)
            m, v = normal_mean_conditional(mg, dsum, sigma2, mu, tau2)
            theta = m + np.sqrt(v) * z_th[r]
            ss = np.bincount(own, weights=(delta - theta[own]) ** 2, minlength=n)
            sigma2 = (ps.rate + 0.5 * ss) / g_sig[r]
            m, v = normal_mean_conditional(
                cells.count, cells.sum, eta2, theta[own], sigma2[own]
            )
            delta = m + np.sqrt(v) * z_de[r]
            resid = cells.ssc + cells.count * (cells.mean - delta) ** 2
            eta2 = (pe.rate + 0.5 * resid) / g_eta[r]
            t = start + r
            if t >= burn_in and (t - burn_in) % thin == 0:
                out["mu"][k, 0] = mu
                out["tau2"][k, 0] = tau2
                out["theta"][k] = theta
                out["sigma2"][k] = sigma2
                out["delta"][k] = delta
                out["eta2"][k] = eta2
                k += 1
        _check_finite(
            start, mu=mu, tau2=tau2, theta=theta, sigma2=sigma2, delta=delta, eta2=eta2
        )
    gids = [g.group_id for g in dataset]
    tn, sn = theta_names(gids)
    dn, en = cell_names(cells.pairs)
    columns = {"mu": ["mu"], "tau2": ["tau2"], "theta": tn, "sigma2": sn, "delta": dn, "eta2": en}
    return out, columns
