"""Stage 1: detached per-group samplers.

Each group is analysed on its own data only, with ``theta_i`` given the
independent prior ``spec.stage1_theta_prior`` instead of ``N(mu, tau2)``.
All other priors are those of the full model, which is what lets stage 2
cancel them.  Groups share nothing, so they run as independent processes.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Sequence

import numpy as np

from .bank import SampleBank, bank_columns
from .chains import check_run_lengths
from .errors import H2SError, InputError
from .full import INIT_VAR_FLOOR, _init_variance
from .model import GroupData, ModelSpec, compute_stats, normal_mean_conditional
from .rng import TAG_STAGE1, mix_seed

log = logging.getLogger(__name__)


class Stage1Error(H2SError):
    """One or more groups failed; ``banks`` holds the groups that completed."""

    def __init__(self, failures: dict[int, str], banks: list[SampleBank]):
        self.failures = failures
        self.banks = banks
        detail = "; ".join(f"group {g}: {msg}" for g, msg in sorted(failures.items()))
        super().__init__(f"stage 1 failed for {len(failures)} group(s): {detail}")


def stage1_seed(master_seed: int, group_id: int) -> int:
    return mix_seed(master_seed, group_id, TAG_STAGE1)


def _bank_meta(spec: ModelSpec, depth, seed, burn_in, thin) -> dict:
    meta = {
        "depth": depth,
        "seed": seed,
        "burn_in": burn_in,
        "thin": thin,
        "stage1_theta_prior": asdict(spec.stage1_theta_prior),
        "prior_sigma2": asdict(spec.prior_sigma2),
    }
    if depth == 4:
        meta["prior_eta2"] = asdict(spec.prior_eta2)
    return meta


def run_stage1_group(
    group: GroupData,
    spec: ModelSpec,
    A: int,
    burn_in: int,
    seed: int,
    thin: int = 1,
) -> SampleBank:
    """Gibbs-sample one group's detached posterior and keep ``A`` draws."""
    if A < 1:
        raise InputError(f"A must be >= 1, got {A}")
    check_run_lengths(burn_in + A * thin, burn_in, thin)
    if group.depth != spec.depth:
        raise InputError(f"group {group.group_id} has depth {group.depth}, model has {spec.depth}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if spec.depth == 3:
        draws = _detached3(group, spec, A, burn_in, thin, rng)
        cols = bank_columns(3)
    else:
        draws = _detached4(group, spec, A, burn_in, thin, rng)
        cols = bank_columns(4, list(group.cells))
    bank = SampleBank(group.group_id, cols, draws, _bank_meta(spec, spec.depth, seed, burn_in, thin))
    bank.wall_time = time.perf_counter() - t0
    return bank


def _detached3(group, spec: ModelSpec, A, burn_in, thin, rng):
    st = compute_stats(group)
    m, S, ybar, ssc = float(st.count), st.sum, st.mean, st.centered_ss
    p0, ps = spec.stage1_theta_prior, spec.prior_sigma2
    N = burn_in + A * thin
    z = rng.standard_normal(N).tolist()
    g = rng.standard_gamma(ps.shape + 0.5 * m, N).tolist()

    out = np.empty((A, 2))
    sigma2 = float(_init_variance(np.array([ssc]), np.array([m]))[0])
    k = 0
    for t in range(N):
        mean, var = normal_mean_conditional(m, S, sigma2, p0.mean, p0.variance)
        theta = mean + math.sqrt(var) * z[t]
        sigma2 = (ps.rate + 0.5 * (ssc + m * (ybar - theta) ** 2)) / g[t]
        if t >= burn_in and (t - burn_in) % thin == 0:
            out[k, 0] = theta
            out[k, 1] = sigma2
            k += 1
    return out


def _detached4(group, spec: ModelSpec, A, burn_in, thin, rng):
    stats = list(compute_stats(group).values())
    K = np.array([s.count for s in stats], dtype=np.float64)
    S = np.array([s.sum for s in stats])
    ssc = np.array([s.centered_ss for s in stats])
    ybar = S / K
    c = len(stats)
    p0, ps, pe = spec.stage1_theta_prior, spec.prior_sigma2, spec.prior_eta2
    N = burn_in + A * thin
    z_th = rng.standard_normal(N)
    g_sig = rng.standard_gamma(ps.shape + 0.5 * c, N)
    z_de = rng.standard_normal((N, c))
    g_eta = rng.standard_gamma(pe.shape + 0.5 * K, (N, c))

    delta = ybar.copy()
    eta2 = _init_variance(ssc, K)
    sigma2 = float(np.var(delta, ddof=1)) if c > 1 else 1.0
    if not sigma2 > INIT_VAR_FLOOR:
        sigma2 = 1.0

    out = np.empty((A, 2 + 2 * c))
    k = 0
    for t in range(N):
        mean, var = normal_mean_conditional(c, float(delta.sum()), sigma2, p0.mean, p0.variance)
        theta = mean + math.sqrt(var) * z_th[t]
        d = delta - theta
        sigma2 = (ps.rate + 0.5 * float(d @ d)) / g_sig[t]
        mean, var = normal_mean_conditional(K, S, eta2, theta, sigma2)
        delta = mean + np.sqrt(var) * z_de[t]
        eta2 = (pe.rate + 0.5 * (ssc + K * (ybar - delta) ** 2)) / g_eta[t]
        if t >= burn_in and (t - burn_in) % thin == 0:
            out[k, 0] = theta
            out[k, 1] = sigma2
            out[k, 2 : 2 + c] = delta
            out[k, 2 + c :] = eta2
            k += 1
    return out


def _task(group, spec, A, burn_in, seed, thin):
    try:
        return run_stage1_group(group, spec, A, burn_in, seed, thin)
    except Exception as exc:  # reported per group by the caller
        return exc


def run_stage1_all(
    dataset: Sequence[GroupData],
    spec: ModelSpec,
    A_list,
    burn_in: int,
    master_seed: int,
    workers: int = 1,
    thin: int = 1,
) -> list[SampleBank]:
    """Run every group's detached sampler; output is independent of ``workers``.

    ``A_list`` is one draw count for all groups or one per group.  Each
    returned bank carries its wall time in ``bank.wall_time``.  If any
    group fails the others still finish and ``Stage1Error`` is raised.
    """
    n = len(dataset)
    if isinstance(A_list, (int, np.integer)):
        A_list = [int(A_list)] * n
    if len(A_list) != n:
        raise InputError(f"A_list has {len(A_list)} entries for {n} groups")
    if workers < 1:
        raise InputError(f"workers must be >= 1, got {workers}")
    jobs = [
        (g, spec, int(a), burn_in, stage1_seed(master_seed, g.group_id), thin)
        for g, a in zip(dataset, A_list)
    ]
    if workers == 1 or n == 1:
        results = [_task(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            futures = [pool.submit(_task, *job) for job in jobs]
            results = [f.result() for f in futures]
    banks, failures = [], {}
    for g, res in zip(dataset, results):
        if isinstance(res, BaseException):
            failures[g.group_id] = f"{type(res).__name__}: {res}"
        else:
            banks.append(res)
    if failures:
        raise Stage1Error(failures, banks)
    return banks
