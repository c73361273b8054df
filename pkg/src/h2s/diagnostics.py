"""Single-chain convergence diagnostics: split R-hat and effective sample size."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import InputError


def split_rhat(draws) -> float:
    """Potential scale reduction of the two halves of one chain.

    Odd-length chains drop their middle draw.  A chain with zero
    within-half variance returns ``inf`` and warns.
    """
    x = np.asarray(draws, dtype=np.float64).ravel()
    if x.size < 4:
        raise InputError(f"split_rhat needs at least 4 draws, got {x.size}")
    n = x.size // 2
    halves = np.stack([x[:n], x[-n:]])
    W = halves.var(axis=1, ddof=1).mean()
    B = n * halves.mean(axis=1).var(ddof=1)
    if not W > 0:
        warnings.warn("split_rhat: zero within-chain variance", RuntimeWarning, stacklevel=2)
        return float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    d = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov / acov[0]


def effective_sample_size(draws) -> float:
    """Geyer's initial-positive-sequence ESS, clipped to ``(0, N]``."""
    x = np.asarray(draws, dtype=np.float64).ravel()
    n = x.size
    if n < 10:
        raise InputError(f"effective_sample_size needs at least 10 draws, got {n}")
    if np.ptp(x) == 0:
        warnings.warn("effective_sample_size: constant chain", RuntimeWarning, stacklevel=2)
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / max(tau, 1.0 / n)))
