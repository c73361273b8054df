"""Synthetic datasets for the three- and four-level models."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .model import ChainState, GroupData
from .rng import TAG_SIMULATE, group_rng


@dataclass(frozen=True)
class SimConfig:
    depth: int = 3
    n_groups: int = 20
    per_group: int = 2000
    cells_per_group: int = 7
    per_cell: int = 500
    true_mu: float = 25.0
    true_tau2: float = 1.5
    sigma2_mean: float = 10.0
    sigma2_var: float = 1.0
    seed: int = 0
    per_group_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.depth not in (3, 4):
            raise InputError(f"depth must be 3 or 4, got {self.depth}")
        counts = {
            "n_groups": self.n_groups,
            "per_group": self.per_group,
            "cells_per_group": self.cells_per_group,
            "per_cell": self.per_cell,
        }
        for name, v in counts.items():
            if int(v) != v or v < 1:
                raise InputError(f"{name} must be a positive integer, got {v}")
        if self.per_group_sizes is not None:
            if len(self.per_group_sizes) != self.n_groups:
                raise InputError("per_group_sizes must have one entry per group")
            if any(int(m) != m or m < 1 for m in self.per_group_sizes):
                raise InputError("per_group_sizes entries must be positive integers")
        if not self.true_tau2 > 0:
            raise InputError(f"true_tau2 must be > 0, got {self.true_tau2}")
        if not self.sigma2_mean > 0:
            raise InputError(f"sigma2_mean must be > 0, got {self.sigma2_mean}")
        if not self.sigma2_var >= 0:
            raise InputError(f"sigma2_var must be >= 0, got {self.sigma2_var}")
        if not 0 <= self.seed < 2**64:
            raise InputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def group_size(self, index: int) -> int:
        if self.per_group_sizes is not None:
            return int(self.per_group_sizes[index])
        return self.per_group

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["per_group_sizes"] is not None:
            d["per_group_sizes"] = list(d["per_group_sizes"])
        return d


def positive_normal(rng: np.random.Generator, mean: float, var: float) -> float:
    """Normal draw with non-positive values rejected and redrawn."""
    sd = np.sqrt(var)
    for _ in range(10_000):
        x = float(rng.normal(mean, sd))
        if x > 0:
            return x
    raise InputError(f"could not draw a positive value from Normal({mean}, {var})")


def simulate_three_level(cfg: SimConfig) -> tuple[list[GroupData], ChainState]:
    """Groups 1..n with theta_i ~ N(mu, tau2), sigma2_i ~ N+(mean, var), y ~ N(theta_i, sigma2_i)."""
    if cfg.depth != 3:
        raise InputError("simulate_three_level requires depth 3")
    tau_sd = np.sqrt(cfg.true_tau2)
    groups, theta, sigma2 = [], {}, {}
    for idx in range(cfg.n_groups):
        gid = idx + 1
        rng = group_rng(cfg.seed, gid, TAG_SIMULATE)
        th = float(rng.normal(cfg.true_mu, tau_sd))
        s2 = positive_normal(rng, cfg.sigma2_mean, cfg.sigma2_var)
        y = rng.normal(th, np.sqrt(s2), size=cfg.group_size(idx))
        groups.append(GroupData(gid, values=y))
        theta[gid], sigma2[gid] = th, s2
    truth = ChainState(cfg.true_mu, cfg.true_tau2, theta=theta, sigma2=sigma2)
    return groups, truth


def simulate_four_level(cfg: SimConfig) -> tuple[list[GroupData], ChainState]:
    """Cell-structured data: groups 1..n, each with cells 1..m of ``per_cell`` observations.

    Cell means delta_ij ~ N(theta_i, sigma2_i) and cell variances
    eta2_ij ~ N+(sigma2_mean / 10, sigma2_var / 10).
    """
    if cfg.depth != 4:
        raise InputError("simulate_four_level requires depth 4")
    tau_sd = np.sqrt(cfg.true_tau2)
    groups = []
    theta, sigma2, delta, eta2 = {}, {}, {}, {}
    for idx in range(cfg.n_groups):
        gid = idx + 1
        rng = group_rng(cfg.seed, gid, TAG_SIMULATE)
        th = float(rng.normal(cfg.true_mu, tau_sd))
        s2 = positive_normal(rng, cfg.sigma2_mean, cfg.sigma2_var)
        cells = {}
        for j in range(1, cfg.cells_per_group + 1):
            d = float(rng.normal(th, np.sqrt(s2)))
            e2 = positive_normal(rng, cfg.sigma2_mean / 10.0, cfg.sigma2_var / 10.0)
            cells[j] = rng.normal(d, np.sqrt(e2), size=cfg.per_cell)
            delta[(gid, j)], eta2[(gid, j)] = d, e2
        groups.append(GroupData(gid, cells=cells))
        theta[gid], sigma2[gid] = th, s2
    truth = ChainState(cfg.true_mu, cfg.true_tau2, theta, sigma2, delta, eta2)
    return groups, truth


def simulate(cfg: SimConfig) -> tuple[list[GroupData], ChainState]:
    if cfg.depth == 3:
        return simulate_three_level(cfg)
    return simulate_four_level(cfg)


def dataset_depth(dataset: Sequence[GroupData]) -> int:
    if not dataset:
        raise InputError("dataset has no groups")
    depths = {g.depth for g in dataset}
    if len(depths) != 1:
        raise InputError("dataset mixes depth-3 and depth-4 groups")
    ids = [g.group_id for g in dataset]
    if len(set(ids)) != len(ids):
        raise InputError("dataset has duplicate group ids")
    return depths.pop()
