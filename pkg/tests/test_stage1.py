from __future__ import annotations

import numpy as np
import pytest

import h2s.stage1 as stage1_mod
from h2s import GroupData, InputError, ModelSpec, SimConfig, simulate
from h2s.stage1 import Stage1Error, run_stage1_all, run_stage1_group, stage1_seed


def _detached_grid_moments(y, spec, n=801):
    """Mean and SD of theta under the detached posterior, by 2-D quadrature over (theta, log sigma2)."""
    p0, ps = spec.stage1_theta_prior, spec.prior_sigma2
    th = np.linspace(y.mean() - 4 * y.std(), y.mean() + 4 * y.std(), n)
    ls = np.linspace(np.log(y.var()) - 4, np.log(y.var()) + 4, n)
    s2 = np.exp(ls)[:, None]
    ssr = ((y[:, None] - th[None, :]) ** 2).sum(axis=0)[None, :]
    logp = (
        -0.5 * (th - p0.mean) ** 2 / p0.variance
        - (ps.shape + 1) * np.log(s2) - ps.rate / s2 + np.log(s2)  # IG prior times Jacobian
        - 0.5 * y.size * np.log(s2) - 0.5 * ssr / s2
    )
    w = np.exp(logp - logp.max())
    pt = w.sum(axis=0)
    pt /= pt.sum()
    m = float(pt @ th)
    return m, float(np.sqrt(pt @ (th - m) ** 2))


def test_bank_theta_matches_quadrature():
    y = np.random.default_rng(0).normal(25, 3, 20)
    spec = ModelSpec()
    bank = run_stage1_group(GroupData(4, values=y), spec, 50_000, 2000, seed=1)
    m, s = _detached_grid_moments(y, spec)
    assert bank.theta.mean() == pytest.approx(m, rel=0.02)
    assert bank.theta.std() == pytest.approx(s, rel=0.02)
    assert bank.A == 50_000 and bank.group_id == 4
    assert bank.meta["stage1_theta_prior"] == {"mean": 0.0, "variance": 1e6}


def test_constant_data_concentrates():
    bank = run_stage1_group(GroupData(1, values=[7.0] * 50), ModelSpec(), 2000, 200, seed=2)
    assert np.all(np.abs(bank.theta - 7.0) < 0.1)
    assert np.all(bank.sigma2 > 0) and bank.sigma2.mean() < 0.01


def test_depth4_bank_layout(small4):
    data, _, spec = small4
    bank = run_stage1_group(data[0], spec, 300, 50, seed=3)
    assert bank.columns == ["theta", "sigma2", "delta[1]", "delta[2]", "delta[3]",
                            "eta2[1]", "eta2[2]", "eta2[3]"]
    assert bank.meta["prior_eta2"] == {"shape": 0.1, "rate": 0.1}


def test_unequal_bank_sizes(small3):
    data, _, spec = small3
    banks = run_stage1_all(data, spec, [100, 500, 1000, 50], 20, master_seed=4)
    assert [b.A for b in banks] == [100, 500, 1000, 50]
    with pytest.raises(InputError):
        run_stage1_all(data, spec, [100, 200], 20, master_seed=4)


def test_thinning(small3):
    data, _, spec = small3
    a = run_stage1_group(data[0], spec, 100, 10, seed=5, thin=3)
    assert a.A == 100 and a.meta["thin"] == 3


def test_seeds_are_per_group_and_order_free(small3):
    data, _, spec = small3
    seeds = {stage1_seed(9, g.group_id) for g in data}
    assert len(seeds) == len(data)
    fwd = run_stage1_all(data, spec, 200, 20, master_seed=9)
    rev = run_stage1_all(data[::-1], spec, 200, 20, master_seed=9)
    by_id = {b.group_id: b for b in rev}
    assert all(b == by_id[b.group_id] for b in fwd)


def test_failures_reported_others_complete(small3):
    data, _, spec = small3
    bad = GroupData(99, cells={1: [1.0, 2.0]})
    with pytest.raises(Stage1Error) as info:
        run_stage1_all(list(data) + [bad], spec, 100, 10, master_seed=1, workers=2)
    assert set(info.value.failures) == {99}
    assert sorted(b.group_id for b in info.value.banks) == [g.group_id for g in data]
    assert "group 99" in str(info.value)


def test_each_task_touches_only_its_group(small3, monkeypatch):
    data, _, spec = small3
    seen = []
    real = stage1_mod.compute_stats

    def spy(group):
        seen.append(group.group_id)
        return real(group)

    monkeypatch.setattr(stage1_mod, "compute_stats", spy)
    banks = run_stage1_all(data, spec, 100, 10, master_seed=1)
    assert seen == [b.group_id for b in banks] == [g.group_id for g in data]


def test_bad_arguments(small3):
    data, _, spec = small3
    with pytest.raises(InputError):
        run_stage1_group(data[0], spec, 0, 10, seed=1)
    with pytest.raises(InputError):
        run_stage1_group(data[0], ModelSpec(depth=4), 10, 1, seed=1)
    with pytest.raises(InputError):
        run_stage1_all(data, spec, 10, 1, master_seed=1, workers=0)
