from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2s import (
    GroupData,
    InputError,
    InvGammaPrior,
    ModelSpec,
    NormalPrior,
    SampleBank,
    SimConfig,
    compare,
    effective_sample_size,
    kde,
    log_accept_ratio,
    mh_group_update,
    relative_l1,
    run_full_gibbs,
    run_stage1_all,
    run_stage2,
    simulate,
)
from h2s.model import log_normal_density
from oracles import tiny_posterior_moments


@pytest.fixture(scope="module")
def banks3():
    data, _ = simulate(SimConfig(depth=3, n_groups=5, per_group=200, seed=11))
    spec = ModelSpec()
    return run_stage1_all(data, spec, 4000, 400, master_seed=12), spec


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100),
    st.floats(1e-3, 1e3),
)
def test_exact_and_uniform_differ_by_stage1_prior_term(cand, prev, mu, tau2):
    p1 = NormalPrior(0.0, 1e6)
    diff = log_accept_ratio(cand, prev, mu, tau2, p1, "exact") - log_accept_ratio(cand, prev, mu, tau2, p1, "uniform")
    prior_term = log_normal_density(prev, 0.0, 1e6) - log_normal_density(cand, 0.0, 1e6)
    # Both ratios subtract target log-densities that can reach -1e7; allow for that rounding.
    scale = abs(log_normal_density(cand, mu, tau2)) + abs(log_normal_density(prev, mu, tau2))
    assert diff == pytest.approx(prior_term, abs=1e-14 * scale + 1e-12)
    assert abs(diff) < 1e-2


def test_unknown_mode_rejected(banks3):
    banks, spec = banks3
    with pytest.raises(InputError):
        log_accept_ratio(1.0, 2.0, 0.0, 1.0, NormalPrior(0, 1), "other")
    with pytest.raises(InputError):
        run_stage2(banks, spec, 10, 1, mode="other")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_single_update_ignores_variance_column(seed, scale):
    rng = np.random.default_rng(seed)
    draws = np.column_stack([rng.normal(25, 1, 30), rng.uniform(1, 5, 30)])
    a = SampleBank(1, ["theta", "sigma2"], draws, {})
    b = SampleBank(1, ["theta", "sigma2"], draws * [1.0, scale], {})
    row = np.array([25.3, 2.0])
    ra, acc_a = mh_group_update(row, a, 25.0, 0.5, ModelSpec(), np.random.default_rng(seed))
    rb, acc_b = mh_group_update(row, b, 25.0, 0.5, ModelSpec(), np.random.default_rng(seed))
    assert acc_a == acc_b and ra[0] == rb[0]
    if acc_a:
        assert ra[1] * scale == pytest.approx(rb[1])


def test_accepted_row_moves_as_a_block():
    bank = SampleBank(1, ["theta", "sigma2"], np.array([[25.0, 3.0]]), {})
    row, acc = mh_group_update(np.array([25.0, 9.0]), bank, 25.0, 1.0, ModelSpec(), np.random.default_rng(0))
    assert acc and row.tolist() == [25.0, 3.0]
    with pytest.raises(InputError):
        mh_group_update(row, bank, 25.0, 0.0, ModelSpec(), np.random.default_rng(0))


def test_target_equals_proposal_reproduces_bank_marginal(banks3):
    banks, spec = banks3
    chains, mh = run_stage2(banks, spec, 20_000, 0, seed=1, fix_mu=0.0, fix_tau2=1e6)
    assert np.all(mh.acceptance_rate == 1.0)
    for i, b in enumerate(banks):
        assert relative_l1(kde(b.theta), kde(chains["theta"][:, i])) < 0.05


def test_single_row_banks(banks3):
    banks, spec = banks3
    tiny = [SampleBank(b.group_id, b.columns, b.draws[:1], b.meta) for b in banks]
    chains, mh = run_stage2(tiny, spec, 500, 50, seed=2)
    assert np.all(chains["theta"] == chains["theta"][0])
    assert np.all(mh.accepts <= mh.proposals)


def test_stats_and_meta(banks3):
    banks, spec = banks3
    chains, mh = run_stage2(banks, spec, 3000, 300, thin=2, seed=3)
    assert chains.n_retained == len(range(300, 3000, 2))
    assert np.all((0 < mh.acceptance_rate) & (mh.acceptance_rate < 1))
    d = mh.to_dict()
    assert d["groups"]["1"]["proposals"] == 3000
    assert d["groups"]["1"]["acceptance_rate"] == pytest.approx(d["groups"]["1"]["accepts"] / 3000)
    assert chains.meta["ratio_mode"] == "exact"
    assert chains.columns["theta"] == [f"theta[{b.group_id}]" for b in banks]


def test_theta_and_sigma2_come_from_the_same_bank_row(banks3):
    banks, spec = banks3
    chains, _ = run_stage2(banks, spec, 2000, 200, seed=4)
    rows = {(float(t), float(s)) for t, s in banks[2].draws}
    pairs = zip(chains["theta"][:, 2], chains["sigma2"][:, 2])
    assert all((float(t), float(s)) in rows for t, s in pairs)


def test_low_acceptance_warns(banks3, caplog):
    banks, spec = banks3
    with caplog.at_level(logging.WARNING, logger="h2s.stage2"):
        _, mh = run_stage2(banks, spec, 500, 50, seed=5, fix_mu=-50.0, fix_tau2=1e-4)
    assert mh.to_dict()["low_acceptance_groups"]
    assert "below 1%" in caplog.text


def test_layout_and_prior_mismatches_rejected(banks3, small4):
    banks, spec = banks3
    with pytest.raises(InputError, match="depth"):
        run_stage2(banks, ModelSpec(depth=4), 10, 1)
    data4, _, spec4 = small4
    banks4 = run_stage1_all(data4, spec4, 50, 5, master_seed=1)
    with pytest.raises(InputError):
        run_stage2(banks4, spec, 10, 1)
    with pytest.raises(InputError, match="prior_sigma2"):
        run_stage2(banks, ModelSpec(prior_sigma2=InvGammaPrior(1.0, 1.0)), 10, 1)
    with pytest.raises(InputError):
        run_stage2(banks + banks[:1], spec, 10, 1)
    with pytest.raises(InputError):
        run_stage2([], spec, 10, 1)


def test_deterministic(banks3):
    banks, spec = banks3
    a, ma = run_stage2(banks, spec, 1000, 100, seed=6)
    b, mb = run_stage2(banks, spec, 1000, 100, seed=6)
    assert all(a[f].tobytes() == b[f].tobytes() for f in a.families)
    assert np.array_equal(ma.accepts, mb.accepts)


@pytest.mark.parametrize("mode", ["exact", "uniform"])
def test_two_stage_matches_grid_oracle(mode):
    rng = np.random.default_rng(5)
    y1, y2 = rng.normal(24, 2, 6), rng.normal(26, 2, 6)
    spec = ModelSpec(hyper_tau2=InvGammaPrior(3.0, 3.0))
    want = tiny_posterior_moments(y1, y2, spec)
    data = [GroupData(1, values=y1), GroupData(2, values=y2)]
    banks = run_stage1_all(data, spec, 100_000, 2000, master_seed=2)
    chains, _ = run_stage2(banks, spec, 100_000, 2000, seed=3, mode=mode)
    for name, x in [("theta1", chains["theta"][:, 0]), ("log_tau2", np.log(chains["tau2"][:, 0]))]:
        m, s = want[name]
        ess = effective_sample_size(x)
        assert abs(x.mean() - m) < 5 * s / math.sqrt(ess), name
        assert abs(x.std() - s) < 5 * s / math.sqrt(2 * ess), name


def test_second_stage1_prior_scale():
    # Tighter detached prior (variance 1e4): the exact ratio still recovers the full posterior.
    data, _ = simulate(SimConfig(depth=3, n_groups=10, per_group=500, seed=21))
    spec = ModelSpec(stage1_theta_prior=NormalPrior(0.0, 1e4))
    full = run_full_gibbs(data, spec, 10_000, 1000, seed=22)
    banks = run_stage1_all(data, spec, 10_000, 1000, master_seed=23)
    assert banks[0].meta["stage1_theta_prior"]["variance"] == 1e4
    chains, _ = run_stage2(banks, spec, 10_000, 1000, seed=24)
    for fam, (l1, l2) in compare(full, chains, keep_curves=False).family_table().items():
        assert l1 <= 0.10 and l2 <= 0.10, fam
