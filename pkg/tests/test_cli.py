from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from h2s.bank import load_bank
from h2s.chains import ChainStore
from h2s.cli import main


def run(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture
def sim3(tmp_path):
    out = tmp_path / "sim3"
    assert run("simulate", "--depth", 3, "--groups", 4, "--per-group", 120, "--seed", 42, "--out", out) == 0
    return out / "dataset.csv"


@pytest.fixture
def sim4(tmp_path):
    out = tmp_path / "sim4"
    assert run("simulate", "--depth", 4, "--groups", 3, "--cells", 3, "--per-cell", 30,
               "--seed", 5, "--out", out) == 0
    return out / "dataset.csv"


def _dir_bytes(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_simulate_outputs_and_rerun(tmp_path, sim3):
    truth = json.loads((sim3.parent / "truth.json").read_text())
    assert truth["truth"]["mu"] == 25.0 and truth["provenance"]["seed"] == 42
    assert set(truth["provenance"]) == {"tool", "version", "seed", "config_hash"}
    assert sim3.read_text().startswith("# {")
    again = tmp_path / "again"
    run("simulate", "--depth", 3, "--groups", 4, "--per-group", 120, "--seed", 42, "--out", again)
    assert _dir_bytes(again) == _dir_bytes(sim3.parent)


def test_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        run("simulate", "--depth", 3)
    assert info.value.code == 2
    assert "--groups" in capsys.readouterr().err


def test_ingest(sim3, sim4, tmp_path, capsys):
    assert run("ingest", "--data", sim3) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["depth"] == 3 and summary["n_groups"] == 4 and summary["n_obs"] == 480
    assert run("ingest", "--data", sim4, "--out", tmp_path / "s.json") == 0
    s4 = json.loads((tmp_path / "s.json").read_text())
    assert s4["depth"] == 4 and s4["groups"]["1"]["cells"] == 3


@pytest.mark.parametrize(
    "body,needle",
    [
        ("group_id,value\n1,2.0\n1,abc\n", "line 3"),
        ("group_id,value\n1,2.0\n2\n", "line 3"),
        ("grp,value\n1,2.0\n", "line 1"),
        ("group_id,cell_id,value\n1,x,2.0\n", "line 2"),
        ("group_id,value\n1,nan\n", "line 2"),
    ],
)
def test_malformed_csv(tmp_path, capsys, body, needle):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    assert run("ingest", "--data", p) == 3
    assert needle in capsys.readouterr().err
    assert run("full", "--data", p, "--out", tmp_path / "o") == 3


def test_full_depth4_all_families(sim4, tmp_path):
    out = tmp_path / "full4"
    assert run("full", "--data", sim4, "--out", out, "--T", 400, "--seed", 1) == 0
    store = ChainStore.load(out)
    assert store.families == ["mu", "tau2", "theta", "sigma2", "delta", "eta2"]
    assert store.burn_in == 40
    assert json.loads((out / "timing.json").read_text())["full_s"] > 0


def test_stage1_worker_count_does_not_matter(sim4, tmp_path):
    a, b = tmp_path / "w1", tmp_path / "w8"
    assert run("stage1", "--data", sim4, "--out", a, "--A", 300, "--seed", 7, "--workers", 1) == 0
    assert run("stage1", "--data", sim4, "--out", b, "--A", 300, "--seed", 7, "--workers", 8) == 0
    banks = sorted(a.glob("*.h2sbank"))
    assert len(banks) == 3
    for p in banks:
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_stage1_per_group_sizes(sim3, tmp_path):
    out = tmp_path / "banks"
    assert run("stage1", "--data", sim3, "--out", out, "--A", "100,200,300,400", "--seed", 1) == 0
    assert [load_bank(p).A for p in sorted(out.glob("*.h2sbank"))] == [100, 200, 300, 400]
    assert run("stage1", "--data", sim3, "--out", out, "--A", "100,200") == 3


def test_stage2_depth_mismatch(sim3, sim4, tmp_path, capsys):
    b3, b4 = tmp_path / "b3", tmp_path / "b4"
    run("stage1", "--data", sim3, "--out", b3, "--A", 100)
    run("stage1", "--data", sim4, "--out", b4, "--A", 100)
    (b4 / "bank_000001.h2sbank").replace(b3 / "bank_000001.h2sbank")
    assert run("stage2", "--banks", b3, "--out", tmp_path / "s2", "--T", 100) == 3
    assert "layout" in capsys.readouterr().err
    assert run("stage2", "--banks", tmp_path / "nothing", "--out", tmp_path / "s2") == 3


def test_stage2_rejects_corrupt_bank(sim3, tmp_path, capsys):
    b = tmp_path / "b"
    run("stage1", "--data", sim3, "--out", b, "--A", 100)
    p = b / "bank_000002.h2sbank"
    p.write_bytes(p.read_bytes()[:-3])
    assert run("stage2", "--banks", b, "--out", tmp_path / "s2", "--T", 100) == 3
    assert "bank_000002" in capsys.readouterr().err


def test_pipeline_compare_and_reports(sim3, tmp_path, capsys):
    full, banks, s2, rep = (tmp_path / n for n in ("full", "banks", "s2", "rep"))
    assert run("full", "--data", sim3, "--out", full, "--T", 3000, "--seed", 1) == 0
    assert run("stage1", "--data", sim3, "--out", banks, "--A", 3000, "--seed", 2) == 0
    assert run("stage2", "--banks", banks, "--out", s2, "--T", 3000, "--seed", 3) == 0
    mh = json.loads((s2 / "mh_stats.json").read_text())
    assert set(mh["groups"]) == {"1", "2", "3", "4"}
    assert run("compare", "--ref", full, "--alt", s2, "--out", rep) == 0
    report = json.loads((rep / "report.json").read_text())
    assert set(report["distances"]) == {"mu", "tau2", "theta", "sigma2"}
    t = report["timing"]
    assert t["percent_reduction"] == pytest.approx(100 * (1 - t["two_stage_total_s"] / t["full_total_s"]))
    curve = (rep / "densities" / "theta_3.csv").read_text().splitlines()
    assert curve[0] == "grid,p,q" and len(curve) == 513
    assert "mu" in capsys.readouterr().out
    assert run("compare", "--ref", s2, "--alt", s2, "--out", tmp_path / "self") == 0
    same = json.loads((tmp_path / "self" / "report.json").read_text())
    for fam in same["distances"].values():
        assert abs(fam["l1"]) <= 1e-12 and abs(fam["l2"]) <= 1e-12


def test_seed_precedence(sim3, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nseed = 11\nT = 300\nburn-in = 30\n")

    def seed_of(*extra):
        out = tmp_path / f"o{len(list(tmp_path.iterdir()))}"
        assert run("full", "--data", sim3, "--out", out, "--config", cfg, *extra) == 0
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["T"] == 300 and meta["burn_in"] == 30
        return meta["seed"]

    monkeypatch.delenv("H2S_SEED", raising=False)
    assert seed_of() == 11
    monkeypatch.setenv("H2S_SEED", "22")
    assert seed_of() == 22
    assert seed_of("--seed", 33) == 33


def test_config_errors(sim3, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_option = 1\n")
    assert run("full", "--data", sim3, "--out", tmp_path / "o", "--config", cfg) == 3
    cfg.write_text("T = many\n")
    assert run("full", "--data", sim3, "--out", tmp_path / "o", "--config", cfg) == 3
    assert run("full", "--data", sim3, "--out", tmp_path / "o", "--config", tmp_path / "nope") == 3


def test_bad_env_seed(sim3, tmp_path, monkeypatch):
    monkeypatch.setenv("H2S_SEED", "abc")
    assert run("full", "--data", sim3, "--out", tmp_path / "o", "--T", 100) == 3
    monkeypatch.setenv("H2S_SEED", "-4")
    assert run("stage1", "--data", sim3, "--out", tmp_path / "b", "--A", 100) == 3


def test_numerical_failure_exit_code(tmp_path):
    p = tmp_path / "huge.csv"
    p.write_text("group_id,value\n1,1e200\n1,-1e200\n1,3e200\n2,1.0\n2,2.0\n")
    with pytest.warns(RuntimeWarning):
        assert run("full", "--data", p, "--out", tmp_path / "o", "--T", 50) == 4


def test_bank_export(sim3, tmp_path, capsys):
    b = tmp_path / "b"
    run("stage1", "--data", sim3, "--out", b, "--A", 20)
    assert run("bank-export", "--bank", b / "bank_000001.h2sbank") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "theta,sigma2" and len(lines) == 21
    assert run("bank-export", "--bank", b / "bank_000001.h2sbank", "--out", tmp_path / "x.csv") == 0
    assert (tmp_path / "x.csv").read_text().splitlines() == lines


def test_stage2_uniform_mode_recorded(sim3, tmp_path):
    b, s = tmp_path / "b", tmp_path / "s"
    run("stage1", "--data", sim3, "--out", b, "--A", 200)
    assert run("stage2", "--banks", b, "--out", s, "--T", 200, "--mode", "uniform") == 0
    assert json.loads((s / "metadata.json").read_text())["ratio_mode"] == "uniform"
