"""Command-line entry point: ``h2s <subcommand> [options]``.

Settings come from flags, then a flat ``--config`` file, then built-in
defaults.  The seed additionally honours ``H2S_SEED`` (flag > env > file).
Exit codes: 0 ok, 2 usage, 3 input/format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .bank import bank_filename, export_bank_csv, load_bank, save_bank
from .chains import ChainStore
from .errors import DomainError, InputError, NumericalError
from .full import run_full_gibbs
from .io import atomic_write_text, provenance, read_config_file, read_dataset_csv, write_dataset_csv, write_json
from .model import InvGammaPrior, ModelSpec, NormalPrior, compute_stats
from .report import compare, timing_table
from .simulate import SimConfig, dataset_depth, simulate
from .stage1 import Stage1Error, run_stage1_all
from .stage2 import run_stage2

log = logging.getLogger("h2s")

EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL = 2, 3, 4
SEED_ENV = "H2S_SEED"
TIMING_FILE = "timing.json"

# Fallbacks when neither a flag nor the config file sets a value.
DEFAULTS = {
    "seed": 0,
    "per_group": 2000,
    "cells": 7,
    "per_cell": 500,
    "mu": 25.0,
    "tau2": 1.5,
    "sigma2_mean": 10.0,
    "sigma2_var": 1.0,
    "T": 20000,
    "A": "20000",
    "burn_in": None,
    "thin": 1,
    "workers": 1,
    "mode": "exact",
    "grid_size": 512,
    "mu_prior_mean": 0.0,
    "mu_prior_var": 1e6,
    "tau2_shape": 0.1,
    "tau2_rate": 0.1,
    "sigma2_shape": 0.01,
    "sigma2_rate": 0.01,
    "eta2_shape": 0.1,
    "eta2_rate": 0.1,
    "stage1_prior_mean": 0.0,
    "stage1_prior_var": 1e6,
}

REQUIRED = {
    "simulate": ["depth", "groups", "out"],
    "ingest": ["data"],
    "full": ["data", "out"],
    "stage1": ["data", "out"],
    "stage2": ["banks", "out"],
    "compare": ["ref", "alt", "out"],
    "bank-export": ["bank"],
}


def _add_model_options(p):
    g = p.add_argument_group("model priors")
    g.add_argument("--mu-prior-mean", type=float)
    g.add_argument("--mu-prior-var", type=float)
    g.add_argument("--tau2-shape", type=float)
    g.add_argument("--tau2-rate", type=float)
    g.add_argument("--sigma2-shape", type=float)
    g.add_argument("--sigma2-rate", type=float)
    g.add_argument("--eta2-shape", type=float)
    g.add_argument("--eta2-rate", type=float)
    g.add_argument("--stage1-prior-mean", type=float)
    g.add_argument("--stage1-prior-var", type=float)


def _add_run_options(p, with_T=True):
    if with_T:
        p.add_argument("--T", type=int, help="total iterations")
    p.add_argument("--burn-in", type=int, help="discarded iterations (default T/10)")
    p.add_argument("--thin", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file mirroring the flags")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="h2s", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--depth", type=int, choices=(3, 4))
    p.add_argument("--groups", type=int)
    p.add_argument("--per-group", type=int, help="observations per group (depth 3)")
    p.add_argument("--cells", type=int, help="cells per group (depth 4)")
    p.add_argument("--per-cell", type=int, help="observations per cell (depth 4)")
    p.add_argument("--mu", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--sigma2-mean", type=float)
    p.add_argument("--sigma2-var", type=float)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("ingest", parents=[common], help="validate a dataset CSV")
    p.add_argument("--data")
    p.add_argument("--depth", type=int, choices=(3, 4))
    p.add_argument("--out", help="optional summary JSON path")

    p = sub.add_parser("full", parents=[common], help="full-data Gibbs sampler")
    p.add_argument("--data")
    p.add_argument("--out", help="chain directory")
    _add_run_options(p)
    _add_model_options(p)

    p = sub.add_parser("stage1", parents=[common], help="detached per-group samplers")
    p.add_argument("--data")
    p.add_argument("--out", help="bank directory")
    p.add_argument("--A", help="draws per group: one integer or a comma list")
    p.add_argument("--workers", type=int)
    _add_run_options(p, with_T=False)
    _add_model_options(p)

    p = sub.add_parser("stage2", parents=[common], help="MH-within-Gibbs over the banks")
    p.add_argument("--banks", help="bank directory")
    p.add_argument("--out", help="chain directory")
    p.add_argument("--mode", choices=("exact", "uniform"))
    _add_run_options(p)
    _add_model_options(p)

    p = sub.add_parser("compare", parents=[common], help="distances between two chain stores")
    p.add_argument("--ref", help="reference chain directory")
    p.add_argument("--alt", help="alternative chain directory")
    p.add_argument("--out", help="report directory")
    p.add_argument("--grid-size", type=int)

    p = sub.add_parser("bank-export", parents=[common], help="dump a bank file as CSV")
    p.add_argument("--bank")
    p.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return sub.choices[command]


def _converters(parser: argparse.ArgumentParser, command: str) -> dict:
    acts = _subparser(parser, command)._actions
    return {a.dest: a.type or str for a in acts if a.dest != "help"}


def resolve(args, parser) -> argparse.Namespace:
    """Merge flag values over config-file values over defaults."""
    conv = _converters(parser, args.command)
    file_vals = read_config_file(args.config) if args.config else {}
    settings = dict(vars(args))
    for key, raw in file_vals.items():
        if key not in conv:
            raise InputError(f"config key {key!r} is not an option of {args.command}")
        if settings.get(key) is None:
            try:
                settings[key] = conv[key](raw)
            except ValueError:
                raise InputError(f"config key {key!r}: bad value {raw!r}") from None
    seed_flag = vars(args).get("seed")
    env = os.environ.get(SEED_ENV)
    if seed_flag is None and env is not None:
        try:
            settings["seed"] = int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    for key, val in DEFAULTS.items():
        if key in conv and settings.get(key) is None:
            settings[key] = val
    missing = [k for k in REQUIRED[args.command] if settings.get(k) is None]
    if missing:
        _subparser(parser, args.command).error(f"missing required option(s): "
                     + ", ".join("--" + m.replace("_", "-") for m in missing))
    return argparse.Namespace(**settings)


def _spec(a, depth: int) -> ModelSpec:
    return ModelSpec(
        depth=depth,
        hyper_mu=NormalPrior(a.mu_prior_mean, a.mu_prior_var),
        hyper_tau2=InvGammaPrior(a.tau2_shape, a.tau2_rate),
        prior_sigma2=InvGammaPrior(a.sigma2_shape, a.sigma2_rate),
        prior_eta2=InvGammaPrior(a.eta2_shape, a.eta2_rate),
        stage1_theta_prior=NormalPrior(a.stage1_prior_mean, a.stage1_prior_var),
    )


def _config_of(a) -> dict:
    # Output locations do not change results, so they stay out of the hash.
    skip = {"config", "verbose", "command", "out"}
    return {k: v for k, v in sorted(vars(a).items()) if k not in skip}


def _burn_in(a, T: int) -> int:
    return T // 10 if a.burn_in is None else a.burn_in


def cmd_simulate(a) -> int:
    cfg = SimConfig(
        depth=a.depth,
        n_groups=a.groups,
        per_group=a.per_group,
        cells_per_group=a.cells,
        per_cell=a.per_cell,
        true_mu=a.mu,
        true_tau2=a.tau2,
        sigma2_mean=a.sigma2_mean,
        sigma2_var=a.sigma2_var,
        seed=a.seed,
    )
    dataset, truth = simulate(cfg)
    prov = provenance(a.seed, _config_of(a))
    out = Path(a.out)
    write_dataset_csv(out / "dataset.csv", dataset, meta=prov)
    write_json(out / "truth.json", {"provenance": prov, "config": cfg.to_dict(), "truth": truth.to_dict()})
    log.info("wrote %d groups to %s", len(dataset), out)
    return 0


def _summary(dataset) -> dict:
    depth = dataset_depth(dataset)
    groups = {}
    for g in dataset:
        if depth == 3:
            st = compute_stats(g)
            groups[str(g.group_id)] = {"n": st.count, "mean": st.mean}
        else:
            cells = compute_stats(g)
            groups[str(g.group_id)] = {
                "n": sum(s.count for s in cells.values()),
                "cells": len(cells),
            }
    return {"depth": depth, "n_groups": len(dataset), "n_obs": sum(g.n_obs for g in dataset), "groups": groups}


def cmd_ingest(a) -> int:
    summary = _summary(read_dataset_csv(a.data, a.depth))
    text = json.dumps(summary, indent=2, sort_keys=True)
    if a.out:
        write_json(a.out, summary)
    else:
        print(text)
    return 0


def cmd_full(a) -> int:
    dataset = read_dataset_csv(a.data)
    spec = _spec(a, dataset_depth(dataset))
    burn = _burn_in(a, a.T)
    t0 = time.perf_counter()
    store = run_full_gibbs(dataset, spec, a.T, burn, a.thin, seed=a.seed)
    elapsed = time.perf_counter() - t0
    store.save(a.out, provenance(a.seed, _config_of(a)))
    write_json(Path(a.out) / TIMING_FILE, {"full_s": elapsed})
    log.info("full sampler: %d draws in %.2fs", store.n_retained, elapsed)
    return 0


def _parse_A(text: str, n: int):
    parts = [p for p in str(text).split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise InputError(f"--A must be integers, got {text!r}") from None
    if len(vals) == 1:
        return vals[0]
    if len(vals) != n:
        raise InputError(f"--A lists {len(vals)} values for {n} groups")
    return vals


def cmd_stage1(a) -> int:
    dataset = read_dataset_csv(a.data)
    spec = _spec(a, dataset_depth(dataset))
    A = _parse_A(a.A, len(dataset))
    burn = a.burn_in if a.burn_in is not None else (A if isinstance(A, int) else max(A)) // 10
    out = Path(a.out)
    try:
        banks = run_stage1_all(dataset, spec, A, burn, a.seed, workers=a.workers, thin=a.thin)
    except Stage1Error as exc:
        for b in exc.banks:
            save_bank(b, out / bank_filename(b.group_id))
        raise
    for b in banks:
        save_bank(b, out / bank_filename(b.group_id))
    write_json(out / TIMING_FILE, {"stage1_s": {str(b.group_id): b.wall_time for b in banks}})
    log.info("stage 1: %d banks written to %s", len(banks), out)
    return 0


def _load_banks(directory):
    d = Path(directory)
    if not d.is_dir():
        raise InputError(f"bank directory not found: {d}")
    paths = sorted(d.glob("bank_*.h2sbank"))
    if not paths:
        raise InputError(f"no bank files in {d}")
    return [load_bank(p) for p in paths]


def cmd_stage2(a) -> int:
    banks = _load_banks(a.banks)
    spec = _spec(a, banks[0].depth)
    burn = _burn_in(a, a.T)
    t0 = time.perf_counter()
    store, stats = run_stage2(banks, spec, a.T, burn, a.thin, seed=a.seed, mode=a.mode)
    elapsed = time.perf_counter() - t0
    out = Path(a.out)
    store.save(out, provenance(a.seed, _config_of(a)))
    write_json(out / "mh_stats.json", stats.to_dict())
    timing = {"stage2_s": elapsed}
    s1_path = Path(a.banks) / TIMING_FILE
    if s1_path.exists():
        timing["stage1_s"] = json.loads(s1_path.read_text()).get("stage1_s", {})
    write_json(out / TIMING_FILE, timing)
    log.info("stage 2: mean acceptance %.3f in %.2fs", float(stats.acceptance_rate.mean()), elapsed)
    return 0


def _read_timing(directory) -> dict:
    p = Path(directory) / TIMING_FILE
    return json.loads(p.read_text()) if p.exists() else {}


def _density_filename(col: str) -> str:
    return col.replace("[", "_").replace("]", "").replace(",", "_") + ".csv"


def cmd_compare(a) -> int:
    ref, alt = ChainStore.load(a.ref), ChainStore.load(a.alt)
    tr, ta = _read_timing(a.ref), _read_timing(a.alt)
    timing = None
    if "full_s" in tr and "stage2_s" in ta and ta.get("stage1_s"):
        timing = timing_table(ta["stage1_s"].values(), ta["stage2_s"], tr["full_s"])
    rep = compare(ref, alt, grid_size=a.grid_size, timing=timing)
    out = Path(a.out)
    body = {"provenance": provenance(a.seed, _config_of(a)), **rep.to_dict()}
    write_json(out / "report.json", body)
    for col, (grid, p, q) in rep.curves.items():
        lines = ["grid,p,q"] + [f"{x!r},{y!r},{z!r}" for x, y, z in zip(grid.tolist(), p.tolist(), q.tolist())]
        atomic_write_text(out / "densities" / _density_filename(col), "\n".join(lines) + "\n")
    for fam, (l1, l2) in rep.family_table().items():
        print(f"{fam:8s} d1={_fmt(l1)} d2={_fmt(l2)}")
    if timing:
        print(f"two-stage {timing['two_stage_total_s']:.2f}s vs full {timing['full_total_s']:.2f}s "
              f"({timing['percent_reduction']:.1f}% reduction)")
    return 0


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


def cmd_bank_export(a) -> int:
    text = export_bank_csv(load_bank(a.bank))
    if a.out:
        atomic_write_text(a.out, text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "full": cmd_full,
    "stage1": cmd_stage1,
    "stage2": cmd_stage2,
    "compare": cmd_compare,
    "bank-export": cmd_bank_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve(args, parser)
        return COMMANDS[args.command](settings)
    except BrokenPipeError:
        # Output piped into a closed reader (e.g. ``| head``).
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except NumericalError as exc:
        print(f"h2s: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, DomainError, Stage1Error) as exc:
        print(f"h2s: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
