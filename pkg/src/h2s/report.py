"""Reference-vs-alternative comparison of two chain stores.

For every shared parameter, both marginals are smoothed on one common grid
and compared by relative L1 and L2 distance; indexed families report the
mean over their indices.  The report also carries per-chain convergence
diagnostics and, when timings are supplied, the stage timing table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chains import ChainStore
from .diagnostics import effective_sample_size, split_rhat
from .errors import InputError
from .metrics import DEFAULT_GRID, kde, kde_span, relative_l1, relative_l2


def timing_table(stage1_seconds, stage2_seconds: float, full_seconds: float) -> dict:
    """Two-stage vs full timing, with groups assumed to run in parallel.

    The two-stage total is the mean stage-1 time per subset plus the
    stage-2 time.
    """
    s1 = [float(s) for s in stage1_seconds]
    if not s1:
        raise InputError("no stage-1 timings")
    avg = sum(s1) / len(s1)
    total = avg + float(stage2_seconds)
    frac = 1.0 - total / float(full_seconds)
    return {
        "stage1_avg_per_subset_s": avg,
        "stage1_max_per_subset_s": max(s1),
        "stage2_s": float(stage2_seconds),
        "two_stage_total_s": total,
        "full_total_s": float(full_seconds),
        "reduction_fraction": frac,
        "percent_reduction": 100.0 * frac,
    }


def check_timing(t: dict, rel: float = 1e-12) -> bool:
    """True when the derived timing fields agree with their inputs."""
    total = t["stage1_avg_per_subset_s"] + t["stage2_s"]
    frac = 1.0 - t["two_stage_total_s"] / t["full_total_s"]
    return (
        math.isclose(t["two_stage_total_s"], total, rel_tol=rel)
        and math.isclose(t["reduction_fraction"], frac, rel_tol=rel, abs_tol=rel)
        and math.isclose(t["percent_reduction"], 100.0 * frac, rel_tol=rel, abs_tol=rel)
    )


@dataclass
class ComparisonReport:
    distances: dict
    diagnostics: dict
    timing: dict | None = None
    curves: dict = field(default_factory=dict, repr=False)

    def family_table(self) -> dict:
        return {f: (d["l1"], d["l2"]) for f, d in self.distances.items()}

    def to_dict(self) -> dict:
        return {
            "distances": self.distances,
            "diagnostics": self.diagnostics,
            "timing": self.timing,
        }


def _chain_diagnostics(store: ChainStore, families) -> dict:
    out = {}
    for fam in families:
        per = {}
        for i, col in enumerate(store.columns[fam]):
            x = store.draws[fam][:, i]
            rhat = split_rhat(x) if x.size >= 4 and np.ptp(x) > 0 else None
            ess = effective_sample_size(x) if x.size >= 10 and np.ptp(x) > 0 else None
            per[col] = {"rhat": rhat, "ess": ess}
        rh = [v["rhat"] for v in per.values() if v["rhat"] is not None]
        es = [v["ess"] for v in per.values() if v["ess"] is not None]
        out[fam] = {
            "rhat_max": max(rh) if rh else None,
            "ess_min": min(es) if es else None,
            "per_index": per,
        }
    return out


def compare(
    ref: ChainStore,
    alt: ChainStore,
    grid_size: int = DEFAULT_GRID,
    timing: dict | None = None,
    keep_curves: bool = True,
) -> ComparisonReport:
    """Relative L1/L2 distances of ``alt`` marginals from ``ref`` marginals."""
    families = [f for f in ref.families if f in alt.draws]
    if not families:
        raise InputError("the two chain stores share no parameter family")
    distances, curves = {}, {}
    for fam in families:
        if ref.columns[fam] != alt.columns[fam]:
            raise InputError(f"family {fam}: column sets differ between the two stores")
        per = {}
        for i, col in enumerate(ref.columns[fam]):
            x, y = ref.draws[fam][:, i], alt.draws[fam][:, i]
            try:
                span = kde_span(x, y)
                p = kde(x, grid_size, span)
                q = kde(y, grid_size, span)
            except InputError as exc:
                per[col] = {"l1": None, "l2": None, "error": str(exc)}
                continue
            per[col] = {"l1": relative_l1(p, q), "l2": relative_l2(p, q)}
            if keep_curves:
                curves[col] = (p.grid, p.values, q.values)
        l1 = [v["l1"] for v in per.values() if v["l1"] is not None]
        l2 = [v["l2"] for v in per.values() if v["l2"] is not None]
        distances[fam] = {
            "l1": float(np.mean(l1)) if l1 else None,
            "l2": float(np.mean(l2)) if l2 else None,
            "n_indices": len(per),
            "per_index": per,
        }
    diagnostics = {
        "reference": _chain_diagnostics(ref, families),
        "alternative": _chain_diagnostics(alt, families),
    }
    return ComparisonReport(distances, diagnostics, timing, curves)
