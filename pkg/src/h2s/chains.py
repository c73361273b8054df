"""Retained MCMC draws, keyed by parameter family.

On disk a store is a directory holding ``<family>.csv`` per family (one
column per indexed parameter, first line a ``#`` metadata comment, second
line the header) and ``metadata.json``.  Values are written with 17
significant digits so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, NumericalError
from .io import atomic_write_text, metadata_comment, read_metadata_comment

FAMILY_ORDER = ("mu", "tau2", "theta", "sigma2", "delta", "eta2")


def retained_count(T: int, burn_in: int, thin: int) -> int:
    return len(range(burn_in, T, thin))


def check_run_lengths(T: int, burn_in: int, thin: int):
    if not (isinstance(T, (int, np.integer)) and isinstance(burn_in, (int, np.integer))):
        raise InputError("T and burn_in must be integers")
    if not T > burn_in >= 0:
        raise InputError(f"need T > burn_in >= 0, got T={T}, burn_in={burn_in}")
    if thin < 1:
        raise InputError(f"thin must be >= 1, got {thin}")


@dataclass
class ChainStore:
    """Draws per family as ``(n_retained, n_columns)`` arrays."""

    draws: dict[str, np.ndarray]
    columns: dict[str, list[str]]
    T: int
    burn_in: int
    thin: int
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {v.shape[0] for v in self.draws.values()}
        if len(lengths) > 1:
            raise InputError(f"families have unequal lengths: {lengths}")
        for fam, arr in self.draws.items():
            if arr.ndim != 2 or arr.shape[1] != len(self.columns[fam]):
                raise InputError(f"family {fam}: shape {arr.shape} does not match its columns")
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"family {fam} contains non-finite draws")

    @property
    def families(self) -> list[str]:
        return [f for f in FAMILY_ORDER if f in self.draws] + sorted(
            f for f in self.draws if f not in FAMILY_ORDER
        )

    @property
    def n_retained(self) -> int:
        return next(iter(self.draws.values())).shape[0]

    def column(self, name: str) -> np.ndarray:
        for fam, cols in self.columns.items():
            if name in cols:
                return self.draws[fam][:, cols.index(name)]
        raise KeyError(name)

    def __getitem__(self, family: str) -> np.ndarray:
        return self.draws[family]

    def metadata(self) -> dict:
        return {
            "T": self.T,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "families": {f: self.columns[f] for f in self.families},
            **self.meta,
        }

    def save(self, directory, provenance: dict | None = None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        header_meta = dict(provenance or {})
        for fam in self.families:
            lines = [metadata_comment(header_meta), _csv_line(self.columns[fam])]
            arr = self.draws[fam]
            lines.extend(",".join(repr(float(x)) for x in row) for row in arr)
            atomic_write_text(d / f"{fam}.csv", "\n".join(lines) + "\n")
        meta = {"provenance": header_meta, **self.metadata()}
        atomic_write_text(d / "metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "ChainStore":
        d = Path(directory)
        meta_path = d / "metadata.json"
        try:
            meta = json.loads(meta_path.read_text())
        except FileNotFoundError:
            raise InputError(f"no chain metadata at {meta_path}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad chain metadata JSON: {exc}", path=meta_path) from None
        draws, columns = {}, {}
        for fam, cols in meta["families"].items():
            path = d / f"{fam}.csv"
            arr, header = _read_chain_csv(path)
            if header != cols:
                raise FormatError(f"header {header[:3]}... does not match metadata", path=path)
            draws[fam], columns[fam] = arr, header
        known = {"T", "burn_in", "thin", "seed", "families", "provenance"}
        extra = {k: v for k, v in meta.items() if k not in known}
        return cls(draws, columns, meta["T"], meta["burn_in"], meta["thin"], meta["seed"], extra)


def _csv_line(fields) -> str:
    # Cell columns such as "delta[1,2]" contain commas and get quoted.
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(fields)
    return buf.getvalue()


def _read_chain_csv(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"missing chain file {path}") from None
    lines = text.splitlines()
    if lines and lines[0].startswith("#"):
        read_metadata_comment(lines[0])
        lines = lines[1:]
    if not lines:
        raise FormatError("chain file has no header", path=path)
    header = next(csv.reader([lines[0]]))
    rows = []
    for lineno, line in enumerate(lines[1:], start=3):
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} fields", path=path)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value", path=path) from None
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return arr, header
